#pragma once

#include <cstddef>
#include <filesystem>
#include <map>
#include <memory>
#include <optional>
#include <set>
#include <string>
#include <string_view>
#include <vector>

#include "equacode/corpus.hpp"

namespace equacode {

class Endpoint;

/// Tool binding that asks the target model to describe the tools itself.
inline constexpr std::string_view kModelDescribedTools = "model-described";

/// Text substituted into the C slot when the tools are model-described.
inline constexpr std::string_view kModelDescribedToolsText = "the tools needed for the task";

/// Bindings of the textual equation B + C + x = A for one query.
struct Decomposition {
  std::string query_a;
  std::string subject_b;
  std::string tool_c{kModelDescribedTools};
  std::string unknown_label = "x";

  bool tools_model_described() const { return tool_c == kModelDescribedTools; }
  /// Throws UsageError if A, B or the unknown label is empty.
  void validate() const;

  friend bool operator==(const Decomposition&, const Decomposition&) = default;
};

enum class VariantKind {
  kStsa,
  kEquation,
  kCode,
  kEquaCode,
  kCaesar,
  kBase64,
  kMorse,
  kUnicodeEscape,
  kFlip,
};

struct TransformVariant {
  VariantKind kind = VariantKind::kEquaCode;
  int caesar_shift = 0;  // only meaningful for kCaesar

  static TransformVariant caesar(int shift);
  static TransformVariant of(VariantKind kind);
  /// Accepts the names produced by name(): "stsa", "equation", "code",
  /// "equacode", "caesar" (shift 3), "caesar-<k>", "base64", "morse",
  /// "unicode", "flip".
  static TransformVariant parse(std::string_view name);

  /// Throws UsageError when parameters do not fit the kind.
  void validate() const;
  bool is_encoding() const;
  /// Stable machine name, e.g. "equacode" or "caesar-3".
  std::string name() const;
  /// Table label, e.g. "EquaCode" or "Caesar-3".
  std::string display_name() const;

  friend bool operator==(const TransformVariant&, const TransformVariant&) = default;
};

/// Where a slot value landed in the rendered text.
struct SlotSpan {
  std::string slot;
  std::size_t offset = 0;
  std::size_t length = 0;

  friend bool operator==(const SlotSpan&, const SlotSpan&) = default;
};

struct AttackPrompt {
  TransformVariant variant;
  std::string rendered;
  std::optional<Decomposition> decomposition;
  std::string template_version;
  std::string query_id;
  std::vector<SlotSpan> slots;
};

/// A parsed template. Slots are written {{NAME}}; a conditional block is
/// {{?FLAG}} ... {{/FLAG}} and is kept only when FLAG is set at render time.
/// Names outside the allowed sets are rejected at parse time.
class TextTemplate {
 public:
  TextTemplate(std::string_view name, std::string_view source, const std::set<std::string>& allowed_slots,
               const std::set<std::string>& allowed_flags = {});

  struct Rendered {
    std::string text;
    std::vector<SlotSpan> slots;
  };

  Rendered render(const std::map<std::string, std::string>& values,
                  const std::set<std::string>& flags = {}) const;

  const std::string& name() const noexcept { return name_; }
  const std::string& source() const noexcept { return source_; }

 private:
  struct Piece {
    enum class Type { kLiteral, kSlot, kOpen, kClose } type;
    std::string text;
  };
  std::string name_;
  std::string source_;
  std::vector<Piece> pieces_;
};

/// The versioned prompt texts. The version is a prefix of the SHA-256 over
/// every transform template, so any wording change yields a new version.
class TemplateSet {
 public:
  /// Templates compiled into the library.
  static const TemplateSet& builtin();
  /// Loads the same file names from a directory; throws DataError on a missing
  /// file or an unknown slot.
  static TemplateSet load_directory(const std::filesystem::path& dir);

  const TextTemplate& get(std::string_view name) const;
  const std::string& version() const noexcept { return version_; }
  const std::string& judge_version() const noexcept { return judge_version_; }

  /// File names making up a template set.
  static const std::vector<std::string>& file_names();

 private:
  explicit TemplateSet(const std::map<std::string, std::string>& sources);

  std::map<std::string, TextTemplate, std::less<>> templates_;
  std::string version_;
  std::string judge_version_;
};

AttackPrompt render_equation(const Decomposition& d, const TemplateSet& templates = TemplateSet::builtin());
AttackPrompt render_code(const Decomposition& d, const TemplateSet& templates = TemplateSet::builtin());
AttackPrompt render_equacode(const Decomposition& d, const TemplateSet& templates = TemplateSet::builtin());
AttackPrompt render_stsa(const MaliciousQuery& query, std::string_view persona,
                         const TemplateSet& templates = TemplateSet::builtin());

/// Encoding baselines. Caesar shifts ASCII letters and keeps case; Base64 is
/// the standard padded alphabet over the UTF-8 bytes; Morse covers letters
/// and digits, one space between letters and " / " between words; Unicode
/// escape renders every code point as U+XXXX separated by spaces; Flip
/// reverses the code point order.
std::string encode_baseline(std::string_view text, const TransformVariant& variant);

std::string caesar_shift(std::string_view text, int shift);
std::string base64_encode(std::string_view bytes);
/// Throws DataError on invalid input.
std::string base64_decode(std::string_view text);
std::string morse_encode(std::string_view text);
std::string unicode_escape(std::string_view text);
std::string flip_text(std::string_view text);

enum class DecompositionPolicy { kStatic, kLlmAssisted };

struct DecomposeOptions {
  DecompositionPolicy policy = DecompositionPolicy::kStatic;
  std::string persona = "Mark";
  std::string unknown_label = "x";
  Endpoint* client = nullptr;  // auxiliary model for kLlmAssisted
  const TemplateSet* templates = nullptr;
};

/// Static policy: B = persona, C = model-described, A = query text.
/// LLM-assisted: B and C come from one auxiliary call; any failure falls back
/// to the static bindings with a warning.
Decomposition decompose(const MaliciousQuery& query, const DecomposeOptions& options = {});

/// Parses "B: <subject> | C: <tools>" from an auxiliary model reply.
std::optional<std::pair<std::string, std::string>> parse_decomposition_reply(std::string_view reply);

struct TransformOptions {
  DecomposeOptions decompose;
  const TemplateSet* templates = nullptr;
};

/// Renders any variant for a query. Encoding variants encode the query text.
AttackPrompt render_prompt(const MaliciousQuery& query, const TransformVariant& variant,
                           const TransformOptions& options = {});

}  // namespace equacode
