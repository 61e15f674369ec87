#include "equacode/transform.hpp"

#include <spdlog/spdlog.h>

#include <array>
#include <cctype>
#include <charconv>
#include <regex>

#include "equacode/client.hpp"
#include "equacode/error.hpp"
#include "equacode/util.hpp"

namespace equacode {

void Decomposition::validate() const {
  if (trim(query_a).empty()) throw UsageError("decomposition: empty query A");
  if (trim(subject_b).empty()) throw UsageError("decomposition: empty subject B");
  if (trim(unknown_label).empty()) throw UsageError("decomposition: empty unknown label");
  if (trim(tool_c).empty()) throw UsageError("decomposition: empty tool C");
}

// ---------------------------------------------------------------------------
// Variants

TransformVariant TransformVariant::caesar(int shift) {
  TransformVariant v{VariantKind::kCaesar, shift};
  v.validate();
  return v;
}

TransformVariant TransformVariant::of(VariantKind kind) {
  if (kind == VariantKind::kCaesar) return caesar(3);
  return TransformVariant{kind, 0};
}

TransformVariant TransformVariant::parse(std::string_view name) {
  const std::string lower = to_lower_ascii(trim(name));
  if (lower == "stsa") return of(VariantKind::kStsa);
  if (lower == "equation") return of(VariantKind::kEquation);
  if (lower == "code") return of(VariantKind::kCode);
  if (lower == "equacode") return of(VariantKind::kEquaCode);
  if (lower == "base64") return of(VariantKind::kBase64);
  if (lower == "morse") return of(VariantKind::kMorse);
  if (lower == "unicode") return of(VariantKind::kUnicodeEscape);
  if (lower == "flip") return of(VariantKind::kFlip);
  if (lower == "caesar") return caesar(3);
  if (lower.rfind("caesar-", 0) == 0) {
    int shift = 0;
    const char* begin = lower.data() + 7;
    const char* end = lower.data() + lower.size();
    auto [ptr, ec] = std::from_chars(begin, end, shift);
    if (ec != std::errc() || ptr != end) throw UsageError("invalid Caesar variant '" + std::string(name) + "'");
    return caesar(shift);
  }
  throw UsageError("unknown variant '" + std::string(name) + "'");
}

void TransformVariant::validate() const {
  if (kind == VariantKind::kCaesar) {
    if (caesar_shift < 1 || caesar_shift > 25) {
      throw UsageError("Caesar shift must be in 1..25, got " + std::to_string(caesar_shift));
    }
  } else if (caesar_shift != 0) {
    throw UsageError("variant " + name() + " takes no parameters");
  }
}

bool TransformVariant::is_encoding() const {
  switch (kind) {
    case VariantKind::kCaesar:
    case VariantKind::kBase64:
    case VariantKind::kMorse:
    case VariantKind::kUnicodeEscape:
    case VariantKind::kFlip:
      return true;
    default:
      return false;
  }
}

std::string TransformVariant::name() const {
  switch (kind) {
    case VariantKind::kStsa:
      return "stsa";
    case VariantKind::kEquation:
      return "equation";
    case VariantKind::kCode:
      return "code";
    case VariantKind::kEquaCode:
      return "equacode";
    case VariantKind::kCaesar:
      return "caesar-" + std::to_string(caesar_shift);
    case VariantKind::kBase64:
      return "base64";
    case VariantKind::kMorse:
      return "morse";
    case VariantKind::kUnicodeEscape:
      return "unicode";
    case VariantKind::kFlip:
      return "flip";
  }
  return "unknown";
}

std::string TransformVariant::display_name() const {
  switch (kind) {
    case VariantKind::kStsa:
      return "STSA";
    case VariantKind::kEquation:
      return "Equation";
    case VariantKind::kCode:
      return "Code";
    case VariantKind::kEquaCode:
      return "EquaCode";
    case VariantKind::kCaesar:
      return "Caesar-" + std::to_string(caesar_shift);
    case VariantKind::kBase64:
      return "Base64";
    case VariantKind::kMorse:
      return "Morse";
    case VariantKind::kUnicodeEscape:
      return "Unicode";
    case VariantKind::kFlip:
      return "Flip";
  }
  return "Unknown";
}

// ---------------------------------------------------------------------------
// Rendering

namespace {

std::map<std::string, std::string> bindings(const Decomposition& d) {
  return {{"A", d.query_a},
          {"B", d.subject_b},
          {"C", d.tools_model_described() ? std::string(kModelDescribedToolsText) : d.tool_c},
          {"X", d.unknown_label}};
}

// Values placed inside Python string literals.
std::string python_escape(std::string_view text) {
  std::string out;
  out.reserve(text.size());
  for (char c : text) {
    switch (c) {
      case '\\':
        out += "\\\\";
        break;
      case '"':
        out += "\\\"";
        break;
      case '\n':
        out += "\\n";
        break;
      case '\r':
        out += "\\r";
        break;
      case '\t':
        out += "\\t";
        break;
      default:
        out.push_back(c);
    }
  }
  return out;
}

std::set<std::string> flags(const Decomposition& d) {
  if (d.tools_model_described()) return {"MODEL_DESCRIBED"};
  return {};
}

AttackPrompt compose(const Decomposition& d, const TemplateSet& templates, VariantKind kind,
                     std::initializer_list<std::string_view> parts) {
  d.validate();
  AttackPrompt prompt;
  prompt.variant = TransformVariant::of(kind);
  prompt.decomposition = d;
  prompt.template_version = templates.version();
  const auto values = bindings(d);
  auto code_values = values;
  for (auto& [slot, value] : code_values) value = python_escape(value);
  const auto set_flags = flags(d);
  for (std::string_view part : parts) {
    auto rendered = templates.get(part).render(part == "code_block.txt" ? code_values : values, set_flags);
    for (auto& span : rendered.slots) {
      span.offset += prompt.rendered.size();
      prompt.slots.push_back(std::move(span));
    }
    prompt.rendered += rendered.text;
  }
  return prompt;
}

}  // namespace

AttackPrompt render_equation(const Decomposition& d, const TemplateSet& templates) {
  return compose(d, templates, VariantKind::kEquation, {"equation_block.txt", "equation_ask.txt"});
}

AttackPrompt render_code(const Decomposition& d, const TemplateSet& templates) {
  return compose(d, templates, VariantKind::kCode, {"code_intro.txt", "code_block.txt", "code_ask.txt"});
}

AttackPrompt render_equacode(const Decomposition& d, const TemplateSet& templates) {
  return compose(d, templates, VariantKind::kEquaCode,
                 {"equation_block.txt", "equacode_bridge.txt", "code_block.txt", "equacode_ask.txt"});
}

AttackPrompt render_stsa(const MaliciousQuery& query, std::string_view persona, const TemplateSet& templates) {
  if (trim(query.text).empty()) throw UsageError("render_stsa: empty query");
  if (trim(persona).empty()) throw UsageError("render_stsa: empty persona");
  auto rendered = templates.get("stsa.txt").render({{"A", query.text}, {"B", std::string(persona)}});
  AttackPrompt prompt;
  prompt.variant = TransformVariant::of(VariantKind::kStsa);
  prompt.rendered = std::move(rendered.text);
  prompt.slots = std::move(rendered.slots);
  prompt.template_version = templates.version();
  prompt.query_id = query.id;
  return prompt;
}

// ---------------------------------------------------------------------------
// Encodings

std::string caesar_shift(std::string_view text, int shift) {
  const int k = ((shift % 26) + 26) % 26;
  std::string out(text);
  for (char& c : out) {
    if (c >= 'a' && c <= 'z') {
      c = static_cast<char>('a' + (c - 'a' + k) % 26);
    } else if (c >= 'A' && c <= 'Z') {
      c = static_cast<char>('A' + (c - 'A' + k) % 26);
    }
  }
  return out;
}

namespace {
constexpr std::string_view kBase64Alphabet =
    "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
}

std::string base64_encode(std::string_view bytes) {
  std::string out;
  out.reserve((bytes.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 2 < bytes.size(); i += 3) {
    const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8) |
                            static_cast<unsigned char>(bytes[i + 2]);
    out.push_back(kBase64Alphabet[(n >> 18) & 63]);
    out.push_back(kBase64Alphabet[(n >> 12) & 63]);
    out.push_back(kBase64Alphabet[(n >> 6) & 63]);
    out.push_back(kBase64Alphabet[n & 63]);
  }
  const std::size_t rest = bytes.size() - i;
  if (rest == 1) {
    const std::uint32_t n = static_cast<unsigned char>(bytes[i]) << 16;
    out.push_back(kBase64Alphabet[(n >> 18) & 63]);
    out.push_back(kBase64Alphabet[(n >> 12) & 63]);
    out += "==";
  } else if (rest == 2) {
    const std::uint32_t n = (static_cast<unsigned char>(bytes[i]) << 16) |
                            (static_cast<unsigned char>(bytes[i + 1]) << 8);
    out.push_back(kBase64Alphabet[(n >> 18) & 63]);
    out.push_back(kBase64Alphabet[(n >> 12) & 63]);
    out.push_back(kBase64Alphabet[(n >> 6) & 63]);
    out.push_back('=');
  }
  return out;
}

std::string base64_decode(std::string_view text) {
  if (text.size() % 4 != 0) throw DataError("base64: length is not a multiple of 4");
  std::array<int, 256> table{};
  table.fill(-1);
  for (std::size_t i = 0; i < kBase64Alphabet.size(); ++i) {
    table[static_cast<unsigned char>(kBase64Alphabet[i])] = static_cast<int>(i);
  }
  std::string out;
  out.reserve(text.size() / 4 * 3);
  for (std::size_t i = 0; i < text.size(); i += 4) {
    int values[4];
    int padding = 0;
    for (int k = 0; k < 4; ++k) {
      const char c = text[i + k];
      if (c == '=' && i + 4 == text.size() && k >= 2) {
        values[k] = 0;
        ++padding;
        continue;
      }
      if (padding > 0) throw DataError("base64: data after padding");
      values[k] = table[static_cast<unsigned char>(c)];
      if (values[k] < 0) throw DataError("base64: invalid character");
    }
    const std::uint32_t n = (values[0] << 18) | (values[1] << 12) | (values[2] << 6) | values[3];
    out.push_back(static_cast<char>((n >> 16) & 0xff));
    if (padding < 2) out.push_back(static_cast<char>((n >> 8) & 0xff));
    if (padding < 1) out.push_back(static_cast<char>(n & 0xff));
  }
  return out;
}

namespace {

std::string_view morse_for(char c) {
  static constexpr std::array<std::string_view, 26> kLetters = {
      ".-",   "-...", "-.-.", "-..",  ".",   "..-.", "--.",  "....", "..",
      ".---", "-.-",  ".-..", "--",   "-.",  "---",  ".--.", "--.-", ".-.",
      "...",  "-",    "..-",  "...-", ".--", "-..-", "-.--", "--.."};
  static constexpr std::array<std::string_view, 10> kDigits = {
      "-----", ".----", "..---", "...--", "....-", ".....", "-....", "--...", "---..", "----."};
  if (c >= 'a' && c <= 'z') return kLetters[c - 'a'];
  if (c >= 'A' && c <= 'Z') return kLetters[c - 'A'];
  if (c >= '0' && c <= '9') return kDigits[c - '0'];
  return {};
}

}  // namespace

std::string morse_encode(std::string_view text) {
  std::string out;
  std::size_t dropped = 0;
  for (const auto& word : split_whitespace(text)) {
    std::string encoded;
    for (char c : word) {
      const auto code = morse_for(c);
      if (code.empty()) {
        ++dropped;
        continue;
      }
      if (!encoded.empty()) encoded.push_back(' ');
      encoded += code;
    }
    if (encoded.empty()) continue;
    if (!out.empty()) out += " / ";
    out += encoded;
  }
  if (dropped > 0) spdlog::warn("morse: dropped {} unsupported character(s)", dropped);
  return out;
}

std::string unicode_escape(std::string_view text) {
  std::string out;
  char buffer[16];
  for (char32_t cp : decode_utf8(text)) {
    if (!out.empty()) out.push_back(' ');
    std::snprintf(buffer, sizeof(buffer), "U+%04X", static_cast<unsigned>(cp));
    out += buffer;
  }
  return out;
}

std::string flip_text(std::string_view text) {
  auto code_points = decode_utf8(text);
  std::reverse(code_points.begin(), code_points.end());
  return encode_utf8(code_points);
}

std::string encode_baseline(std::string_view text, const TransformVariant& variant) {
  variant.validate();
  switch (variant.kind) {
    case VariantKind::kCaesar:
      return caesar_shift(text, variant.caesar_shift);
    case VariantKind::kBase64:
      return base64_encode(text);
    case VariantKind::kMorse:
      return morse_encode(text);
    case VariantKind::kUnicodeEscape:
      return unicode_escape(text);
    case VariantKind::kFlip:
      return flip_text(text);
    default:
      throw UsageError("variant " + variant.name() + " is not an encoding baseline");
  }
}

// ---------------------------------------------------------------------------
// Decomposition

std::optional<std::pair<std::string, std::string>> parse_decomposition_reply(std::string_view reply) {
  static const std::regex pattern(R"(B\s*:\s*([^|\n]+?)\s*\|\s*C\s*:\s*([^\n]+))");
  std::cmatch match;
  if (!std::regex_search(reply.data(), reply.data() + reply.size(), match, pattern)) return std::nullopt;
  std::string subject = trim(match[1].str());
  std::string tools = trim(match[2].str());
  if (subject.empty() || tools.empty()) return std::nullopt;
  return std::make_pair(std::move(subject), std::move(tools));
}

Decomposition decompose(const MaliciousQuery& query, const DecomposeOptions& options) {
  if (trim(query.text).empty()) throw UsageError("cannot decompose an empty query");
  Decomposition d;
  d.query_a = query.text;
  d.subject_b = options.persona;
  d.tool_c = std::string(kModelDescribedTools);
  d.unknown_label = options.unknown_label;

  if (options.policy == DecompositionPolicy::kLlmAssisted) {
    if (options.client == nullptr) throw UsageError("llm-assisted decomposition needs a client endpoint");
    const TemplateSet& templates = options.templates ? *options.templates : TemplateSet::builtin();
    ChatRequest request;
    request.model_id = options.client->config().model_id;
    request.temperature = 0.0;
    request.messages.push_back(
        {Role::kUser, templates.get("decompose.txt").render({{"A", query.text}}).text});
    try {
      const ChatResponse response = send_chat(*options.client, request);
      if (auto parsed = parse_decomposition_reply(response.content)) {
        d.subject_b = std::move(parsed->first);
        d.tool_c = std::move(parsed->second);
      } else {
        spdlog::warn("decompose {}: could not parse auxiliary reply, using static bindings", query.id);
      }
    } catch (const EndpointError& e) {
      spdlog::warn("decompose {}: auxiliary call failed ({}), using static bindings", query.id, e.what());
    }
  }
  d.validate();
  return d;
}

AttackPrompt render_prompt(const MaliciousQuery& query, const TransformVariant& variant,
                           const TransformOptions& options) {
  variant.validate();
  const TemplateSet& templates = options.templates ? *options.templates : TemplateSet::builtin();
  AttackPrompt prompt;
  if (variant.is_encoding()) {
    prompt.variant = variant;
    prompt.rendered = encode_baseline(query.text, variant);
    prompt.template_version = templates.version();
  } else if (variant.kind == VariantKind::kStsa) {
    prompt = render_stsa(query, options.decompose.persona, templates);
  } else {
    DecomposeOptions decompose_options = options.decompose;
    if (!decompose_options.templates) decompose_options.templates = &templates;
    const Decomposition d = decompose(query, decompose_options);
    switch (variant.kind) {
      case VariantKind::kEquation:
        prompt = render_equation(d, templates);
        break;
      case VariantKind::kCode:
        prompt = render_code(d, templates);
        break;
      default:
        prompt = render_equacode(d, templates);
        break;
    }
  }
  prompt.query_id = query.id;
  if (prompt.rendered.empty()) throw DataError("rendered prompt for " + query.id + " is empty");
  return prompt;
}

}  // namespace equacode
