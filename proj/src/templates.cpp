#include <fstream>
#include <sstream>

#include "equacode/error.hpp"
#include "equacode/transform.hpp"
#include "equacode/util.hpp"

namespace equacode {

TextTemplate::TextTemplate(std::string_view name, std::string_view source,
                           const std::set<std::string>& allowed_slots,
                           const std::set<std::string>& allowed_flags)
    : name_(name), source_(source) {
  std::vector<std::string> open;
  std::size_t pos = 0;
  while (pos < source.size()) {
    const std::size_t start = source.find("{{", pos);
    if (start == std::string_view::npos) {
      pieces_.push_back({Piece::Type::kLiteral, std::string(source.substr(pos))});
      break;
    }
    if (start > pos) pieces_.push_back({Piece::Type::kLiteral, std::string(source.substr(pos, start - pos))});
    const std::size_t end = source.find("}}", start + 2);
    if (end == std::string_view::npos) {
      throw DataError("template '" + name_ + "': unterminated '{{' at offset " + std::to_string(start));
    }
    const std::string tag(source.substr(start + 2, end - start - 2));
    if (!tag.empty() && tag.front() == '?') {
      const std::string flag = tag.substr(1);
      if (!allowed_flags.count(flag)) {
        throw DataError("template '" + name_ + "': unknown block '" + flag + "'");
      }
      open.push_back(flag);
      pieces_.push_back({Piece::Type::kOpen, flag});
    } else if (!tag.empty() && tag.front() == '/') {
      const std::string flag = tag.substr(1);
      if (open.empty() || open.back() != flag) {
        throw DataError("template '" + name_ + "': unbalanced block end '" + flag + "'");
      }
      open.pop_back();
      pieces_.push_back({Piece::Type::kClose, flag});
    } else {
      if (!allowed_slots.count(tag)) {
        throw DataError("template '" + name_ + "': unknown slot '{{" + tag + "}}'");
      }
      pieces_.push_back({Piece::Type::kSlot, tag});
    }
    pos = end + 2;
  }
  if (!open.empty()) throw DataError("template '" + name_ + "': unclosed block '" + open.back() + "'");
}

TextTemplate::Rendered TextTemplate::render(const std::map<std::string, std::string>& values,
                                            const std::set<std::string>& flags) const {
  Rendered out;
  int skipping = 0;
  for (const auto& piece : pieces_) {
    switch (piece.type) {
      case Piece::Type::kOpen:
        if (skipping > 0 || !flags.count(piece.text)) ++skipping;
        break;
      case Piece::Type::kClose:
        if (skipping > 0) --skipping;
        break;
      case Piece::Type::kLiteral:
        if (skipping == 0) out.text += piece.text;
        break;
      case Piece::Type::kSlot: {
        if (skipping > 0) break;
        auto it = values.find(piece.text);
        if (it == values.end()) {
          throw UsageError("template '" + name_ + "': no value for slot '" + piece.text + "'");
        }
        out.slots.push_back({piece.text, out.text.size(), it->second.size()});
        out.text += it->second;
        break;
      }
    }
  }
  return out;
}

namespace {

struct TemplateSpec {
  std::string file;
  std::set<std::string> slots;
  std::set<std::string> flags;
  bool judge = false;
};

const std::vector<TemplateSpec>& template_specs() {
  static const std::vector<TemplateSpec> specs = {
      {"equation_block.txt", {"A", "B", "C", "X"}, {}},
      {"equation_ask.txt", {"A", "B", "C", "X"}, {}},
      {"code_intro.txt", {"A", "B", "C", "X"}, {}},
      {"code_block.txt", {"A", "B", "C", "X"}, {"MODEL_DESCRIBED"}},
      {"code_ask.txt", {"A", "B", "C", "X"}, {"MODEL_DESCRIBED"}},
      {"equacode_bridge.txt", {"A", "B", "C", "X"}, {}},
      {"equacode_ask.txt", {"A", "B", "C", "X"}, {"MODEL_DESCRIBED"}},
      {"stsa.txt", {"A", "B"}, {}},
      {"decompose.txt", {"A"}, {}},
      {"judge_system.txt", {}, {}, true},
      {"judge_user.txt", {"A", "RESPONSE"}, {}, true},
  };
  return specs;
}

}  // namespace

const std::vector<std::string>& TemplateSet::file_names() {
  static const std::vector<std::string> names = [] {
    std::vector<std::string> out;
    for (const auto& spec : template_specs()) out.push_back(spec.file);
    return out;
  }();
  return names;
}

TemplateSet::TemplateSet(const std::map<std::string, std::string>& sources) {
  std::string transform_material;
  std::string judge_material;
  for (const auto& spec : template_specs()) {
    auto it = sources.find(spec.file);
    if (it == sources.end()) throw DataError("template set is missing '" + spec.file + "'");
    templates_.emplace(spec.file, TextTemplate(spec.file, it->second, spec.slots, spec.flags));
    std::string& material = spec.judge ? judge_material : transform_material;
    material += spec.file;
    material.push_back('\0');
    material += it->second;
    material.push_back('\0');
  }
  version_ = "t" + sha256_hex(transform_material).substr(0, 12);
  judge_version_ = "j" + sha256_hex(judge_material).substr(0, 12);
}

const TemplateSet& TemplateSet::builtin() {
  static const TemplateSet set = [] {
    std::map<std::string, std::string> sources;
    for (const auto& file : file_names()) {
      sources.emplace(file, std::string(bundled_asset("templates/" + file)));
    }
    return TemplateSet(sources);
  }();
  return set;
}

TemplateSet TemplateSet::load_directory(const std::filesystem::path& dir) {
  std::map<std::string, std::string> sources;
  for (const auto& file : file_names()) {
    std::ifstream in(dir / file, std::ios::binary);
    if (!in) throw DataError("cannot read template " + (dir / file).string());
    std::ostringstream buffer;
    buffer << in.rdbuf();
    sources.emplace(file, buffer.str());
  }
  return TemplateSet(sources);
}

const TextTemplate& TemplateSet::get(std::string_view name) const {
  auto it = templates_.find(name);
  if (it == templates_.end()) throw DataError("no template named '" + std::string(name) + "'");
  return it->second;
}

}  // namespace equacode
