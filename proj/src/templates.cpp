#include "corpusforge/templates.hpp"

#include <algorithm>
#include <fstream>
#include <sstream>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/hash.hpp"

namespace corpusforge::augment {

namespace detail {
const std::map<std::string, std::string>& builtin_template_bodies();
}

namespace {

constexpr TemplateId kAllIds[] = {
    TemplateId::passage_questions, TemplateId::passage_answer, TemplateId::fb_from_passage,
    TemplateId::mcq_rewrite,       TemplateId::mcq_explain,    TemplateId::judge,
    TemplateId::distill,           TemplateId::question_synthesis, TemplateId::pairwise,
    TemplateId::mcq_zero_shot,     TemplateId::fb_zero_shot,
};

bool is_name_char(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') || (c >= '0' && c <= '9') || c == '_';
}

// Calls fn(start, end, name) for each well-formed `{{name}}` marker.
template <typename Fn>
void scan_markers(std::string_view body, Fn&& fn) {
  for (std::size_t at = body.find("{{"); at != std::string_view::npos; at = body.find("{{", at + 1)) {
    const std::size_t close = body.find("}}", at + 2);
    if (close == std::string_view::npos) return;
    const std::string_view name = body.substr(at + 2, close - at - 2);
    if (name.empty() || !std::all_of(name.begin(), name.end(), is_name_char)) continue;
    fn(at, close + 2, std::string(name));
    at = close + 1;
  }
}

}  // namespace

std::string_view to_string(TemplateId id) {
  switch (id) {
    case TemplateId::passage_questions: return "passage_questions";
    case TemplateId::passage_answer: return "passage_answer";
    case TemplateId::fb_from_passage: return "fb_from_passage";
    case TemplateId::mcq_rewrite: return "mcq_rewrite";
    case TemplateId::mcq_explain: return "mcq_explain";
    case TemplateId::judge: return "judge";
    case TemplateId::distill: return "distill";
    case TemplateId::question_synthesis: return "question_synthesis";
    case TemplateId::pairwise: return "pairwise";
    case TemplateId::mcq_zero_shot: return "mcq_zero_shot";
    case TemplateId::fb_zero_shot: return "fb_zero_shot";
  }
  return "";
}

std::optional<TemplateId> parse_template_id(std::string_view text) {
  for (TemplateId id : kAllIds) {
    if (to_string(id) == text) return id;
  }
  return std::nullopt;
}

PromptTemplate::PromptTemplate(TemplateId id, std::string body)
    : id_(id), body_(std::move(body)), hash_(sha256_hex(body_)) {
  scan_markers(body_, [&](std::size_t, std::size_t, std::string name) { placeholders_.insert(std::move(name)); });
}

std::string PromptTemplate::render(const std::map<std::string, std::string>& bindings) const {
  std::string out;
  out.reserve(body_.size() + 256);
  std::size_t pos = 0;
  scan_markers(body_, [&](std::size_t start, std::size_t end, const std::string& name) {
    const auto it = bindings.find(name);
    if (it == bindings.end()) {
      throw ValidationError("template " + std::string(to_string(id_)) + ": unbound placeholder {{" + name + "}}");
    }
    out.append(body_, pos, start - pos);
    out.append(it->second);
    pos = end;
  });
  out.append(body_, pos, std::string::npos);
  return out;
}

TemplateLibrary TemplateLibrary::builtin() {
  TemplateLibrary lib;
  const auto& bodies = detail::builtin_template_bodies();
  for (TemplateId id : kAllIds) {
    const auto it = bodies.find(std::string(to_string(id)));
    if (it == bodies.end()) throw Error("built-in template missing: " + std::string(to_string(id)));
    lib.templates_.emplace(id, PromptTemplate(id, it->second));
  }
  return lib;
}

TemplateLibrary TemplateLibrary::with_overrides(const std::filesystem::path& dir) {
  TemplateLibrary lib = builtin();
  if (!std::filesystem::is_directory(dir)) throw IoError("template directory not found: " + dir.string());
  for (TemplateId id : kAllIds) {
    const auto path = dir / (std::string(to_string(id)) + ".txt");
    if (!std::filesystem::exists(path)) continue;
    std::ifstream in(path, std::ios::binary);
    std::ostringstream body;
    body << in.rdbuf();
    const PromptTemplate replacement(id, body.str());
    if (replacement.placeholders() != lib.get(id).placeholders()) {
      throw ValidationError("template override " + path.string() + " changes the placeholder set");
    }
    lib.templates_.insert_or_assign(id, replacement);
  }
  return lib;
}

const PromptTemplate& TemplateLibrary::get(TemplateId id) const { return templates_.at(id); }

}  // namespace corpusforge::augment
