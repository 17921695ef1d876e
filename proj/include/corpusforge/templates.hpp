#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <set>
#include <string>
#include <string_view>

namespace corpusforge::augment {

enum class TemplateId {
  passage_questions,
  passage_answer,
  fb_from_passage,
  mcq_rewrite,
  mcq_explain,
  judge,
  distill,
  question_synthesis,
  pairwise,
  mcq_zero_shot,
  fb_zero_shot,
};

std::string_view to_string(TemplateId id);
std::optional<TemplateId> parse_template_id(std::string_view text);

// Prompt body with `{{name}}` placeholders.
class PromptTemplate {
 public:
  PromptTemplate(TemplateId id, std::string body);

  TemplateId id() const { return id_; }
  const std::string& body() const { return body_; }
  const std::set<std::string>& placeholders() const { return placeholders_; }
  // SHA-256 of the body; pinned into reports.
  const std::string& hash() const { return hash_; }

  // Every placeholder must be bound; bound values are inserted verbatim and
  // never re-scanned. Throws ValidationError naming a missing binding.
  std::string render(const std::map<std::string, std::string>& bindings) const;

 private:
  TemplateId id_;
  std::string body_;
  std::set<std::string> placeholders_;
  std::string hash_;
};

class TemplateLibrary {
 public:
  // Bodies compiled in from templates/*.txt.
  static TemplateLibrary builtin();
  // Built-in set with any `<id>.txt` in `dir` replacing its default.
  static TemplateLibrary with_overrides(const std::filesystem::path& dir);

  const PromptTemplate& get(TemplateId id) const;

 private:
  std::map<TemplateId, PromptTemplate> templates_;
};

}  // namespace corpusforge::augment
