#pragma once

// Prompt-driven augmentation: passages become question/answer dialogues and
// fill-in-the-blank items, MCQ banks become explained and answer-verified
// pairs, and seed instructions drive synthetic question generation.

#include <cstdint>
#include <optional>
#include <string>
#include <variant>
#include <vector>

#include "corpusforge/data_model.hpp"
#include "corpusforge/llm_client.hpp"
#include "corpusforge/templates.hpp"

namespace corpusforge::augment {

struct AugmentedPair {
  std::string instruction;
  std::string response;
  std::vector<std::string> origin;  // source record / item ids
  TemplateId template_id = TemplateId::passage_answer;
  bool verified = false;
};

data::Record to_record(const AugmentedPair& pair, data::Kind kind, const std::string& source);

struct AugmentOptions {
  // Used for question generation and synthesis; answering, explaining and
  // rewriting use the endpoint's sampling params.
  double generation_temperature = 0.7;
  std::size_t max_chunk_chars = 1500;
};

// Splits on blank lines and greedily packs paragraphs into chunks of at most
// `max_chars` scalar values. Oversized paragraphs are cut hard.
std::vector<std::string> split_passage(std::string_view text, std::size_t max_chars = 1500);

// Splits on ";." and drops empty segments; at most three questions.
std::vector<std::string> parse_questions(std::string_view reply);

// Empty result means the reply held no usable question (logged).
std::vector<std::string> questions_from_passage(const data::Record& passage, llm::LlmClient& client,
                                                const TemplateLibrary& templates,
                                                const AugmentOptions& options = {});
std::vector<std::string> questions_from_text(const std::string& text, const std::string& origin_id,
                                             llm::LlmClient& client, const TemplateLibrary& templates,
                                             const AugmentOptions& options = {});

AugmentedPair answer_with_reference(const std::string& question, const data::Record& passage,
                                    llm::LlmClient& client, const TemplateLibrary& templates,
                                    const std::string& reference_text = {});

struct FillBlank {
  std::string question;
  std::string answer;
};

struct FillBlankRejection {
  FillBlank item;
  std::string reason;
};

struct FillBlankOutcome {
  std::vector<FillBlank> kept;
  std::vector<FillBlankRejection> rejected;
};

// Lines carrying "答案:" / "Answer:" close the most recent question line.
std::vector<FillBlank> parse_fill_blanks(std::string_view reply);

// Keeps a blank only when its answer occurs verbatim in `source_text` and is
// shorter than 10 characters.
FillBlankOutcome screen_fill_blanks(const std::vector<FillBlank>& candidates, std::string_view source_text);

// Throws ValidationError when no blank survives screening.
FillBlankOutcome fill_blanks_from_passage(const data::Record& passage, llm::LlmClient& client,
                                          const TemplateLibrary& templates,
                                          const std::string& passage_text = {});

// Deterministic fold of the stem and its lettered options into one paragraph.
std::string fold_mcq(const data::McqItem& item);

// Endpoint rewrite of the fold; an empty reply falls back to the fold.
std::string rewrite_mcq(const data::McqItem& item, llm::LlmClient& client, const TemplateLibrary& templates);

struct Rejection {
  std::string reason;
  std::string reply;
  std::optional<std::string> extracted;
};

using VerifyOutcome = std::variant<AugmentedPair, Rejection>;

// Pair is returned (verified) only when the extracted label equals gold.
VerifyOutcome explain_and_verify(const data::McqItem& item, const std::string& rewritten,
                                 llm::LlmClient& client, const TemplateLibrary& templates);

struct SynthesisOptions {
  std::size_t examples_per_call = 3;
  std::size_t questions_per_call = 5;
  std::uint64_t seed = 42;
  // 0 selects 2 * target + 2.
  std::size_t max_calls = 0;
  double temperature = 0.7;
};

struct SynthesisResult {
  std::vector<std::string> questions;
  std::size_t calls = 0;
  bool budget_exhausted = false;
};

// One question per non-empty reply line, list numbering stripped.
std::vector<std::string> parse_question_lines(std::string_view reply);

SynthesisResult synthesize_questions(const data::Corpus& seed_corpus, llm::LlmClient& client,
                                     std::size_t target, const TemplateLibrary& templates,
                                     const SynthesisOptions& options = {});

// Corpus-level drivers used by the CLI. Records come back in input order.
struct AugmentRun {
  data::Corpus output;
  std::vector<std::string> skipped;  // human-readable reasons
  std::size_t produced = 0;
};

AugmentRun augment_passage_qa(const data::Corpus& corpus, llm::LlmClient& client,
                              const TemplateLibrary& templates, const AugmentOptions& options = {});
AugmentRun augment_fill_blanks(const data::Corpus& corpus, llm::LlmClient& client,
                               const TemplateLibrary& templates, const AugmentOptions& options = {});
// `rewriter` folds+polishes the question, `explainer` answers it.
AugmentRun augment_mcq(const std::vector<data::McqItem>& items, llm::LlmClient& rewriter,
                       llm::LlmClient& explainer, const TemplateLibrary& templates);
// Synthesized questions answered by `teacher`.
AugmentRun synthesize_dialogues(const data::Corpus& seed_corpus, llm::LlmClient& synthesizer,
                                llm::LlmClient& teacher, std::size_t target,
                                const TemplateLibrary& templates, const SynthesisOptions& options = {});

}  // namespace corpusforge::augment
