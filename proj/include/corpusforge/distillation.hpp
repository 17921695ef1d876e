#pragma once

#include <string>
#include <vector>

#include "json.hpp"

#include "corpusforge/data_model.hpp"
#include "corpusforge/llm_client.hpp"
#include "corpusforge/templates.hpp"

namespace corpusforge::distill {

struct DistillationTriple {
  std::string instruction;        // x
  std::string original_response;  // y
  std::string own_response;       // y'
  std::string refined_response;   // y~
  std::string model;
  augment::TemplateId prompt = augment::TemplateId::distill;
};

struct DistillOptions {
  // Sent before x when non-empty. Empty by default so y' depends on x alone.
  std::string system_message;
};

std::string collect_own_response(const std::string& instruction, llm::LlmClient& client,
                                 const DistillOptions& options = {});

std::string render_refine_prompt(const std::string& instruction, const std::string& original,
                                 const std::string& own, const augment::TemplateLibrary& templates);

// Returns the reply verbatim. An empty reply is retried once with the cache
// bypassed; a second empty reply throws.
std::string refine_response(const std::string& instruction, const std::string& original, const std::string& own,
                            llm::LlmClient& client, const augment::TemplateLibrary& templates);

struct DistillFailure {
  std::string id;
  std::string stage;  // "own" or "refine"
  std::string reason;
};

struct DistillReport {
  std::size_t input = 0;
  std::size_t succeeded = 0;
  std::size_t failed = 0;
  data::LengthStats input_lengths;   // response lengths of the input records
  data::LengthStats output_lengths;  // response lengths of the distilled records
  std::vector<DistillFailure> failures;
  std::string model;
};

struct DistillResult {
  data::Corpus distilled;
  DistillReport report;
  std::vector<DistillationTriple> triples;
};

// Pass 1 collects y' for every record, pass 2 refines. Output keeps input
// order; each output record has the refined response, a re-derived id and
// meta "distilled_from" = source id.
DistillResult distill_corpus(const data::Corpus& corpus, llm::LlmClient& client,
                             const augment::TemplateLibrary& templates, const DistillOptions& options = {});

nlohmann::json to_json(const DistillReport& report);

}  // namespace corpusforge::distill
