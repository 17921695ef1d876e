#include "corpusforge/distillation.hpp"

#include <optional>
#include <unordered_set>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/log.hpp"
#include "corpusforge/common/parallel.hpp"
#include "corpusforge/common/utf8.hpp"

namespace corpusforge::distill {

namespace {

bool blank(const std::string& s) { return s.find_first_not_of(" \t\r\n") == std::string::npos; }

data::LengthStats response_lengths(const std::vector<const std::string*>& texts) {
  if (texts.empty()) return {};
  std::vector<std::size_t> lens;
  lens.reserve(texts.size());
  for (const std::string* t : texts) lens.push_back(utf8::count_scalars(*t));
  return data::length_stats(lens);
}

}  // namespace

std::string collect_own_response(const std::string& instruction, llm::LlmClient& client,
                                 const DistillOptions& options) {
  if (blank(instruction)) throw ValidationError("instruction must be non-empty");
  std::vector<llm::Message> messages;
  if (!options.system_message.empty()) messages.push_back({llm::Role::system, options.system_message});
  messages.push_back({llm::Role::user, instruction});
  return client.chat(messages).reply;
}

std::string render_refine_prompt(const std::string& instruction, const std::string& original,
                                 const std::string& own, const augment::TemplateLibrary& templates) {
  return templates.get(augment::TemplateId::distill)
      .render({{"instruction", instruction}, {"original_response", original}, {"own", own}});
}

std::string refine_response(const std::string& instruction, const std::string& original, const std::string& own,
                            llm::LlmClient& client, const augment::TemplateLibrary& templates) {
  if (blank(instruction) || blank(original) || blank(own)) {
    throw ValidationError("refine_response needs non-empty instruction, original and own responses");
  }
  const std::string prompt = render_refine_prompt(instruction, original, own, templates);
  std::string reply = client.chat_user(prompt).reply;
  if (blank(reply)) {
    reply = client.chat_user(prompt, {.sampling = std::nullopt, .bypass_cache = true, .cache_salt = {}}).reply;
    if (blank(reply)) throw llm::EndpointError("empty refined response after retry", 200, false);
  }
  return reply;
}

DistillResult distill_corpus(const data::Corpus& corpus, llm::LlmClient& client,
                             const augment::TemplateLibrary& templates, const DistillOptions& options) {
  const std::size_t n = corpus.size();
  const std::size_t workers = static_cast<std::size_t>(client.endpoint().max_in_flight);
  std::vector<std::optional<std::string>> own(n), refined(n);
  std::vector<std::optional<DistillFailure>> failed(n);

  for (std::size_t i = 0; i < n; ++i) {
    if (blank(corpus[i].instruction) || blank(corpus[i].response)) {
      failed[i] = DistillFailure{corpus[i].id, "input", "instruction and response must be non-empty"};
    }
  }

  parallel_for(n, workers, [&](std::size_t i) {
    if (failed[i]) return;
    try {
      std::string reply = collect_own_response(corpus[i].instruction, client, options);
      if (blank(reply)) {
        failed[i] = DistillFailure{corpus[i].id, "own", "empty reply"};
      } else {
        own[i] = std::move(reply);
      }
    } catch (const Error& e) {
      failed[i] = DistillFailure{corpus[i].id, "own", e.what()};
    }
  });

  parallel_for(n, workers, [&](std::size_t i) {
    if (failed[i]) return;
    try {
      refined[i] = refine_response(corpus[i].instruction, corpus[i].response, *own[i], client, templates);
    } catch (const Error& e) {
      failed[i] = DistillFailure{corpus[i].id, "refine", e.what()};
    }
  });

  DistillResult result;
  DistillReport& report = result.report;
  report.input = n;
  report.model = client.endpoint().model;
  std::vector<data::Record> out;
  std::vector<const std::string*> in_texts, out_texts;
  std::unordered_set<std::string> ids;
  for (std::size_t i = 0; i < n; ++i) {
    const data::Record& src = corpus[i];
    in_texts.push_back(&src.response);
    if (failed[i]) {
      log::warn("distill: record " + src.id + " failed at " + failed[i]->stage + ": " + failed[i]->reason);
      report.failures.push_back(std::move(*failed[i]));
      continue;
    }
    data::Record r = src;
    r.response = *refined[i];
    r.meta["distilled_from"] = src.id;
    r.meta["distill_model"] = report.model;
    r.refresh();
    if (!ids.insert(r.id).second) {
      report.failures.push_back({src.id, "refine", "refined record collides with an earlier output " + r.id});
      continue;
    }
    result.triples.push_back({src.instruction, src.response, *own[i], *refined[i], report.model,
                              augment::TemplateId::distill});
    out.push_back(std::move(r));
  }
  for (const data::Record& r : out) out_texts.push_back(&r.response);
  report.succeeded = out.size();
  report.failed = report.failures.size();
  report.input_lengths = response_lengths(in_texts);
  report.output_lengths = response_lengths(out_texts);
  result.distilled = data::Corpus(std::move(out), corpus.provenance()).with_step("distill:" + report.model);
  return result;
}

nlohmann::json to_json(const DistillReport& report) {
  nlohmann::json failures = nlohmann::json::array();
  for (const auto& f : report.failures) failures.push_back({{"id", f.id}, {"stage", f.stage}, {"reason", f.reason}});
  return {{"model", report.model},
          {"input", report.input},
          {"succeeded", report.succeeded},
          {"failed", report.failed},
          {"input_response_lengths", data::to_json(report.input_lengths)},
          {"output_response_lengths", data::to_json(report.output_lengths)},
          {"failures", failures}};
}

}  // namespace corpusforge::distill
