#include "corpusforge/bench_harness.hpp"

#include <cstdio>
#include <fstream>
#include <sstream>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/log.hpp"
#include "corpusforge/common/parallel.hpp"

namespace corpusforge::bench {

using nlohmann::json;

std::string_view to_string(BenchKind kind) {
  switch (kind) {
    case BenchKind::mcq: return "mcq";
    case BenchKind::fb: return "fb";
    case BenchKind::dialogue: return "dialogue";
  }
  return "mcq";
}

namespace {

std::optional<BenchKind> parse_bench_kind(std::string_view s) {
  for (BenchKind k : {BenchKind::mcq, BenchKind::fb, BenchKind::dialogue}) {
    if (to_string(k) == s) return k;
  }
  return std::nullopt;
}

template <typename Fn>
void for_each_json_line(const std::string& path, Fn&& fn) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open dataset " + path);
  std::string line;
  std::size_t number = 0, position = 0;
  while (std::getline(in, line)) {
    ++number;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.find_first_not_of(" \t") == std::string::npos) continue;
    try {
      fn(json::parse(line), ++position);
    } catch (const json::exception& e) {
      throw ValidationError(path + ":" + std::to_string(number) + ": " + e.what());
    } catch (const ValidationError& e) {
      throw ValidationError(path + ":" + std::to_string(number) + ": " + e.what());
    }
  }
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4f", v);
  return buf;
}

std::size_t workers(const llm::LlmClient& c) { return static_cast<std::size_t>(c.endpoint().max_in_flight); }

}  // namespace

std::vector<data::McqItem> load_mcq_dataset(const std::string& path) {
  std::vector<data::McqItem> items;
  for_each_json_line(path, [&](const json& j, std::size_t) { items.push_back(data::mcq_from_json(j)); });
  return items;
}

std::vector<FbItem> load_fb_dataset(const std::string& path) {
  std::vector<FbItem> items;
  for_each_json_line(path, [&](const json& j, std::size_t pos) {
    FbItem item;
    item.id = j.contains("id") ? j.at("id").get<std::string>() : std::to_string(pos);
    item.question = j.at("question").get<std::string>();
    item.answer = j.at("answer").get<std::string>();
    if (item.question.empty() || item.answer.empty()) throw ValidationError("question and answer must be non-empty");
    items.push_back(std::move(item));
  });
  return items;
}

std::vector<judge::DialogueItem> load_dialogue_dataset(const std::string& path) {
  std::vector<judge::DialogueItem> items;
  for_each_json_line(path, [&](const json& j, std::size_t pos) { items.push_back(judge::dialogue_item_from_json(j, pos)); });
  return items;
}

json to_json(const MetricReport& report) {
  json rows = json::array();
  for (const auto& r : report.rows) rows.push_back({{"id", r.id}, {"values", r.values}, {"labels", r.labels}});
  return {{"v", 1},
          {"kind", to_string(report.kind)},
          {"columns", report.columns},
          {"rows", rows},
          {"summary", report.summary},
          {"fingerprint", report.fingerprint},
          {"extra", report.extra}};
}

MetricReport report_from_json(const json& j) {
  MetricReport r;
  const auto kind = parse_bench_kind(j.at("kind").get<std::string>());
  if (!kind) throw ValidationError("unknown report kind");
  r.kind = *kind;
  r.columns = j.at("columns").get<std::vector<std::string>>();
  for (const auto& row : j.at("rows")) {
    r.rows.push_back({row.at("id").get<std::string>(), row.at("values").get<std::map<std::string, double>>(),
                      row.at("labels").get<std::map<std::string, std::string>>()});
  }
  r.summary = j.at("summary").get<std::map<std::string, double>>();
  r.fingerprint = j.value("fingerprint", json::object());
  r.extra = j.value("extra", json::object());
  return r;
}

std::string render_table(const MetricReport& report) {
  std::vector<std::vector<std::string>> cells;
  std::vector<std::string> header{"id"};
  header.insert(header.end(), report.columns.begin(), report.columns.end());
  cells.push_back(header);
  for (const auto& row : report.rows) {
    std::vector<std::string> line{row.id};
    for (const auto& col : report.columns) {
      if (auto v = row.values.find(col); v != row.values.end()) {
        line.push_back(format_number(v->second));
      } else if (auto l = row.labels.find(col); l != row.labels.end()) {
        line.push_back(l->second);
      } else {
        line.emplace_back("-");
      }
    }
    cells.push_back(std::move(line));
  }
  std::ostringstream out;
  for (const auto& line : cells) {
    for (std::size_t i = 0; i < line.size(); ++i) out << (i ? "\t" : "") << line[i];
    out << '\n';
  }
  if (!report.summary.empty()) {
    out << '\n';
    for (const auto& [k, v] : report.summary) out << k << '\t' << format_number(v) << '\n';
  }
  return out.str();
}

std::string render_json(const MetricReport& report) { return to_json(report).dump(2) + "\n"; }

json make_fingerprint(const Fingerprint& fp, const augment::TemplateLibrary& library) {
  json endpoints = json::object();
  for (const auto& [role, client] : fp.endpoints) {
    if (!client) continue;
    const auto& e = client->endpoint();
    endpoints[role] = {{"name", e.name},
                       {"base_url", e.base_url},
                       {"model", e.model},
                       {"temperature", e.sampling.temperature},
                       {"max_tokens", e.sampling.max_tokens}};
  }
  json templates = json::object();
  for (auto id : fp.templates) templates[std::string(augment::to_string(id))] = library.get(id).hash();
  return {{"endpoints", endpoints}, {"templates", templates}, {"seeds", fp.seeds}};
}

std::string render_mcq_prompt(const data::McqItem& item, const augment::TemplateLibrary& templates) {
  std::string options;
  for (const auto& [label, text] : item.options) {
    if (!options.empty()) options.push_back('\n');
    options += label + ". " + text;
  }
  return templates.get(augment::TemplateId::mcq_zero_shot).render({{"stem", item.stem}, {"options", options}});
}

McqRun run_mcq(const std::vector<data::McqItem>& items, llm::LlmClient& model,
               const augment::TemplateLibrary& templates) {
  for (const auto& item : items) item.validate();
  std::vector<std::optional<std::string>> predictions(items.size());
  std::vector<std::string> replies(items.size());
  std::vector<char> failed(items.size(), 0);
  parallel_for(items.size(), workers(model), [&](std::size_t i) {
    try {
      replies[i] = model.chat_user(render_mcq_prompt(items[i], templates)).reply;
      predictions[i] = metrics::extract_mcq_answer(replies[i], items[i].options);
    } catch (const Error& e) {
      failed[i] = 1;
      log::warn("MCQ " + items[i].id + ": " + e.what());
    }
  });

  std::vector<std::string> golds, subsets;
  for (const auto& item : items) {
    golds.push_back(item.gold);
    subsets.emplace_back(data::to_string(item.qtype));
  }
  McqRun run;
  run.accuracy = metrics::accuracy(predictions, golds, subsets);
  MetricReport& r = run.report;
  r.kind = BenchKind::mcq;
  r.columns = {"qtype", "gold", "predicted", "correct"};
  for (std::size_t i = 0; i < items.size(); ++i) {
    ReportRow row;
    row.id = items[i].id;
    row.labels["qtype"] = subsets[i];
    row.labels["gold"] = golds[i];
    row.labels["predicted"] = predictions[i].value_or(failed[i] ? "(error)" : "(none)");
    row.values["correct"] = predictions[i] == golds[i] ? 1.0 : 0.0;
    if (!predictions[i]) ++run.unanswered;
    r.rows.push_back(std::move(row));
  }
  r.summary["accuracy"] = run.accuracy.overall.ratio();
  r.summary["correct"] = static_cast<double>(run.accuracy.overall.correct);
  r.summary["total"] = static_cast<double>(run.accuracy.overall.total);
  r.summary["unanswered"] = static_cast<double>(run.unanswered);
  for (const auto& [subset, acc] : run.accuracy.by_subset) {
    r.summary["accuracy:" + subset] = acc.ratio();
    r.summary["total:" + subset] = static_cast<double>(acc.total);
  }
  r.extra["accuracy"] = metrics::to_json(run.accuracy);
  r.extra["accuracy_display"] = metrics::format_percent(run.accuracy.overall.ratio());
  r.fingerprint = make_fingerprint({{{"model", &model}}, {augment::TemplateId::mcq_zero_shot}, {}}, templates);
  return run;
}

TokenEmbedder endpoint_token_embedder(llm::LlmClient& embedder) {
  return [&embedder](const metrics::TokenSeq& tokens) {
    return metrics::TokenEmbeddings::from_vectors(embedder.embed(tokens));
  };
}

MetricReport score_fb(const std::vector<FbItem>& items, const std::vector<std::string>& replies,
                      const TokenEmbedder& embedder) {
  if (items.size() != replies.size()) throw ValidationError("score_fb: one reply per item required");
  MetricReport r;
  r.kind = BenchKind::fb;
  r.columns = {"rouge_1", "rouge_2", "rouge_l", "bleu"};
  if (embedder) r.columns.insert(r.columns.begin(), "bertscore");
  std::map<std::string, double> sums;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto cand = metrics::tokenize(replies[i]);
    const auto ref = metrics::tokenize(items[i].answer);
    ReportRow row;
    row.id = items[i].id;
    row.values["rouge_1"] = metrics::rouge_n(cand, ref, 1).f;
    row.values["rouge_2"] = metrics::rouge_n(cand, ref, 2).f;
    row.values["rouge_l"] = metrics::rouge_l(cand, ref).f;
    row.values["bleu"] = metrics::bleu(cand, ref);
    if (embedder) {
      row.values["bertscore"] =
          cand.empty() || ref.empty() ? 0.0 : metrics::bertscore(embedder(cand), embedder(ref)).f;
    }
    for (const auto& [k, v] : row.values) sums[k] += v;
    r.rows.push_back(std::move(row));
  }
  for (const auto& col : r.columns) {
    r.summary[col] = items.empty() ? 0.0 : sums[col] / static_cast<double>(items.size());
  }
  return r;
}

MetricReport run_fb(const std::vector<FbItem>& items, llm::LlmClient& model,
                    const augment::TemplateLibrary& templates, const TokenEmbedder& embedder) {
  std::vector<std::string> replies(items.size());
  std::size_t unanswered = 0;
  std::vector<char> failed(items.size(), 0);
  parallel_for(items.size(), workers(model), [&](std::size_t i) {
    try {
      const std::string prompt =
          templates.get(augment::TemplateId::fb_zero_shot).render({{"question", items[i].question}});
      replies[i] = model.chat_user(prompt).reply;
    } catch (const Error& e) {
      failed[i] = 1;
      log::warn("FB " + items[i].id + ": " + e.what());
    }
  });
  MetricReport r = score_fb(items, replies, embedder);
  for (char f : failed) unanswered += f;
  r.summary["unanswered"] = static_cast<double>(unanswered);
  r.fingerprint = make_fingerprint({{{"model", &model}}, {augment::TemplateId::fb_zero_shot}, {}}, templates);
  r.extra["bertscore"] = embedder ? "token embeddings, greedy matching, no idf" : "omitted: no token embedder";
  return r;
}

DialogueRun run_dialogue(const std::vector<judge::DialogueItem>& items, llm::LlmClient& candidate,
                         llm::LlmClient& judge_client, const augment::TemplateLibrary& templates,
                         std::size_t trials) {
  std::vector<std::string> answers(items.size());
  std::vector<char> failed(items.size(), 0);
  parallel_for(items.size(), workers(candidate), [&](std::size_t i) {
    try {
      answers[i] = candidate.chat_user(items[i].question).reply;
    } catch (const Error& e) {
      failed[i] = 1;
      log::warn("dialogue " + items[i].id + ": " + e.what());
    }
  });
  DialogueRun run;
  run.judgement = judge::judge_dialogue(items, answers, judge_client, templates, trials);
  MetricReport& r = run.report;
  r.kind = BenchKind::dialogue;
  r.columns = {"category", "score"};
  std::map<std::string, std::pair<double, std::size_t>> by_category;
  for (std::size_t i = 0; i < items.size(); ++i) {
    const auto& ij = run.judgement.items[i];
    ReportRow row;
    row.id = items[i].id;
    row.labels["category"] = items[i].category;
    if (ij.mean) {
      row.values["score"] = *ij.mean;
      auto& [sum, n] = by_category[items[i].category];
      sum += *ij.mean;
      ++n;
    }
    if (failed[i]) {
      row.labels["answer"] = "(error)";
      ++run.unanswered;
    }
    r.rows.push_back(std::move(row));
  }
  if (run.judgement.mean) r.summary["mean"] = *run.judgement.mean;
  r.summary["scored"] = static_cast<double>(run.judgement.scored);
  r.summary["unanswered"] = static_cast<double>(run.unanswered);
  for (const auto& [cat, acc] : by_category) r.summary["category:" + cat] = acc.first / static_cast<double>(acc.second);
  r.fingerprint = make_fingerprint({{{"candidate", &candidate}, {"judge", &judge_client}}, {augment::TemplateId::judge}, {}},
                                   templates);
  r.extra["judgement"] = judge::to_json(run.judgement);
  r.extra["answers"] = answers;
  return run;
}

}  // namespace corpusforge::bench
