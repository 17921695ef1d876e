#include "corpusforge/augmentation.hpp"

#include <algorithm>
#include <numeric>
#include <set>
#include <unordered_set>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/log.hpp"
#include "corpusforge/common/parallel.hpp"
#include "corpusforge/common/rng.hpp"
#include "corpusforge/common/utf8.hpp"
#include "corpusforge/metrics.hpp"

namespace corpusforge::augment {

namespace {

std::string trim(std::string_view s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string_view::npos) return {};
  const auto e = s.find_last_not_of(" \t\r\n");
  return std::string(s.substr(b, e - b + 1));
}

std::vector<std::string> split_lines(std::string_view s) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= s.size()) {
    const auto nl = s.find('\n', start);
    out.emplace_back(s.substr(start, nl == std::string_view::npos ? std::string_view::npos : nl - start));
    if (nl == std::string_view::npos) break;
    start = nl + 1;
  }
  return out;
}

bool starts_with_at(const std::u32string& s, std::size_t i, std::u32string_view p) {
  return s.compare(i, p.size(), p) == 0;
}

// Drops list markers such as "1.", "2、", "(3)", "（4）", "Q5:", "问题1：".
std::string strip_numbering(std::string_view line) {
  std::u32string s;
  for (char32_t c : utf8::decode(trim(line))) s.push_back(utf8::to_half_width(c));
  std::size_t i = 0;
  auto digits = [&](std::size_t p) {
    std::size_t q = p;
    while (q < s.size() && s[q] >= U'0' && s[q] <= U'9') ++q;
    return q;
  };
  for (std::u32string_view prefix : {U"问题", U"题目", U"Question", U"Q"}) {
    if (starts_with_at(s, 0, prefix)) {
      std::size_t p = digits(prefix.size());
      if (p < s.size() && (s[p] == U':' || s[p] == U'.')) {
        i = p + 1;
        break;
      }
    }
  }
  if (i == 0 && !s.empty() && s[0] == U'(') {
    const std::size_t p = digits(1);
    if (p > 1 && p < s.size() && s[p] == U')') i = p + 1;
  }
  if (i == 0) {
    const std::size_t p = digits(0);
    if (p > 0 && p < s.size() && (s[p] == U'.' || s[p] == U'、' || s[p] == U')' || s[p] == U':')) i = p + 1;
  }
  // Keep original (possibly full-width) text after the marker.
  const std::u32string original = utf8::decode(trim(line));
  return trim(utf8::encode(std::u32string_view(original).substr(std::min(i, original.size()))));
}

std::string origin_meta(const std::vector<std::string>& origin) {
  std::string out;
  for (std::size_t i = 0; i < origin.size(); ++i) {
    if (i) out.push_back(',');
    out += origin[i];
  }
  return out;
}

std::size_t fanout(const llm::LlmClient& client) {
  return static_cast<std::size_t>(client.endpoint().max_in_flight);
}

}  // namespace

data::Record to_record(const AugmentedPair& pair, data::Kind kind, const std::string& source) {
  return data::Record::make(kind, pair.instruction, pair.response, source, "zh",
                            {{"origin", origin_meta(pair.origin)},
                             {"template", std::string(to_string(pair.template_id))},
                             {"verified", pair.verified ? "true" : "false"}});
}

std::vector<std::string> split_passage(std::string_view text, std::size_t max_chars) {
  if (max_chars == 0) throw ValidationError("max_chars must be > 0");
  std::vector<std::string> paragraphs;
  std::string current;
  for (const std::string& line : split_lines(text)) {
    if (trim(line).empty()) {
      if (!trim(current).empty()) paragraphs.push_back(trim(current));
      current.clear();
    } else {
      if (!current.empty()) current.push_back('\n');
      current += line;
    }
  }
  if (!trim(current).empty()) paragraphs.push_back(trim(current));

  std::vector<std::string> chunks;
  std::string chunk;
  std::size_t chunk_len = 0;
  auto flush = [&] {
    if (!chunk.empty()) chunks.push_back(std::move(chunk));
    chunk.clear();
    chunk_len = 0;
  };
  for (const std::string& para : paragraphs) {
    const std::u32string cps = utf8::decode(para);
    if (cps.size() > max_chars) {
      flush();
      for (std::size_t at = 0; at < cps.size(); at += max_chars) {
        chunks.push_back(utf8::encode(std::u32string_view(cps).substr(at, max_chars)));
      }
      continue;
    }
    const std::size_t joined = chunk.empty() ? cps.size() : chunk_len + 2 + cps.size();
    if (joined > max_chars) flush();
    if (!chunk.empty()) {
      chunk += "\n\n";
      chunk_len += 2;
    }
    chunk += para;
    chunk_len += cps.size();
  }
  flush();
  return chunks;
}

std::vector<std::string> parse_questions(std::string_view reply) {
  std::vector<std::string> out;
  std::size_t start = 0;
  while (start <= reply.size() && out.size() < 3) {
    const auto sep = reply.find(";.", start);
    const std::string segment = trim(reply.substr(start, sep == std::string_view::npos ? std::string_view::npos : sep - start));
    if (!segment.empty()) out.push_back(segment);
    if (sep == std::string_view::npos) break;
    start = sep + 2;
  }
  return out;
}

std::vector<std::string> questions_from_text(const std::string& text, const std::string& origin_id,
                                             llm::LlmClient& client, const TemplateLibrary& templates,
                                             const AugmentOptions& options) {
  const std::string prompt = templates.get(TemplateId::passage_questions).render({{"text", text}});
  llm::SamplingParams sampling = client.endpoint().sampling;
  sampling.temperature = options.generation_temperature;
  const auto ex = client.chat_user(prompt, {.sampling = sampling, .bypass_cache = false, .cache_salt = {}});
  auto questions = parse_questions(ex.reply);
  if (questions.empty()) log::warn("passage " + origin_id + ": no parseable questions in reply, skipped");
  return questions;
}

std::vector<std::string> questions_from_passage(const data::Record& passage, llm::LlmClient& client,
                                                const TemplateLibrary& templates, const AugmentOptions& options) {
  if (passage.kind != data::Kind::passage) throw ValidationError("questions_from_passage needs a passage record");
  return questions_from_text(passage.instruction, passage.id, client, templates, options);
}

AugmentedPair answer_with_reference(const std::string& question, const data::Record& passage,
                                    llm::LlmClient& client, const TemplateLibrary& templates,
                                    const std::string& reference_text) {
  if (trim(question).empty()) throw ValidationError("question must be non-empty");
  const std::string& reference = reference_text.empty() ? passage.instruction : reference_text;
  const std::string prompt =
      templates.get(TemplateId::passage_answer).render({{"reference", reference}, {"question", question}});
  const auto ex = client.chat_user(prompt);
  return AugmentedPair{question, ex.reply, {passage.id}, TemplateId::passage_answer, false};
}

std::vector<FillBlank> parse_fill_blanks(std::string_view reply) {
  std::vector<FillBlank> out;
  std::string pending;
  for (const std::string& raw : split_lines(reply)) {
    const std::string line = trim(raw);
    if (line.empty()) continue;
    std::u32string s;
    for (char32_t c : utf8::decode(line)) s.push_back(utf8::to_half_width(c));
    std::u32string lower = s;
    for (char32_t& c : lower) {
      if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
    }
    std::size_t marker = std::u32string::npos;
    std::size_t marker_len = 0;
    for (std::u32string_view m : {U"答案:", U"答案是", U"答案", U"answer:"}) {
      const auto at = lower.find(m);
      if (at != std::u32string::npos && (marker == std::u32string::npos || at < marker)) {
        marker = at;
        marker_len = m.size();
      }
    }
    if (marker == std::u32string::npos) {
      pending = strip_numbering(line);
      continue;
    }
    const std::u32string original = utf8::decode(line);
    std::string before = strip_numbering(utf8::encode(std::u32string_view(original).substr(0, marker)));
    std::u32string after(std::u32string_view(original).substr(marker + marker_len));
    // Drop separators left behind by the marker, e.g. the colon in "答案 ：".
    while (!after.empty() && (after.front() == U':' || after.front() == U'：' || after.front() == U' ')) after.erase(0, 1);
    std::string answer = trim(utf8::encode(after));
    while (answer.ends_with("。")) answer.resize(answer.size() - std::string("。").size());
    if (!before.empty()) {
      // "Answer" as a heading without content is not a question.
      pending = before;
    }
    if (!pending.empty() && !answer.empty()) {
      out.push_back({pending, answer});
      pending.clear();
    }
  }
  return out;
}

FillBlankOutcome screen_fill_blanks(const std::vector<FillBlank>& candidates, std::string_view source_text) {
  FillBlankOutcome out;
  for (const FillBlank& fb : candidates) {
    if (source_text.find(fb.answer) == std::string_view::npos) {
      out.rejected.push_back({fb, "answer is not an excerpt of the passage"});
    } else if (utf8::count_scalars(fb.answer) >= 10) {
      out.rejected.push_back({fb, "answer is 10 or more characters"});
    } else {
      out.kept.push_back(fb);
    }
  }
  for (const auto& r : out.rejected) log::debug("fill-blank rejected (" + r.reason + "): " + r.item.answer);
  return out;
}

FillBlankOutcome fill_blanks_from_passage(const data::Record& passage, llm::LlmClient& client,
                                          const TemplateLibrary& templates, const std::string& passage_text) {
  if (passage.kind != data::Kind::passage) throw ValidationError("fill_blanks_from_passage needs a passage record");
  const std::string& text = passage_text.empty() ? passage.instruction : passage_text;
  const std::string prompt = templates.get(TemplateId::fb_from_passage).render({{"text", text}});
  const auto ex = client.chat_user(prompt);
  FillBlankOutcome out = screen_fill_blanks(parse_fill_blanks(ex.reply), text);
  if (out.kept.empty()) throw ValidationError("passage " + passage.id + ": no valid fill-in-the-blank pairs");
  return out;
}

std::string fold_mcq(const data::McqItem& item) {
  std::string out = trim(item.stem);
  for (const auto& [label, text] : item.options) out += " " + label + ". " + text;
  return out;
}

std::string rewrite_mcq(const data::McqItem& item, llm::LlmClient& client, const TemplateLibrary& templates) {
  item.validate();
  const std::string fold = fold_mcq(item);
  const std::string prompt = templates.get(TemplateId::mcq_rewrite).render({{"question", fold}});
  const std::string reply = trim(client.chat_user(prompt).reply);
  if (reply.empty()) {
    log::warn("MCQ " + item.id + ": empty rewrite, using the deterministic fold");
    return fold;
  }
  return reply;
}

VerifyOutcome explain_and_verify(const data::McqItem& item, const std::string& rewritten,
                                 llm::LlmClient& client, const TemplateLibrary& templates) {
  if (trim(rewritten).empty()) throw ValidationError("rewritten question must be non-empty");
  const std::string prompt = templates.get(TemplateId::mcq_explain).render({{"question", rewritten}});
  const std::string reply = client.chat_user(prompt).reply;
  const auto label = metrics::extract_mcq_answer(reply, item.options);
  if (!label) return Rejection{"no answer label detectable in reply", reply, std::nullopt};
  if (*label != item.gold) return Rejection{"extracted answer " + *label + " != gold " + item.gold, reply, label};
  return AugmentedPair{rewritten, reply, {item.id}, TemplateId::mcq_explain, true};
}

std::vector<std::string> parse_question_lines(std::string_view reply) {
  std::vector<std::string> out;
  for (const std::string& line : split_lines(reply)) {
    std::string q = strip_numbering(line);
    if (!q.empty()) out.push_back(std::move(q));
  }
  return out;
}

SynthesisResult synthesize_questions(const data::Corpus& seed_corpus, llm::LlmClient& client, std::size_t target,
                                     const TemplateLibrary& templates, const SynthesisOptions& options) {
  SynthesisResult result;
  if (target == 0) return result;
  if (seed_corpus.empty()) throw ValidationError("question synthesis needs a non-empty seed corpus");
  const std::size_t budget = options.max_calls == 0 ? 2 * target + 2 : options.max_calls;

  std::unordered_set<std::string> seen;
  for (const auto& r : seed_corpus) seen.insert(trim(r.instruction));

  Rng rng(options.seed);
  std::vector<std::size_t> order(seed_corpus.size());
  llm::SamplingParams sampling = client.endpoint().sampling;
  sampling.temperature = options.temperature;
  const PromptTemplate& tpl = templates.get(TemplateId::question_synthesis);

  while (result.questions.size() < target && result.calls < budget) {
    std::iota(order.begin(), order.end(), 0);
    const std::size_t take = std::min(options.examples_per_call, order.size());
    for (std::size_t i = 0; i < take; ++i) std::swap(order[i], order[i + rng.below(order.size() - i)]);
    std::string examples;
    for (std::size_t i = 0; i < take; ++i) {
      examples += std::to_string(i + 1) + ". " + trim(seed_corpus[order[i]].instruction) + "\n";
    }
    const std::size_t wanted = std::min(options.questions_per_call, target - result.questions.size());
    const std::string prompt = tpl.render({{"examples", trim(examples)}, {"count", std::to_string(wanted)}});
    // Each call is a distinct sample even when the prompt repeats.
    const auto ex = client.chat_user(prompt, {.sampling = sampling, .cache_salt = "call:" + std::to_string(result.calls)});
    ++result.calls;
    for (std::string& q : parse_question_lines(ex.reply)) {
      if (result.questions.size() >= target) break;
      if (seen.insert(q).second) result.questions.push_back(std::move(q));
    }
  }
  if (result.questions.size() < target) {
    result.budget_exhausted = true;
    log::warn("question synthesis stopped at " + std::to_string(result.questions.size()) + " of " +
              std::to_string(target) + " after " + std::to_string(result.calls) + " calls");
  }
  return result;
}

namespace {

data::Corpus unique_corpus(std::vector<data::Record> records, const data::Corpus& input, const std::string& step) {
  std::unordered_set<std::string> ids;
  std::vector<data::Record> unique;
  for (auto& r : records) {
    if (ids.insert(r.id).second) unique.push_back(std::move(r));
  }
  return data::Corpus(std::move(unique), input.provenance()).with_step(step);
}

}  // namespace

AugmentRun augment_passage_qa(const data::Corpus& corpus, llm::LlmClient& client, const TemplateLibrary& templates,
                              const AugmentOptions& options) {
  struct Slot {
    std::vector<data::Record> records;
    std::vector<std::string> skipped;
  };
  std::vector<Slot> slots(corpus.size());
  parallel_for(corpus.size(), fanout(client), [&](std::size_t i) {
    const data::Record& passage = corpus[i];
    if (passage.kind != data::Kind::passage) return;
    const auto chunks = split_passage(passage.instruction, options.max_chunk_chars);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      try {
        for (const std::string& q : questions_from_text(chunks[c], passage.id, client, templates, options)) {
          AugmentedPair pair = answer_with_reference(q, passage, client, templates, chunks[c]);
          data::Record r = to_record(pair, data::Kind::dialogue, passage.source);
          r.meta["chunk"] = std::to_string(c);
          r.refresh();
          slots[i].records.push_back(std::move(r));
        }
      } catch (const Error& e) {
        slots[i].skipped.push_back("passage " + passage.id + " chunk " + std::to_string(c) + ": " + e.what());
      }
    }
  });
  AugmentRun run;
  std::vector<data::Record> records;
  for (auto& s : slots) {
    for (auto& r : s.records) records.push_back(std::move(r));
    for (auto& m : s.skipped) run.skipped.push_back(std::move(m));
  }
  run.produced = records.size();
  run.output = unique_corpus(std::move(records), corpus, "augment:passage-qa");
  return run;
}

AugmentRun augment_fill_blanks(const data::Corpus& corpus, llm::LlmClient& client, const TemplateLibrary& templates,
                               const AugmentOptions& options) {
  struct Slot {
    std::vector<data::Record> records;
    std::vector<std::string> skipped;
  };
  std::vector<Slot> slots(corpus.size());
  parallel_for(corpus.size(), fanout(client), [&](std::size_t i) {
    const data::Record& passage = corpus[i];
    if (passage.kind != data::Kind::passage) return;
    const auto chunks = split_passage(passage.instruction, options.max_chunk_chars);
    for (std::size_t c = 0; c < chunks.size(); ++c) {
      try {
        const auto outcome = fill_blanks_from_passage(passage, client, templates, chunks[c]);
        for (const FillBlank& fb : outcome.kept) {
          AugmentedPair pair{fb.question, fb.answer, {passage.id}, TemplateId::fb_from_passage, false};
          slots[i].records.push_back(to_record(pair, data::Kind::fill_blank, passage.source));
        }
        for (const auto& rej : outcome.rejected) {
          slots[i].skipped.push_back("passage " + passage.id + " blank '" + rej.item.answer + "': " + rej.reason);
        }
      } catch (const Error& e) {
        slots[i].skipped.push_back(e.what());
      }
    }
  });
  AugmentRun run;
  std::vector<data::Record> records;
  for (auto& s : slots) {
    for (auto& r : s.records) records.push_back(std::move(r));
    for (auto& m : s.skipped) run.skipped.push_back(std::move(m));
  }
  run.produced = records.size();
  run.output = unique_corpus(std::move(records), corpus, "augment:fb");
  return run;
}

AugmentRun augment_mcq(const std::vector<data::McqItem>& items, llm::LlmClient& rewriter, llm::LlmClient& explainer,
                       const TemplateLibrary& templates) {
  std::vector<std::optional<data::Record>> slots(items.size());
  std::vector<std::string> reasons(items.size());
  parallel_for(items.size(), fanout(explainer), [&](std::size_t i) {
    try {
      const std::string rewritten = rewrite_mcq(items[i], rewriter, templates);
      auto outcome = explain_and_verify(items[i], rewritten, explainer, templates);
      if (auto* pair = std::get_if<AugmentedPair>(&outcome)) {
        slots[i] = to_record(*pair, data::Kind::mcq, "mcq:" + std::string(data::to_string(items[i].qtype)));
      } else {
        reasons[i] = "MCQ " + items[i].id + " rejected: " + std::get<Rejection>(outcome).reason;
      }
    } catch (const Error& e) {
      reasons[i] = "MCQ " + items[i].id + ": " + e.what();
    }
  });
  AugmentRun run;
  std::vector<data::Record> records;
  for (std::size_t i = 0; i < items.size(); ++i) {
    if (slots[i]) records.push_back(std::move(*slots[i]));
    if (!reasons[i].empty()) run.skipped.push_back(std::move(reasons[i]));
  }
  run.produced = records.size();
  run.output = unique_corpus(std::move(records), data::Corpus{}, "augment:mcq-explain");
  return run;
}

AugmentRun synthesize_dialogues(const data::Corpus& seed_corpus, llm::LlmClient& synthesizer, llm::LlmClient& teacher,
                                std::size_t target, const TemplateLibrary& templates, const SynthesisOptions& options) {
  const SynthesisResult synth = synthesize_questions(seed_corpus, synthesizer, target, templates, options);
  std::vector<std::optional<data::Record>> slots(synth.questions.size());
  std::vector<std::string> reasons(synth.questions.size());
  std::vector<std::string> origin;
  for (const auto& r : seed_corpus) origin.push_back(r.id);
  parallel_for(synth.questions.size(), fanout(teacher), [&](std::size_t i) {
    try {
      const auto ex = teacher.chat_user(synth.questions[i]);
      if (trim(ex.reply).empty()) {
        reasons[i] = "empty teacher reply for synthesized question " + std::to_string(i);
        return;
      }
      AugmentedPair pair{synth.questions[i], ex.reply, {}, TemplateId::question_synthesis, false};
      data::Record r = to_record(pair, data::Kind::dialogue, "synthetic");
      r.meta["origin"] = "seed-corpus";
      r.meta["synthesizer"] = synthesizer.endpoint().model;
      r.meta["teacher"] = teacher.endpoint().model;
      r.refresh();
      slots[i] = std::move(r);
    } catch (const Error& e) {
      reasons[i] = e.what();
    }
  });
  AugmentRun run;
  std::vector<data::Record> records;
  for (std::size_t i = 0; i < slots.size(); ++i) {
    if (slots[i]) records.push_back(std::move(*slots[i]));
    if (!reasons[i].empty()) run.skipped.push_back(std::move(reasons[i]));
  }
  if (synth.budget_exhausted) run.skipped.push_back("synthesis budget exhausted before target");
  run.produced = records.size();
  run.output = unique_corpus(std::move(records), seed_corpus, "augment:synthesize");
  return run;
}

}  // namespace corpusforge::augment
