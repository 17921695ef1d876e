#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace corpusforge::metrics {

using TokenSeq = std::vector<std::string>;

// CJK ideographs are one token each; maximal runs of other letters/digits
// form one token, ASCII-lowercased, with full-width ASCII folded to
// half-width. Punctuation, symbols and whitespace only delimit.
TokenSeq tokenize(std::string_view text);

bool is_cjk_ideograph(char32_t cp);

struct Prf {
  double precision = 0.0;
  double recall = 0.0;
  double f = 0.0;
  bool operator==(const Prf&) const = default;
};

// Harmonic mean, 0 when p + r == 0.
double f1(double precision, double recall);

// Clipped n-gram overlap. Empty n-gram sets give zeros.
Prf rouge_n(const TokenSeq& candidate, const TokenSeq& reference, std::size_t n);

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b);
Prf rouge_l(const TokenSeq& candidate, const TokenSeq& reference);

// Sentence BLEU: geometric mean of clipped precisions for orders
// 1..min(4, |candidate|), uniform weights. A zero match count at order >= 2
// is smoothed to 1 / (count + 1); a zero unigram precision gives 0. Brevity
// penalty exp(1 - |ref| / |cand|) when the candidate is shorter.
double bleu(const TokenSeq& candidate, const TokenSeq& reference);

// Row-major unit vectors, one per token.
struct TokenEmbeddings {
  std::size_t dim = 0;
  std::vector<double> data;

  std::size_t size() const { return dim == 0 ? 0 : data.size() / dim; }
  std::span<const double> row(std::size_t i) const {
    return std::span<const double>(data).subspan(i * dim, dim);
  }
  // Normalizes each vector. Throws on ragged or zero vectors.
  static TokenEmbeddings from_vectors(const std::vector<std::vector<double>>& vectors);
};

// Greedy-matching BERTScore without IDF weighting or baseline rescaling.
// Throws ValidationError on empty sequences or mismatched dimensions.
Prf bertscore(const TokenEmbeddings& candidate, const TokenEmbeddings& reference);

// Rule cascade; the first rule that fires decides:
//   1. "答案 ... <label>" or "answer is <label>" / "answer: <label>", last
//      occurrence wins;
//   2. a line holding only an option label (optionally bracketed or
//      followed by punctuation), last such line wins;
//   3. the unique option whose full text appears in the last non-empty line.
// Labels must be keys of `options`; texts may be empty to disable rule 3.
std::optional<std::string> extract_mcq_answer(std::string_view model_output,
                                              const std::map<std::string, std::string>& options);

struct SubsetAccuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double ratio() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct AccuracyReport {
  SubsetAccuracy overall;
  std::map<std::string, SubsetAccuracy> by_subset;
};

// A missing prediction counts as incorrect. `subsets` is empty or parallel
// to golds. Throws ValidationError on length mismatch.
AccuracyReport accuracy(std::span<const std::optional<std::string>> predictions,
                        std::span<const std::string> golds,
                        std::span<const std::string> subsets = {});

// Rounded to one decimal place as a percentage, e.g. 0.87179 -> "87.2%".
std::string format_percent(double ratio);

nlohmann::json to_json(const Prf& prf);
nlohmann::json to_json(const AccuracyReport& report);

}  // namespace corpusforge::metrics
