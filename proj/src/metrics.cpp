#include "corpusforge/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <unordered_map>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/common/utf8.hpp"
#include "corpusforge/simd/kernels.hpp"

namespace corpusforge::metrics {

bool is_cjk_ideograph(char32_t cp) {
  return (cp >= 0x3400 && cp <= 0x4DBF) || (cp >= 0x4E00 && cp <= 0x9FFF) ||
         (cp >= 0xF900 && cp <= 0xFAFF) || (cp >= 0x20000 && cp <= 0x2A6DF) ||
         (cp >= 0x2A700 && cp <= 0x2EBEF) || (cp >= 0x2F800 && cp <= 0x2FA1F) ||
         (cp >= 0x30000 && cp <= 0x3134F);
}

namespace {

bool is_ascii_alnum(char32_t cp) {
  return (cp >= U'0' && cp <= U'9') || (cp >= U'a' && cp <= U'z') || (cp >= U'A' && cp <= U'Z');
}

bool is_delimiter(char32_t cp) {
  if (cp < 0x80) return !is_ascii_alnum(cp);
  return (cp <= 0xBF) || cp == 0xD7 || cp == 0xF7 || (cp >= 0x2000 && cp <= 0x2BFF) ||
         (cp >= 0x3000 && cp <= 0x303F) || (cp >= 0xFE10 && cp <= 0xFE1F) ||
         (cp >= 0xFE30 && cp <= 0xFE6F) || (cp >= 0xFF00 && cp <= 0xFF65) ||
         (cp >= 0xFFE0 && cp <= 0xFFFF) || (cp >= 0xE000 && cp <= 0xF8FF) ||
         (cp >= 0x1F000 && cp <= 0x1FAFF) || cp == 0x1680 || cp == 0xFEFF;
}

std::string join_gram(const TokenSeq& seq, std::size_t start, std::size_t n) {
  std::string key;
  for (std::size_t i = start; i < start + n; ++i) {
    if (i > start) key.push_back('\x1f');
    key.append(seq[i]);
  }
  return key;
}

std::unordered_map<std::string, std::size_t> ngram_counts(const TokenSeq& seq, std::size_t n) {
  std::unordered_map<std::string, std::size_t> counts;
  if (seq.size() < n) return counts;
  for (std::size_t i = 0; i + n <= seq.size(); ++i) ++counts[join_gram(seq, i, n)];
  return counts;
}

std::size_t clipped_matches(const std::unordered_map<std::string, std::size_t>& cand,
                            const std::unordered_map<std::string, std::size_t>& ref) {
  std::size_t m = 0;
  for (const auto& [gram, c] : cand) {
    if (auto it = ref.find(gram); it != ref.end()) m += std::min(c, it->second);
  }
  return m;
}

}  // namespace

TokenSeq tokenize(std::string_view text) {
  TokenSeq out;
  std::string run;
  auto flush = [&] {
    if (!run.empty()) out.push_back(std::move(run));
    run.clear();
  };
  for (char32_t cp : utf8::decode(text)) {
    cp = utf8::to_half_width(cp);
    if (is_cjk_ideograph(cp)) {
      flush();
      std::string tok;
      utf8::append(tok, cp);
      out.push_back(std::move(tok));
    } else if (is_delimiter(cp)) {
      flush();
    } else {
      if (cp >= U'A' && cp <= U'Z') cp = cp - U'A' + U'a';
      utf8::append(run, cp);
    }
  }
  flush();
  return out;
}

double f1(double p, double r) { return p + r > 0.0 ? 2.0 * p * r / (p + r) : 0.0; }

Prf rouge_n(const TokenSeq& cand, const TokenSeq& ref, std::size_t n) {
  if (n == 0) throw ValidationError("ROUGE-N order must be >= 1");
  if (cand.size() < n || ref.size() < n) return {};
  const auto cc = ngram_counts(cand, n);
  const auto rc = ngram_counts(ref, n);
  const double m = static_cast<double>(clipped_matches(cc, rc));
  Prf out;
  out.precision = m / static_cast<double>(cand.size() - n + 1);
  out.recall = m / static_cast<double>(ref.size() - n + 1);
  out.f = f1(out.precision, out.recall);
  return out;
}

std::size_t lcs_length(const TokenSeq& a, const TokenSeq& b) {
  if (a.empty() || b.empty()) return 0;
  std::vector<std::size_t> prev(b.size() + 1, 0), cur(b.size() + 1, 0);
  for (std::size_t i = 1; i <= a.size(); ++i) {
    for (std::size_t j = 1; j <= b.size(); ++j) {
      cur[j] = a[i - 1] == b[j - 1] ? prev[j - 1] + 1 : std::max(prev[j], cur[j - 1]);
    }
    std::swap(prev, cur);
  }
  return prev[b.size()];
}

Prf rouge_l(const TokenSeq& cand, const TokenSeq& ref) {
  if (cand.empty() || ref.empty()) return {};
  const double l = static_cast<double>(lcs_length(cand, ref));
  Prf out;
  out.precision = l / static_cast<double>(cand.size());
  out.recall = l / static_cast<double>(ref.size());
  out.f = f1(out.precision, out.recall);
  return out;
}

double bleu(const TokenSeq& cand, const TokenSeq& ref) {
  if (cand.empty()) return 0.0;
  const std::size_t max_order = std::min<std::size_t>(4, cand.size());
  double log_sum = 0.0;
  for (std::size_t n = 1; n <= max_order; ++n) {
    const double total = static_cast<double>(cand.size() - n + 1);
    const double m = static_cast<double>(clipped_matches(ngram_counts(cand, n), ngram_counts(ref, n)));
    double p = 0.0;
    if (m > 0.0) {
      p = m / total;
    } else if (n >= 2) {
      p = 1.0 / (total + 1.0);
    } else {
      return 0.0;
    }
    log_sum += std::log(p);
  }
  const double c = static_cast<double>(cand.size());
  const double r = static_cast<double>(ref.size());
  const double bp = c < r ? std::exp(1.0 - r / c) : 1.0;
  return bp * std::exp(log_sum / static_cast<double>(max_order));
}

TokenEmbeddings TokenEmbeddings::from_vectors(const std::vector<std::vector<double>>& vectors) {
  TokenEmbeddings e;
  if (vectors.empty()) return e;
  e.dim = vectors.front().size();
  if (e.dim == 0) throw ValidationError("token embeddings must have dim > 0");
  e.data.reserve(vectors.size() * e.dim);
  for (const auto& v : vectors) {
    if (v.size() != e.dim) throw ValidationError("token embedding dimension mismatch");
    const double norm = std::sqrt(simd::dot(v, v));
    if (!(norm > 0.0) || !std::isfinite(norm)) throw ValidationError("token embedding has zero or non-finite norm");
    for (double x : v) e.data.push_back(x / norm);
  }
  return e;
}

Prf bertscore(const TokenEmbeddings& cand, const TokenEmbeddings& ref) {
  if (cand.size() == 0 || ref.size() == 0) throw ValidationError("BERTScore needs non-empty token sequences");
  if (cand.dim != ref.dim) throw ValidationError("BERTScore embedding dimensions differ");
  const std::size_t nc = cand.size();
  const std::size_t nr = ref.size();
  std::vector<double> col_max(nr, -1.0);
  std::vector<double> sims(nr);
  double p_sum = 0.0;
  for (std::size_t i = 0; i < nc; ++i) {
    simd::dot_rows(cand.row(i), ref.data, ref.dim, sims);
    double row_max = -1.0;
    for (std::size_t j = 0; j < nr; ++j) {
      row_max = std::max(row_max, sims[j]);
      col_max[j] = std::max(col_max[j], sims[j]);
    }
    p_sum += row_max;
  }
  double r_sum = 0.0;
  for (double v : col_max) r_sum += v;
  Prf out;
  // Greedy maxima can be negative for adversarial embeddings; the score is
  // reported on [0, 1].
  out.precision = std::clamp(p_sum / static_cast<double>(nc), 0.0, 1.0);
  out.recall = std::clamp(r_sum / static_cast<double>(nr), 0.0, 1.0);
  out.f = f1(out.precision, out.recall);
  return out;
}

namespace {

bool is_ascii_letter(char32_t c) { return (c >= U'a' && c <= U'z') || (c >= U'A' && c <= U'Z'); }

std::optional<std::string> label_at(const std::u32string& s, std::size_t pos,
                                    const std::map<std::string, std::string>& options) {
  if (pos >= s.size()) return std::nullopt;
  const char32_t c = s[pos];
  if (c < U'A' || c > U'E') return std::nullopt;
  if (pos + 1 < s.size() && is_ascii_letter(s[pos + 1])) return std::nullopt;
  const std::string label(1, static_cast<char>(c));
  if (!options.contains(label)) return std::nullopt;
  return label;
}

std::u32string lower_ascii(std::u32string s) {
  for (char32_t& c : s) {
    if (c >= U'A' && c <= U'Z') c = c - U'A' + U'a';
  }
  return s;
}

// Rule 1. Positions of every "答案 ... X" and "answer (is|:) X" commitment.
std::optional<std::string> committed_answer(const std::u32string& s,
                                            const std::map<std::string, std::string>& options) {
  std::optional<std::pair<std::size_t, std::string>> last;
  const std::u32string zh = U"答案";
  for (std::size_t at = s.find(zh); at != std::u32string::npos; at = s.find(zh, at + 1)) {
    for (std::size_t off = 0, p = at + zh.size(); off <= 6 && p < s.size(); ++off, ++p) {
      if (auto label = label_at(s, p, options)) {
        last = {{p, *label}};
        break;
      }
      if (is_ascii_letter(s[p]) || s[p] == U'\n') break;
    }
  }
  const std::u32string lower = lower_ascii(s);
  const std::u32string en = U"answer";
  for (std::size_t at = lower.find(en); at != std::u32string::npos; at = lower.find(en, at + 1)) {
    std::size_t p = at + en.size();
    auto skip_space = [&] {
      while (p < s.size() && (s[p] == U' ' || s[p] == U'\t')) ++p;
    };
    skip_space();
    bool linked = false;
    if (lower.compare(p, 2, U"is") == 0 && (p + 2 >= s.size() || !is_ascii_letter(s[p + 2]))) {
      p += 2;
      linked = true;
    } else if (p < s.size() && s[p] == U':') {
      ++p;
      linked = true;
    }
    if (!linked) continue;
    skip_space();
    if (lower.compare(p, 6, U"option") == 0) {
      p += 6;
      skip_space();
    }
    if (p < s.size() && (s[p] == U'(' || s[p] == U'[')) ++p;
    if (auto label = label_at(s, p, options)) {
      if (!last || p > last->first) last = {{p, *label}};
    }
  }
  if (!last) return std::nullopt;
  return last->second;
}

std::vector<std::u32string> split_lines(const std::u32string& s) {
  std::vector<std::u32string> lines;
  std::size_t start = 0;
  while (start <= s.size()) {
    const std::size_t nl = s.find(U'\n', start);
    lines.push_back(s.substr(start, nl == std::u32string::npos ? std::u32string::npos : nl - start));
    if (nl == std::u32string::npos) break;
    start = nl + 1;
  }
  return lines;
}

std::u32string trim(const std::u32string& s, std::u32string_view chars) {
  const auto b = s.find_first_not_of(chars);
  if (b == std::u32string::npos) return {};
  const auto e = s.find_last_not_of(chars);
  return s.substr(b, e - b + 1);
}

}  // namespace

std::optional<std::string> extract_mcq_answer(std::string_view model_output,
                                              const std::map<std::string, std::string>& options) {
  if (options.empty()) throw ValidationError("extract_mcq_answer needs at least one option");
  std::u32string s;
  for (char32_t c : utf8::decode(model_output)) s.push_back(utf8::to_half_width(c));
  for (char32_t& c : s) {
    if (c == U'\r') c = U'\n';
  }

  if (auto a = committed_answer(s, options)) return a;

  const auto lines = split_lines(s);
  std::optional<std::string> lone;
  for (const auto& line : lines) {
    const std::u32string t = trim(line, U" \t*([)]].,:;。、");
    if (t.size() == 1) {
      if (auto label = label_at(t, 0, options)) lone = label;
    }
  }
  if (lone) return lone;

  for (auto it = lines.rbegin(); it != lines.rend(); ++it) {
    const std::u32string t = trim(*it, U" \t");
    if (t.empty()) continue;
    std::optional<std::string> found;
    int hits = 0;
    for (const auto& [label, text] : options) {
      if (text.empty()) continue;
      std::u32string needle;
      for (char32_t c : utf8::decode(text)) needle.push_back(utf8::to_half_width(c));
      if (t.find(needle) != std::u32string::npos) {
        ++hits;
        found = label;
      }
    }
    return hits == 1 ? found : std::nullopt;
  }
  return std::nullopt;
}

AccuracyReport accuracy(std::span<const std::optional<std::string>> predictions,
                        std::span<const std::string> golds, std::span<const std::string> subsets) {
  if (predictions.size() != golds.size()) throw ValidationError("predictions and golds differ in length");
  if (!subsets.empty() && subsets.size() != golds.size()) {
    throw ValidationError("subset labels and golds differ in length");
  }
  AccuracyReport report;
  for (std::size_t i = 0; i < golds.size(); ++i) {
    const bool correct = predictions[i].has_value() && *predictions[i] == golds[i];
    report.overall.total += 1;
    report.overall.correct += correct ? 1 : 0;
    if (!subsets.empty()) {
      auto& sub = report.by_subset[subsets[i]];
      sub.total += 1;
      sub.correct += correct ? 1 : 0;
    }
  }
  return report;
}

std::string format_percent(double ratio) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.1f%%", ratio * 100.0);
  return buf;
}

nlohmann::json to_json(const Prf& prf) {
  return nlohmann::json{{"precision", prf.precision}, {"recall", prf.recall}, {"f", prf.f}};
}

nlohmann::json to_json(const AccuracyReport& r) {
  nlohmann::json subsets = nlohmann::json::object();
  for (const auto& [name, s] : r.by_subset) {
    subsets[name] = {{"correct", s.correct}, {"total", s.total}, {"accuracy", s.ratio()}};
  }
  return nlohmann::json{{"correct", r.overall.correct},
                        {"total", r.overall.total},
                        {"accuracy", r.overall.ratio()},
                        {"subsets", subsets}};
}

}  // namespace corpusforge::metrics
