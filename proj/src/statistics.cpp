#include "corpusforge/statistics.hpp"

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>

#include "corpusforge/common/errors.hpp"

namespace corpusforge::stats {

std::string_view to_string(ZeroMethod m) { return m == ZeroMethod::pratt ? "pratt" : "wilcox"; }

std::string_view to_string(WilcoxonMethod m) {
  switch (m) {
    case WilcoxonMethod::automatic: return "auto";
    case WilcoxonMethod::exact: return "exact";
    case WilcoxonMethod::normal: return "normal_approx";
  }
  return "auto";
}

std::vector<double> average_ranks(std::span<const double> values) {
  std::vector<std::size_t> order(values.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return values[a] < values[b]; });
  std::vector<double> ranks(values.size());
  for (std::size_t i = 0; i < order.size();) {
    std::size_t j = i;
    while (j + 1 < order.size() && values[order[j + 1]] == values[order[i]]) ++j;
    const double r = (static_cast<double>(i + 1) + static_cast<double>(j + 1)) / 2.0;
    for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
    i = j + 1;
  }
  return ranks;
}

namespace {

// P(T+ <= w) under the null, by counting sign patterns. Ranks are multiples
// of 0.5, so doubled ranks index an integer table.
double exact_lower_tail(const std::vector<double>& ranks, double w) {
  std::vector<int> doubled;
  int total = 0;
  for (double r : ranks) {
    doubled.push_back(static_cast<int>(std::lround(2.0 * r)));
    total += doubled.back();
  }
  std::vector<std::uint64_t> count(static_cast<std::size_t>(total) + 1, 0);
  count[0] = 1;
  int reach = 0;
  for (int d : doubled) {
    for (int s = reach; s >= 0; --s) {
      if (count[s]) count[s + d] += count[s];
    }
    reach += d;
  }
  const int limit = static_cast<int>(std::lround(2.0 * w));
  long double hits = 0;
  for (int s = 0; s <= std::min(limit, total); ++s) hits += static_cast<long double>(count[s]);
  return static_cast<double>(hits / std::ldexp(1.0L, static_cast<int>(ranks.size())));
}

}  // namespace

WilcoxonResult wilcoxon_signed_rank(std::span<const double> d, const WilcoxonOptions& options) {
  if (d.empty()) throw ValidationError("wilcoxon: need at least one pair");
  for (double v : d) {
    if (!std::isfinite(v)) throw ValidationError("wilcoxon: differences must be finite");
  }
  WilcoxonResult r;
  r.n_input = d.size();
  r.zero_method = options.zero_method;

  std::vector<double> kept;
  for (double v : d) {
    if (options.zero_method == ZeroMethod::pratt || v != 0.0) kept.push_back(v);
  }
  std::vector<double> mags;
  for (double v : kept) mags.push_back(std::fabs(v));
  const std::vector<double> all_ranks = average_ranks(mags);

  std::vector<double> ranks;
  for (std::size_t i = 0; i < kept.size(); ++i) {
    if (kept[i] == 0.0) continue;
    ranks.push_back(all_ranks[i]);
    (kept[i] > 0 ? r.w_plus : r.w_minus) += all_ranks[i];
  }
  r.n_effective = ranks.size();
  r.statistic = std::min(r.w_plus, r.w_minus);
  if (r.n_effective == 0) {
    r.degenerate = true;
    r.p_two_sided = 1.0;
    r.method = options.method == WilcoxonMethod::normal ? WilcoxonMethod::normal : WilcoxonMethod::exact;
    return r;
  }

  const bool exact = options.method == WilcoxonMethod::exact ||
                     (options.method == WilcoxonMethod::automatic && r.n_effective <= options.exact_max_n);
  if (exact) {
    if (r.n_effective > 62) throw ValidationError("wilcoxon: exact method limited to 62 nonzero differences");
    r.method = WilcoxonMethod::exact;
    r.p_two_sided = std::min(1.0, 2.0 * exact_lower_tail(ranks, r.statistic));
    return r;
  }

  r.method = WilcoxonMethod::normal;
  double sum = 0.0, sum_sq = 0.0;
  for (double x : ranks) {
    sum += x;
    sum_sq += x * x;
  }
  // Each rank enters T+ with probability 1/2, so E = sum/2 and
  // Var = sum(r^2)/4; with tied mid-ranks this is the tie-corrected variance.
  const double mean = sum / 2.0;
  const double sd = std::sqrt(sum_sq / 4.0);
  const double dev = std::max(0.0, std::fabs(r.statistic - mean) - 0.5);
  const double z = dev / sd;
  r.z = r.statistic < mean ? -z : z;
  r.p_two_sided = std::min(1.0, std::erfc(z / std::sqrt(2.0)));
  return r;
}

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                    const WilcoxonOptions& options) {
  if (x.size() != y.size()) throw ValidationError("wilcoxon: x and y must have equal length");
  std::vector<double> d(x.size());
  for (std::size_t i = 0; i < x.size(); ++i) d[i] = x[i] - y[i];
  return wilcoxon_signed_rank(std::span<const double>(d), options);
}

nlohmann::json to_json(const WilcoxonResult& r) {
  return {{"n_input", r.n_input},
          {"n_effective", r.n_effective},
          {"w_plus", r.w_plus},
          {"w_minus", r.w_minus},
          {"statistic", r.statistic},
          {"p_two_sided", r.p_two_sided},
          {"method", to_string(r.method)},
          {"zero_method", to_string(r.zero_method)},
          {"degenerate", r.degenerate},
          {"z", r.z ? nlohmann::json(*r.z) : nlohmann::json(nullptr)}};
}

IccResult icc_two_way(const std::vector<std::vector<double>>& grid) {
  const std::size_t k = grid.size();
  if (k < 2) throw ValidationError("icc: need at least 2 readers");
  const std::size_t n = grid.front().size();
  if (n < 2) throw ValidationError("icc: need at least 2 cases");
  for (const auto& row : grid) {
    if (row.size() != n) throw ValidationError("icc: incomplete grid");
    for (double v : row) {
      if (!std::isfinite(v)) throw ValidationError("icc: ratings must be finite");
    }
  }
  double grand = 0.0;
  std::vector<double> case_mean(n, 0.0), reader_mean(k, 0.0);
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < n; ++c) {
      grand += grid[r][c];
      case_mean[c] += grid[r][c];
      reader_mean[r] += grid[r][c];
    }
  }
  grand /= static_cast<double>(n * k);
  for (double& m : case_mean) m /= static_cast<double>(k);
  for (double& m : reader_mean) m /= static_cast<double>(n);

  double ss_total = 0.0, ss_cases = 0.0, ss_readers = 0.0;
  for (std::size_t r = 0; r < k; ++r) {
    for (std::size_t c = 0; c < n; ++c) ss_total += (grid[r][c] - grand) * (grid[r][c] - grand);
  }
  for (double m : case_mean) ss_cases += (m - grand) * (m - grand);
  ss_cases *= static_cast<double>(k);
  for (double m : reader_mean) ss_readers += (m - grand) * (m - grand);
  ss_readers *= static_cast<double>(n);
  const double ss_error = std::max(0.0, ss_total - ss_cases - ss_readers);

  const double dn = static_cast<double>(n), dk = static_cast<double>(k);
  IccResult out;
  out.readers = k;
  out.cases = n;
  out.ms_rows = ss_cases / (dn - 1.0);
  out.ms_cols = ss_readers / (dk - 1.0);
  out.ms_error = ss_error / ((dn - 1.0) * (dk - 1.0));
  const double denom = out.ms_rows + (dk - 1.0) * out.ms_error + dk * (out.ms_cols - out.ms_error) / dn;
  if (!(std::fabs(denom) > 1e-15)) throw ValidationError("icc: undefined for a grid without variance");
  out.icc = std::clamp((out.ms_rows - out.ms_error) / denom, -1.0, 1.0);
  return out;
}

nlohmann::json to_json(const IccResult& r) {
  return {{"icc", r.icc}, {"form", r.form},       {"readers", r.readers}, {"cases", r.cases},
          {"ms_rows", r.ms_rows}, {"ms_cols", r.ms_cols}, {"ms_error", r.ms_error}};
}

MeanSem mean_sem(std::span<const double> values) {
  if (values.empty()) throw ValidationError("mean_sem: empty input");
  MeanSem m;
  m.n = values.size();
  for (double v : values) m.mean += v;
  m.mean /= static_cast<double>(m.n);
  if (m.n > 1) {
    double ss = 0.0;
    for (double v : values) ss += (v - m.mean) * (v - m.mean);
    m.sd = std::sqrt(ss / static_cast<double>(m.n - 1));
    m.sem = m.sd / std::sqrt(static_cast<double>(m.n));
  }
  return m;
}

nlohmann::json to_json(const MeanSem& m) {
  return {{"mean", m.mean}, {"sem", m.sem}, {"sd", m.sd}, {"n", m.n}};
}

}  // namespace corpusforge::stats
