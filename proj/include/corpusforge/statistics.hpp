#pragma once

#include <optional>
#include <span>
#include <string_view>
#include <vector>

#include "json.hpp"

namespace corpusforge::stats {

enum class ZeroMethod { wilcox, pratt };
enum class WilcoxonMethod { automatic, exact, normal };

std::string_view to_string(ZeroMethod m);
std::string_view to_string(WilcoxonMethod m);

struct WilcoxonOptions {
  ZeroMethod zero_method = ZeroMethod::wilcox;
  WilcoxonMethod method = WilcoxonMethod::automatic;
  std::size_t exact_max_n = 25;
};

struct WilcoxonResult {
  std::size_t n_input = 0;
  std::size_t n_effective = 0;  // nonzero differences
  double w_plus = 0.0;
  double w_minus = 0.0;
  double statistic = 0.0;  // min(w_plus, w_minus)
  double p_two_sided = 1.0;
  WilcoxonMethod method = WilcoxonMethod::exact;  // exact or normal once computed
  ZeroMethod zero_method = ZeroMethod::wilcox;
  bool degenerate = false;
  std::optional<double> z;  // normal branch only
};

// Average ranks (1-based) of the values, ties sharing the mean rank.
std::vector<double> average_ranks(std::span<const double> values);

WilcoxonResult wilcoxon_signed_rank(std::span<const double> x, std::span<const double> y,
                                    const WilcoxonOptions& options = {});
WilcoxonResult wilcoxon_signed_rank(std::span<const double> differences, const WilcoxonOptions& options = {});

nlohmann::json to_json(const WilcoxonResult& r);

struct IccResult {
  double icc = 0.0;
  std::string_view form = "ICC(2,1)";
  std::size_t readers = 0;
  std::size_t cases = 0;
  double ms_rows = 0.0;    // between cases
  double ms_cols = 0.0;    // between readers
  double ms_error = 0.0;
};

// grid[reader][case]. Two-way random effects, absolute agreement, single
// measure. Throws ValidationError when the grid is ragged, smaller than 2x2,
// or has no variance at all (ICC undefined).
IccResult icc_two_way(const std::vector<std::vector<double>>& grid);

nlohmann::json to_json(const IccResult& r);

struct MeanSem {
  double mean = 0.0;
  double sem = 0.0;
  double sd = 0.0;  // sample SD, 0 for n = 1
  std::size_t n = 0;
};

MeanSem mean_sem(std::span<const double> values);

nlohmann::json to_json(const MeanSem& m);

}  // namespace corpusforge::stats
