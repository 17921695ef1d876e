#pragma once

// Dense double-precision kernels behind the embedding geometry (cosine,
// k-means distances, BERTScore similarity). Each ISA provides the same table;
// the scalar table is the reference every vector variant is tested against.

#include <cstddef>
#include <span>
#include <string_view>

namespace corpusforge::simd {

enum class Isa { scalar, avx2, neon };

struct KernelTable {
  double (*dot)(const double* a, const double* b, std::size_t n);
  double (*squared_distance)(const double* a, const double* b, std::size_t n);
  // y += alpha * x
  void (*axpy)(double alpha, const double* x, double* y, std::size_t n);
  // out[r] = dot(query, rows + r * dim)
  void (*dot_rows)(const double* query, const double* rows, std::size_t n_rows,
                   std::size_t dim, double* out);
};

std::string_view isa_name(Isa isa);
bool isa_available(Isa isa);

// Best ISA the running CPU supports, unless overridden by set_isa() or the
// CORPUSFORGE_SIMD environment variable ("scalar", "avx2", "neon").
Isa active_isa();
void set_isa(Isa isa);

const KernelTable& table(Isa isa);
const KernelTable& active();

double dot(std::span<const double> a, std::span<const double> b);
double squared_distance(std::span<const double> a, std::span<const double> b);
void axpy(double alpha, std::span<const double> x, std::span<double> y);
void dot_rows(std::span<const double> query, std::span<const double> rows,
              std::size_t dim, std::span<double> out);

namespace detail {
const KernelTable& scalar_table();
#if defined(CORPUSFORGE_HAVE_AVX2_TU)
const KernelTable& avx2_table();
#endif
#if defined(CORPUSFORGE_HAVE_NEON_TU)
const KernelTable& neon_table();
#endif
}  // namespace detail

}  // namespace corpusforge::simd
