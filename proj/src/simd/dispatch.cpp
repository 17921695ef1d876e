#include <atomic>
#include <cstdlib>
#include <string>

#include "corpusforge/common/errors.hpp"
#include "corpusforge/simd/kernels.hpp"

namespace corpusforge::simd {
namespace {

Isa detect_best() {
#if defined(CORPUSFORGE_HAVE_AVX2_TU)
  __builtin_cpu_init();
  if (__builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma")) return Isa::avx2;
#endif
#if defined(CORPUSFORGE_HAVE_NEON_TU)
  return Isa::neon;
#endif
  return Isa::scalar;
}

Isa initial_isa() {
  if (const char* env = std::getenv("CORPUSFORGE_SIMD")) {
    const std::string v(env);
    for (Isa isa : {Isa::scalar, Isa::avx2, Isa::neon}) {
      if (v == isa_name(isa) && isa_available(isa)) return isa;
    }
  }
  return detect_best();
}

std::atomic<Isa>& current() {
  static std::atomic<Isa> isa{initial_isa()};
  return isa;
}

void check_sizes(std::size_t a, std::size_t b) {
  if (a != b) throw ValidationError("vector length mismatch");
}

}  // namespace

std::string_view isa_name(Isa isa) {
  switch (isa) {
    case Isa::scalar: return "scalar";
    case Isa::avx2: return "avx2";
    case Isa::neon: return "neon";
  }
  return "unknown";
}

bool isa_available(Isa isa) {
  switch (isa) {
    case Isa::scalar: return true;
    case Isa::avx2:
#if defined(CORPUSFORGE_HAVE_AVX2_TU)
      __builtin_cpu_init();
      return __builtin_cpu_supports("avx2") && __builtin_cpu_supports("fma");
#else
      return false;
#endif
    case Isa::neon:
#if defined(CORPUSFORGE_HAVE_NEON_TU)
      return true;
#else
      return false;
#endif
  }
  return false;
}

Isa active_isa() { return current().load(std::memory_order_relaxed); }

void set_isa(Isa isa) {
  if (!isa_available(isa)) {
    throw ValidationError("SIMD variant not available on this CPU: " + std::string(isa_name(isa)));
  }
  current().store(isa, std::memory_order_relaxed);
}

const KernelTable& table(Isa isa) {
  if (!isa_available(isa)) {
    throw ValidationError("SIMD variant not available on this CPU: " + std::string(isa_name(isa)));
  }
  switch (isa) {
#if defined(CORPUSFORGE_HAVE_AVX2_TU)
    case Isa::avx2: return detail::avx2_table();
#endif
#if defined(CORPUSFORGE_HAVE_NEON_TU)
    case Isa::neon: return detail::neon_table();
#endif
    default: return detail::scalar_table();
  }
}

const KernelTable& active() { return table(active_isa()); }

double dot(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size());
  return active().dot(a.data(), b.data(), a.size());
}

double squared_distance(std::span<const double> a, std::span<const double> b) {
  check_sizes(a.size(), b.size());
  return active().squared_distance(a.data(), b.data(), a.size());
}

void axpy(double alpha, std::span<const double> x, std::span<double> y) {
  check_sizes(x.size(), y.size());
  active().axpy(alpha, x.data(), y.data(), x.size());
}

void dot_rows(std::span<const double> query, std::span<const double> rows, std::size_t dim,
              std::span<double> out) {
  check_sizes(query.size(), dim);
  if (dim == 0 ? !rows.empty() : rows.size() % dim != 0) {
    throw ValidationError("row buffer is not a multiple of dim");
  }
  const std::size_t n_rows = dim == 0 ? 0 : rows.size() / dim;
  check_sizes(out.size(), n_rows);
  active().dot_rows(query.data(), rows.data(), n_rows, dim, out.data());
}

}  // namespace corpusforge::simd
