#pragma once

#include <cstddef>
#include <span>
#include <string_view>

// Data-parallel inner loops. Every kernel exists as a scalar reference and, on x86-64,
// an AVX2 variant. SIMD lanes always map to independent particles or lattice nodes and
// each lane performs the scalar operation sequence exactly (no FMA, no reassociation),
// so the variants agree bitwise.

namespace aeflow::kernels {

enum class Isa { scalar, avx2 };

/// ISA selected at first use: AVX2 when the CPU supports it, unless the environment
/// variable AEFLOW_FORCE_SCALAR is set to a non-empty value other than "0".
Isa active_isa();
void force_isa(Isa isa);  // tests and benchmarks
std::string_view isa_name(Isa isa);
bool avx2_available();

/// x[p*d+a] <- x[p*d+a] + drift[p*d+a]*dt + sum_l diff[(p*d+a)*m+l]*dw[l], for p < count.
/// Rows with zero drift/diffusion are left bitwise unchanged.
struct EulerStepArgs {
  double* x;
  const double* drift;
  const double* diff;
  const double* dw;
  double dt;
  std::size_t count;
  int d;
  int m;
};

/// log_rho[p] <- log_rho[p] + rate[p]*dt + sum_l coef[p*m+l]*dw[l].
struct LogDensityArgs {
  double* log_rho;
  const double* rate;
  const double* coef;
  const double* dw;
  double dt;
  std::size_t count;
  int m;
};

/// For `count` consecutive nodes starting at `base`: running sums over `offsets`
/// (already sorted by distance); after offset index checkpoint_end[c]-1 the average
/// sum / node_count[c] is formed, and out[n] = max over checkpoints.
struct BallMaxArgs {
  const double* base;
  std::span<const std::ptrdiff_t> offsets;
  std::span<const std::size_t> checkpoint_end;
  std::span<const double> node_count;
  std::size_t count;
  double* out;
};

void euler_step(const EulerStepArgs& a);
void log_density_step(const LogDensityArgs& a);
void ball_max(const BallMaxArgs& a);

namespace scalar {
void euler_step(const EulerStepArgs& a);
void log_density_step(const LogDensityArgs& a);
void ball_max(const BallMaxArgs& a);
}  // namespace scalar

#if defined(AEFLOW_HAVE_AVX2)
namespace avx2 {
void euler_step(const EulerStepArgs& a);
void log_density_step(const LogDensityArgs& a);
void ball_max(const BallMaxArgs& a);
}  // namespace avx2
#endif

}  // namespace aeflow::kernels
