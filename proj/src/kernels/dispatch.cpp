#include <atomic>
#include <cstdlib>
#include <string>

#include "aeflow/kernels.hpp"

namespace aeflow::kernels {

namespace {

Isa detect() {
  const char* force = std::getenv("AEFLOW_FORCE_SCALAR");
  if (force != nullptr && *force != '\0' && std::string(force) != "0") return Isa::scalar;
  return avx2_available() ? Isa::avx2 : Isa::scalar;
}

std::atomic<int>& selected() {
  static std::atomic<int> isa{static_cast<int>(detect())};
  return isa;
}

}  // namespace

bool avx2_available() {
#if defined(AEFLOW_HAVE_AVX2) && (defined(__GNUC__) || defined(__clang__))
  return __builtin_cpu_supports("avx2");
#else
  return false;
#endif
}

Isa active_isa() { return static_cast<Isa>(selected().load(std::memory_order_relaxed)); }

void force_isa(Isa isa) {
  if (isa == Isa::avx2 && !avx2_available()) isa = Isa::scalar;
  selected().store(static_cast<int>(isa));
}

std::string_view isa_name(Isa isa) { return isa == Isa::avx2 ? "avx2" : "scalar"; }

#if defined(AEFLOW_HAVE_AVX2)
#define AEFLOW_DISPATCH(fn, args)                                 \
  do {                                                            \
    if (active_isa() == Isa::avx2) return avx2::fn(args);         \
    return scalar::fn(args);                                      \
  } while (false)
#else
#define AEFLOW_DISPATCH(fn, args) return scalar::fn(args)
#endif

void euler_step(const EulerStepArgs& a) { AEFLOW_DISPATCH(euler_step, a); }
void log_density_step(const LogDensityArgs& a) { AEFLOW_DISPATCH(log_density_step, a); }
void ball_max(const BallMaxArgs& a) { AEFLOW_DISPATCH(ball_max, a); }

}  // namespace aeflow::kernels
