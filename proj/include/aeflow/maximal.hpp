#pragma once

#include <cstdint>
#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "aeflow/coeff.hpp"
#include "aeflow/common.hpp"
#include "aeflow/io.hpp"

namespace aeflow {

/// Scalar samples on a cell-centred lattice.
struct GridFunction {
  Lattice lattice;
  std::vector<double> values;

  static GridFunction sample(const Lattice& lattice, const std::function<double(std::span<const double>)>& f);
  std::size_t size() const { return values.size(); }
  CsvTable table() const;
  static GridFunction read_csv(const std::filesystem::path& path, const Lattice& lattice);
};

/// Radii h * 2^{j / radii_per_octave}, j = 1, 2, ..., up to R (inclusive).
std::vector<double> radius_ladder(double h, double radius, int radii_per_octave);

struct MaximalResult {
  GridFunction value;
  std::vector<std::uint8_t> boundary_incomplete;  // the R-ball leaves the lattice box
  std::vector<double> radii;
};

/// M_R f(x) = max over the radius ladder (and the single-node ball) of the average of
/// |f| over lattice nodes within distance r. Averages divide by the number of nodes in
/// the ball; near the box boundary only nodes inside the box are counted and the node is
/// flagged. Requires at least 8 radii in (h, R].
MaximalResult maximal_function(const GridFunction& f, double radius, int radii_per_octave = 4, int workers = 0);

/// |grad f| by central differences (one-sided at the box faces).
GridFunction gradient_norm(const GridFunction& f);

struct MorreyReport {
  double c_morrey = 0.0;   // max |f(x)-f(y)| / (|x-y| (M_R|grad f|^q(x))^{1/q})
  double c_two_point = 0.0;  // max |f(x)-f(y)| / (|x-y| (M_R|grad f|(x) + M_R|grad f|(y)))
  std::size_t pairs_used = 0;
  std::size_t pairs_excluded = 0;  // straddling a singularity, too far apart, or boundary-incomplete
  bool finite = false;
};

/// Random node pairs with 0 < |x - y| <= R.
std::vector<std::pair<std::size_t, std::size_t>> sample_pairs(const Lattice& lattice, double radius, std::size_t count,
                                                              std::uint64_t seed);

MorreyReport check_morrey_pointwise(const GridFunction& f, const GridFunction& grad_norm, double q, double radius,
                                    const std::vector<std::pair<std::size_t, std::size_t>>& pairs,
                                    const std::vector<Singularity>& singularities = {}, int radii_per_octave = 4);

struct LlogLRow {
  double lambda = 0.0;
  double maximal_integral = 0.0;  // int_{B_N} M_R|lambda f|
  double llogl_integral = 0.0;    // int_{B_{N+R}} |lambda f| log(|lambda f| + 1)
};

struct LlogLReport {
  std::vector<LlogLRow> rows;
  double intercept = 0.0, slope = 0.0;  // least-squares affine fit left ~ a + b right
  bool consistent = false;              // left/right non-increasing along the family
};

LlogLReport check_llogl_bound(const GridFunction& f, double n_radius, double radius,
                              const std::vector<double>& lambdas = {1, 2, 4, 8}, int radii_per_octave = 4);

struct LpReport {
  double p = 0.0;
  std::vector<double> lambdas;
  std::vector<double> ratios;  // (int_{B_N} (M_R|lf|)^p)^{1/p} / (int_{B_{N+R}} |lf|^p)^{1/p}
  double max_relative_spread = 0.0;
  bool bounded = false;
};

LpReport check_lp_bound(const GridFunction& f, double p, double n_radius, double radius,
                        const std::vector<double>& lambdas = {1, 2, 4, 8}, int radii_per_octave = 4);

}  // namespace aeflow
