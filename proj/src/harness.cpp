#include "aeflow/harness.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <map>
#include <optional>
#include <ostream>
#include <set>
#include <sstream>

#include "aeflow/density.hpp"
#include "aeflow/invariant.hpp"
#include "aeflow/io.hpp"
#include "aeflow/presets.hpp"
#include "aeflow/transport.hpp"

#ifndef AEFLOW_VERSION
#define AEFLOW_VERSION "0.0.0"
#endif

namespace aeflow {

using json = nlohmann::ordered_json;

namespace {

template <class T>
T as(const json& j, const std::string& path) {
  try {
    return j.get<T>();
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError(path, std::string("wrong type (") + e.what() + ")");
  }
}

/// Reads keys of a config block, recording every value actually used (defaults
/// included) so the manifest echoes all numerics.
class Block {
 public:
  Block(const json& j, std::string where) : j_(j), where_(std::move(where)) {
    if (!j_.is_null() && !j_.is_object()) throw ValidationError(where_, "must be an object");
  }

  bool has(const std::string& key) const { return j_.is_object() && j_.contains(key); }

  template <class T>
  T get(const std::string& key, T def) {
    T v = has(key) ? as<T>(j_.at(key), path(key)) : std::move(def);
    resolved_[key] = v;
    return v;
  }

  template <class T>
  T require(const std::string& key) {
    if (!has(key)) throw ValidationError(path(key), "required");
    T v = as<T>(j_.at(key), path(key));
    resolved_[key] = v;
    return v;
  }

  const json& raw(const std::string& key) const {
    static const json null_json;
    return has(key) ? j_.at(key) : null_json;
  }
  void record(const std::string& key, const json& v) { resolved_[key] = v; }

  std::string path(const std::string& key) const { return where_ + "." + key; }
  const json& resolved() const { return resolved_; }

 private:
  const json& j_;
  std::string where_;
  json resolved_ = json::object();
};

PresetConfig parse_preset(const json& j, const std::string& where) {
  if (!j.is_object()) throw ValidationError(where, "must be an object");
  PresetConfig p;
  if (!j.contains("name")) throw ValidationError(where + ".name", "required");
  p.name = as<std::string>(j.at("name"), where + ".name");
  bool known = false;
  for (const auto& info : list_presets()) known = known || info.name == p.name;
  if (!known) throw ValidationError(where + ".name", "unknown preset '" + p.name + "'");
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> keys{"name", "d", "m", "beta", "level", "A", "sigma", "v",
                                            "path", "mollify", "quadrature_order"};
    if (!keys.count(key)) throw ValidationError(where + "." + key, "unknown key");
  }
  if (j.contains("A")) p.a = as<std::vector<double>>(j.at("A"), where + ".A");
  if (j.contains("sigma")) p.sigma = as<std::vector<double>>(j.at("sigma"), where + ".sigma");
  if (j.contains("v")) p.v = as<std::vector<double>>(j.at("v"), where + ".v");
  if (j.contains("d")) {
    p.d = as<int>(j.at("d"), where + ".d");
  } else if (!p.v.empty()) {
    p.d = static_cast<int>(p.v.size());
  } else if (!p.a.empty()) {
    p.d = static_cast<int>(std::lround(std::sqrt(static_cast<double>(p.a.size()))));
  } else if (p.name == "rotation") {
    p.d = 2;
  }
  if (p.d < 1) throw ValidationError(where + ".d", "must be >= 1");
  if (j.contains("m")) p.m = as<int>(j.at("m"), where + ".m");
  if (j.contains("beta")) p.beta = as<double>(j.at("beta"), where + ".beta");
  if (j.contains("level") && !j.at("level").is_null()) p.level = as<int>(j.at("level"), where + ".level");
  if (j.contains("path")) p.path = as<std::string>(j.at("path"), where + ".path");
  if (j.contains("mollify") && !j.at("mollify").is_null()) p.mollify = as<int>(j.at("mollify"), where + ".mollify");
  if (j.contains("quadrature_order")) p.quadrature_order = as<int>(j.at("quadrature_order"), where + ".quadrature_order");
  return p;
}

json preset_json(const PresetConfig& p) {
  json j;
  j["name"] = p.name;
  j["d"] = p.d;
  if (p.m) j["m"] = p.m;
  if (p.name == "example_sec6") j["beta"] = p.beta;
  j["level"] = p.level ? json(*p.level) : json(nullptr);
  if (!p.a.empty()) j["A"] = p.a;
  if (!p.sigma.empty()) j["sigma"] = p.sigma;
  if (!p.v.empty()) j["v"] = p.v;
  if (!p.path.empty()) j["path"] = p.path;
  j["mollify"] = p.mollify ? json(*p.mollify) : json(nullptr);
  j["quadrature_order"] = p.quadrature_order;
  return j;
}

std::vector<double> diffusion_matrix(const PresetConfig& p, int& m) {
  if (p.sigma.empty()) throw ValidationError("preset.sigma", "required for preset '" + p.name + "'");
  m = p.m ? p.m : static_cast<int>(p.sigma.size()) / p.d;
  if (m < 1 || p.sigma.size() != static_cast<std::size_t>(p.d) * m)
    throw ValidationError("preset.sigma", "must hold d x m entries");
  return p.sigma;
}

GridConfig parse_grid(const json& j) {
  GridConfig g;
  if (j.is_null()) return g;
  if (!j.is_object()) throw ValidationError("grid", "must be an object");
  for (const auto& [key, _] : j.items()) {
    static const std::set<std::string> keys{"kind", "lower", "upper", "per_axis", "exclude_radius",
                                            "r_in", "r_out", "count", "seed", "points"};
    if (!keys.count(key)) throw ValidationError("grid." + key, "unknown key");
  }
  if (j.contains("kind")) g.kind = as<std::string>(j.at("kind"), "grid.kind");
  if (j.contains("lower")) g.lower = as<std::vector<double>>(j.at("lower"), "grid.lower");
  if (j.contains("upper")) g.upper = as<std::vector<double>>(j.at("upper"), "grid.upper");
  if (j.contains("per_axis")) g.per_axis = as<std::int64_t>(j.at("per_axis"), "grid.per_axis");
  if (j.contains("exclude_radius")) g.exclude_radius = as<double>(j.at("exclude_radius"), "grid.exclude_radius");
  if (j.contains("r_in")) g.r_in = as<double>(j.at("r_in"), "grid.r_in");
  if (j.contains("r_out")) g.r_out = as<double>(j.at("r_out"), "grid.r_out");
  if (j.contains("count")) g.count = as<std::size_t>(j.at("count"), "grid.count");
  if (j.contains("seed")) g.seed = as<std::uint64_t>(j.at("seed"), "grid.seed");
  if (j.contains("points")) g.points = as<std::vector<std::vector<double>>>(j.at("points"), "grid.points");
  if (g.kind != "lattice" && g.kind != "shell" && g.kind != "points")
    throw ValidationError("grid.kind", "must be lattice, shell or points");
  return g;
}

json grid_json(const GridConfig& g) {
  json j;
  j["kind"] = g.kind;
  if (g.kind == "lattice") {
    j["lower"] = g.lower;
    j["upper"] = g.upper;
    j["per_axis"] = g.per_axis;
    j["exclude_radius"] = g.exclude_radius;
  }
  if (g.kind == "shell" || g.r_out > 0.0) {
    j["r_in"] = g.r_in;
    j["r_out"] = g.r_out;
  }
  if (g.kind == "shell") {
    j["count"] = g.count;
    j["seed"] = g.seed;
  }
  if (g.kind == "points") j["points"] = g.points;
  return j;
}

std::string seed_dir(std::uint64_t seed) { return "seed_" + std::to_string(seed); }

std::string step_tag(std::int64_t k) {
  std::ostringstream s;
  s << std::setw(6) << std::setfill('0') << k;
  return s.str();
}

class Output {
 public:
  Output(std::filesystem::path dir, RunResult& result) : dir_(std::move(dir)), result_(result) {
    std::filesystem::create_directories(dir_);
  }
  void csv(const std::string& rel, const CsvTable& t) {
    const auto p = dir_ / rel;
    std::filesystem::create_directories(p.parent_path());
    t.write(p);
    result_.outputs.push_back(rel);
  }
  void text(const std::string& rel, const std::string& body) {
    const auto p = dir_ / rel;
    std::filesystem::create_directories(p.parent_path());
    std::ofstream f(p, std::ios::binary);
    if (!f) throw std::runtime_error("cannot write " + p.string());
    f << body << '\n';
    result_.outputs.push_back(rel);
  }
  const std::filesystem::path& dir() const { return dir_; }

 private:
  std::filesystem::path dir_;
  RunResult& result_;
};

void require_seeds(const ExperimentConfig& c) {
  if (c.seeds.empty()) throw ValidationError("seeds", "at least one seed is required");
}

InitialDatum parse_datum(const json& j, int d) {
  Block b(j, "transport.datum");
  const auto kind = b.get<std::string>("kind", "bump");
  if (kind == "bump") return InitialDatum::bump(b.get("center", std::vector<double>(d, 0.0)), b.get("width", 1.0));
  if (kind == "gaussian")
    return InitialDatum::gaussian(b.get("center", std::vector<double>(d, 0.0)), b.get("width", 1.0));
  if (kind == "indicator")
    return InitialDatum::indicator_box(b.require<std::vector<double>>("lower"), b.require<std::vector<double>>("upper"));
  if (kind == "constant") return InitialDatum::constant(b.get("value", 1.0));
  throw ValidationError("transport.datum.kind", "unknown datum '" + kind + "'");
}

// ---------------------------------------------------------------------------------

void run_simulate(const ExperimentConfig& c, Block& p, Output& out, RunResult& res) {
  require_seeds(c);
  const auto field = build_field(c.preset);
  const auto grid = build_grid(c.grid, field->dim());
  const bool lattice = grid.lattice_spacing > 0.0;
  const bool track = p.get("track_density", false);
  const bool compression = p.get("compression", lattice);
  const double bin_width = p.get("bin_width", 0.0);
  const auto tg = TimeGrid::from_horizon(c.horizon, c.dt);
  auto opt = c.flow_options();
  opt.track_density = track;
  std::vector<FlowEnsemble> kept;
  std::size_t escaped = 0, singular = 0;
  for (auto seed : c.seeds) {
    auto noise = std::make_shared<const NoiseBundle>(generate(seed, field->noise_dim(), tg, c.workers));
    auto ens = integrate_forward(*field, noise, grid, opt);
    for (std::size_t s = 0; s < ens.save_steps.size(); ++s)
      out.csv(seed_dir(seed) + "/snapshot_" + step_tag(ens.save_steps[s]) + ".csv", ens.snapshot_table(s));
    escaped += ens.count(ParticleState::escaped);
    singular += ens.count(ParticleState::singular_hit);
    if (compression) kept.push_back(std::move(ens));
  }
  res.summary["particles"] = grid.size();
  res.summary["seeds"] = c.seeds.size();
  res.summary["escaped"] = escaped;
  res.summary["singular_hit"] = singular;
  if (compression) {
    if (!lattice) throw ValidationError("simulate.compression", "compression estimates need a lattice grid");
    std::vector<const FlowEnsemble*> ptrs;
    for (const auto& e : kept) ptrs.push_back(&e);
    const auto est = estimate_compression(ptrs, bin_width);
    CsvTable t({"time", "sup_density", "bins_nonzero", "escaped_count"});
    for (const auto& s : est.snapshots) t.row().add(s.time).add(s.sup_density).add(s.bins_nonzero).add(s.escaped_count);
    out.csv("compression.csv", t);
    out.text("compression.json", est.to_json());
    res.summary["K_hat"] = est.k_hat;
    res.summary["K_hat_standard_error"] = est.k_hat_standard_error;
    res.summary["bin_width"] = est.bin_width;
    if (p.has("max_k_hat") || p.has("min_k_hat")) {
      const double hi = p.get("max_k_hat", std::numeric_limits<double>::infinity());
      const double lo = p.get("min_k_hat", 0.0);
      if (!(est.k_hat <= hi && est.k_hat >= lo)) {
        res.status = kExitAssertion;
        res.message = "K_hat " + format_double(est.k_hat) + " outside [" + format_double(lo) + ", " +
                      format_double(hi) + "]";
      }
    }
  }
}

void run_jacobian(const ExperimentConfig& c, Block& p, Output& out, RunResult& res) {
  require_seeds(c);
  const auto field = build_field(c.preset);
  const auto points = p.require<std::vector<std::vector<double>>>("points");
  const double h_fd = p.get("h_fd", 1e-5);
  const double tol = p.get("tolerance", 1e-4);
  const bool check_det = p.get("check_det", true);
  const bool has_ref = p.has("reference_rho");
  const double ref = has_ref ? p.require<double>("reference_rho") : 0.0;
  const double ref_tol = p.get("rho_tolerance", 1e-6);
  double worst_ref = 0.0;
  const auto tg = TimeGrid::from_horizon(c.horizon, c.dt);
  std::vector<std::string> header{"seed", "point"};
  for (int a = 0; a < field->dim(); ++a) header.push_back("x" + std::to_string(a));
  header.insert(header.end(), {"det", "rho", "rel_error", "condition", "ill_conditioned", "frozen"});
  CsvTable t(header);
  double worst = 0.0;
  for (auto seed : c.seeds) {
    auto noise = std::make_shared<const NoiseBundle>(generate(seed, field->noise_dim(), tg, c.workers));
    for (std::size_t i = 0; i < points.size(); ++i) {
      const auto rep = check_jacobian_identity(*field, noise, points[i], c.horizon, h_fd, c.flow_options());
      t.row().add(static_cast<long long>(seed)).add(i);
      for (double v : rep.x) t.add(v);
      t.add(rep.det).add(rep.rho).add(rep.rel_error).add(rep.condition).add(rep.ill_conditioned ? 1 : 0).add(
          rep.frozen ? 1 : 0);
      worst = std::max(worst, std::isfinite(rep.rel_error) ? rep.rel_error : std::numeric_limits<double>::infinity());
      if (has_ref) worst_ref = std::max(worst_ref, std::abs(rep.rho - ref) / ref);
    }
  }
  out.csv("jacobian.csv", t);
  res.summary["max_rel_error"] = worst;
  res.summary["tolerance"] = tol;
  if (has_ref) {
    res.summary["max_rho_rel_error_vs_reference"] = worst_ref;
    if (!(worst_ref < ref_tol)) {
      res.status = kExitAssertion;
      res.message = "rho differs from the reference by " + format_double(worst_ref) + " relative";
    }
  }
  if (check_det && !(worst < tol)) {
    res.status = kExitAssertion;
    res.message = "|det - rho| / rho = " + format_double(worst) + " >= " + format_double(tol);
  }
}

void run_stability(const ExperimentConfig& c, Block& p, Output& out, RunResult& res) {
  require_seeds(c);
  const auto mode = p.get<std::string>("mode", "cauchy");
  if (mode == "cauchy") {
    const auto levels = p.require<std::vector<int>>("levels");
    CauchyOptions opt;
    opt.horizon = c.horizon;
    opt.dt = c.dt;
    opt.q = p.get("q", 1.5);
    opt.n_radius = c.n_radius;
    opt.radius = c.radius;
    opt.delta = p.get("delta", 0.0);
    opt.distance_exclude = p.get("distance_exclude", 0.0);
    opt.distance_spacing = p.get("distance_spacing", 0.1);
    opt.flow = c.flow_options();
    const PresetConfig preset = c.preset;
    const auto grid = build_grid(c.grid, preset.d);
    const auto table = cauchy_diagnostic([&](int n) { return build_field_at_level(preset, n); }, levels, c.seeds,
                                         grid, opt);
    out.csv("cauchy.csv", table.table());
    const double first = table.rows.front().expected_integral, last = table.rows.back().expected_integral;
    bool decreasing = true;
    for (std::size_t i = 1; i < table.rows.size(); ++i)
      decreasing = decreasing && table.rows[i].delta_nm < table.rows[i - 1].delta_nm;
    res.summary["first_entry"] = first;
    res.summary["last_entry"] = last;
    res.summary["ratio"] = last / first;
    res.summary["delta_strictly_decreasing"] = decreasing;
    const double max_ratio = p.get("max_ratio", std::numeric_limits<double>::infinity());
    if (std::isfinite(max_ratio) && !(last < max_ratio * first && decreasing)) {
      res.status = kExitAssertion;
      res.message = "Cauchy ratio " + format_double(last / first) + " (limit " + format_double(max_ratio) +
                    "), delta decreasing: " + (decreasing ? "yes" : "no");
    }
    return;
  }
  if (mode != "uniqueness") throw ValidationError("stability.mode", "must be cauchy or uniqueness");
  if (c.deltas.empty()) throw ValidationError("truncation.deltas", "uniqueness needs a delta list");
  const auto fa = build_field(c.preset);
  const auto fb = p.has("second_preset") ? build_field(parse_preset(p.raw("second_preset"), "stability.second_preset"))
                                         : fa;
  if (p.has("second_preset")) p.record("second_preset", preset_json(parse_preset(p.raw("second_preset"), "stability.second_preset")));
  const int coarsen_b = p.get("second_coarsen", 1);
  const auto scheme_b = parse_scheme(p.get<std::string>("second_scheme", scheme_name(c.scheme)));
  const auto grid = build_grid(c.grid, fa->dim());
  const auto tg = TimeGrid::from_horizon(c.horizon, c.dt);
  auto opt = c.flow_options();
  if (opt.save_every <= 0) opt.save_every = 1;
  CsvTable t({"seed", "delta", "xi", "M", "first_term", "second_term", "bound", "empirical", "holds", "vacuous"});
  bool all = true;
  double worst_ratio = 0.0;
  for (auto seed : c.seeds) {
    const auto base = generate(seed, fa->noise_dim(), tg, c.workers);
    auto na = std::make_shared<const NoiseBundle>(base);
    auto nb = std::make_shared<const NoiseBundle>(coarsen_b == 1 ? base : coarsen(base, coarsen_b));
    const auto a = integrate_forward(*fa, na, grid, opt);
    auto ob = opt;
    ob.scheme = scheme_b;
    ob.save_every = std::max<std::int64_t>(1, opt.save_every / coarsen_b);
    const auto b = integrate_forward(*fb, nb, grid, ob);
    const auto rep = uniqueness_test(a, b, c.n_radius, c.radius, c.deltas);
    for (const auto& r : rep.rows) {
      const auto& ch = r.chebyshev;
      t.row().add(static_cast<long long>(seed)).add(r.delta).add(r.xi).add(ch.m).add(ch.first_term).add(
          ch.second_term).add(ch.bound).add(ch.empirical).add(ch.holds ? 1 : 0).add(ch.vacuous ? 1 : 0);
      all = all && ch.holds;
      worst_ratio = std::max(worst_ratio, ch.empirical / ch.bound);
    }
    res.summary["phi_integral"] = rep.phi_integral;
    res.summary["xi_slope"] = rep.xi_slope;
    res.summary["M"] = rep.m;
  }
  out.csv("uniqueness.csv", t);
  res.summary["chebyshev_holds"] = all;
  res.summary["max_empirical_over_bound"] = worst_ratio;
  if (!all) {
    res.status = kExitAssertion;
    res.message = "Chebyshev conversion violated";
  }
}

void run_transport(const ExperimentConfig& c, Block& p, Output& out, RunResult& res) {
  require_seeds(c);
  const auto field = build_field(c.preset);
  const int d = field->dim();
  const auto grid = build_grid(c.grid, d);
  const auto datum = parse_datum(p.raw("datum"), d);
  p.record("datum", p.raw("datum"));
  const auto tg = TimeGrid::from_horizon(c.horizon, c.dt);
  std::vector<std::int64_t> saves{0, tg.steps};
  if (c.save_every > 0)
    for (std::int64_t k = c.save_every; k < tg.steps; k += c.save_every) saves.push_back(k);
  const bool exact = p.get("exact_affine", false);
  const bool parabolic = p.has("parabolic_reference");
  std::vector<TransportSolution> kept;
  double exact_err = 0.0;
  bool max_principle = true;
  std::size_t undefined = 0;
  for (auto seed : c.seeds) {
    auto noise = std::make_shared<const NoiseBundle>(generate(seed, field->noise_dim(), tg, c.workers));
    const auto sol = solve_by_characteristics(field, noise, datum, grid, saves, c.flow_options());
    for (std::size_t s = 0; s < sol.save_steps.size(); ++s) {
      out.csv(seed_dir(seed) + "/u_" + step_tag(sol.save_steps[s]) + ".csv", sol.snapshot_table(s));
      undefined += sol.undefined[s];
    }
    max_principle = max_principle && sol.max_principle;
    if (parabolic) kept.push_back(sol);
    if (exact) {
      if (c.preset.name != "constant") throw ValidationError("transport.exact_affine", "needs the constant preset");
      int m = 0;
      const auto sig = diffusion_matrix(c.preset, m);
      for (std::size_t s = 0; s < sol.save_steps.size(); ++s) {
        const auto w = noise->path_at(sol.save_steps[s]);
        const double t = sol.time(s);
        std::vector<double> y(d);
        for (std::size_t q = 0; q < grid.size(); ++q) {
          const auto x = grid.point(q);
          for (int i = 0; i < d; ++i) {
            y[i] = x[i] - c.preset.v[i] * t;
            for (int l = 0; l < m; ++l) y[i] -= sig[i * m + l] * w[l];
          }
          exact_err = std::max(exact_err, std::abs(sol.values[s][q] - datum.value(y)));
        }
      }
    }
  }
  res.summary["max_principle"] = max_principle;
  res.summary["undefined_values"] = undefined;
  if (exact) res.summary["max_exact_error"] = exact_err;
  if (parabolic) {
    // Reference value of the mean at node `parabolic_node` of the final snapshot.
    const double ref = p.require<double>("parabolic_reference");
    const auto node = p.get<std::size_t>("parabolic_node", 0);
    const double max_z = p.get("parabolic_max_z", 3.0);
    const auto pm = parabolic_mean(kept);
    if (node >= grid.size()) throw ValidationError("transport.parabolic_node", "out of range");
    CsvTable t({"time", "node", "mean", "standard_error", "samples"});
    for (std::size_t s = 0; s < pm.save_steps.size(); ++s)
      for (std::size_t q = 0; q < grid.size(); ++q)
        t.row().add(static_cast<double>(pm.save_steps[s]) * tg.dt).add(q).add(pm.mean[s][q]).add(
            pm.standard_error[s][q]).add(pm.samples[s][q]);
    out.csv("parabolic_mean.csv", t);
    const double mean = pm.mean.back()[node], se = pm.standard_error.back()[node];
    const double z = std::abs(mean - ref) / se;
    res.summary["parabolic_mean"] = mean;
    res.summary["parabolic_standard_error"] = se;
    res.summary["parabolic_reference"] = ref;
    res.summary["parabolic_z"] = z;
    if (!(z <= max_z)) {
      res.status = kExitAssertion;
      res.message = "parabolic mean " + format_double(mean) + " is " + format_double(z) + " standard errors from " +
                    format_double(ref);
    }
  }

  const auto factors = p.get("refinement_factors", std::vector<int>{});
  if (!factors.empty()) {
    const auto bank = parse_bank(p.raw("test_functions"), d, "transport.test_functions");
    p.record("test_functions", p.raw("test_functions"));
    const auto renorms = p.get("renormalizations", std::vector<std::string>{"none"});
    const double dt_finest = c.dt / static_cast<double>(*std::min_element(factors.begin(), factors.end()));
    CsvTable t({"renormalization", "dt", "rms_residual", "observed_order"});
    double min_order = std::numeric_limits<double>::infinity();
    for (const auto& rn : renorms) {
      const auto ref = weak_form_refinement(field, c.seeds, datum, grid, c.horizon, dt_finest, factors, bank,
                                            parse_renormalization(rn), c.flow_options());
      for (const auto& lv : ref.levels) t.row().add(rn).add(lv.dt).add(lv.rms_residual).add(ref.observed_order);
      min_order = std::min(min_order, ref.observed_order);
      res.summary["order_" + rn] = ref.observed_order;
    }
    out.csv("weak_form.csv", t);
    const double required = p.get("min_order", 0.0);
    if (min_order < required) {
      res.status = kExitAssertion;
      res.message = "weak-form observed order " + format_double(min_order) + " < " + format_double(required);
    }
  }
  const double exact_tol = p.get("exact_tolerance", 1e-12);
  if (exact && !(exact_err < exact_tol)) {
    res.status = kExitAssertion;
    res.message = "affine exact solution error " + format_double(exact_err);
  }
  if (!max_principle) {
    res.status = kExitAssertion;
    res.message = "max principle violated";
  }
}

Box parse_box(const json& j, const std::string& where) {
  Block b(j, where);
  Box box{b.require<std::vector<double>>("lower"), b.require<std::vector<double>>("upper")};
  if (box.lower.size() != box.upper.size()) throw ValidationError(where, "lower/upper dimension mismatch");
  return box;
}

void run_invariant(const ExperimentConfig& c, Block& p, Output& out, RunResult& res) {
  require_seeds(c);
  const auto field = build_field(c.preset);
  const Box gamma0 = parse_box(p.raw("gamma0"), "invariant.gamma0");
  p.record("gamma0", p.raw("gamma0"));
  HistogramSpec hist;
  {
    Block h(p.raw("histogram"), "invariant.histogram");
    hist.box = Box{h.require<std::vector<double>>("lower"), h.require<std::vector<double>>("upper")};
    hist.bin_width = h.get("bin_width", 0.25);
    p.record("histogram", h.resolved());
  }
  KrylovOptions ko;
  ko.dt = c.dt;
  ko.horizons = p.require<std::vector<double>>("horizons");
  ko.burn_in = p.get("burn_in", 0.0);
  ko.per_axis = p.get<std::int64_t>("per_axis", 1000);
  ko.independent_paths = p.get("independent_paths", true);
  ko.compression_every = p.get("compression_every", 0.25);
  const auto dc = p.get<std::string>("density_constant", "empirical");
  if (dc != "empirical" && dc != "certified") throw ValidationError("invariant.density_constant", "empirical or certified");
  ko.density_constant = dc == "certified" ? DensityConstant::certified : DensityConstant::empirical;
  ko.binning_tolerance = p.get("binning_tolerance", 0.15);
  ko.max_escaped_mass = p.get("max_escaped_mass", 0.10);
  ko.flow = c.flow_options();
  const auto measures = krylov_bogoliubov(*field, c.seeds, gamma0, hist, ko);
  const auto reference = p.get<std::string>("reference", "none");
  CsvTable summary({"horizon", "gamma_hat_sup", "K_hat", "density_bound", "density_bound_holds", "escaped_mass",
                    "moment2", "distance_to_reference"});
  bool bounds = true;
  std::vector<double> distances;
  for (std::size_t i = 0; i < measures.size(); ++i) {
    const auto& mu = measures[i];
    out.csv("occupation_" + std::to_string(i) + ".csv", mu.table());
    out.text("occupation_" + std::to_string(i) + ".json", mu.to_json());
    double dist = std::numeric_limits<double>::quiet_NaN();
    if (reference == "standard_normal") {
      dist = sup_density_distance(mu, [](std::span<const double> x) {
        return std::exp(-0.5 * norm2(x)) / std::pow(2.0 * std::numbers::pi, 0.5 * static_cast<double>(x.size()));
      });
    } else if (reference != "none") {
      throw ValidationError("invariant.reference", "none or standard_normal");
    }
    summary.row().add(mu.horizon).add(mu.gamma_hat_sup()).add(mu.k_hat).add(mu.density_bound).add(
        mu.density_bound_holds ? 1 : 0).add(mu.escaped_mass()).add(mu.moment2()).add(dist);
    bounds = bounds && mu.density_bound_holds;
    distances.push_back(dist);
  }
  out.csv("occupation_summary.csv", summary);
  res.summary["density_bound_holds"] = bounds;
  for (const auto& w : measures.back().warnings) res.summary["warning"] = w;
  if (!bounds) {
    res.status = kExitAssertion;
    res.message = "density bound violated";
  }
  if (reference != "none") {
    bool decreasing = true;
    for (std::size_t i = 1; i < distances.size(); ++i) decreasing = decreasing && distances[i] < distances[i - 1];
    res.summary["distances"] = distances;
    res.summary["distance_decreasing"] = decreasing;
    const double max_dist = p.get("max_distance", std::numeric_limits<double>::infinity());
    if (!decreasing || !(distances.back() < max_dist)) {
      res.status = kExitAssertion;
      res.message = "distance to the reference density " + format_double(distances.back()) +
                    (decreasing ? "" : " (not decreasing)");
    }
  }
  if (p.has("invariance")) {
    Block iv(p.raw("invariance"), "invariant.invariance");
    const double t = iv.get("t", 1.0);
    const auto pts = iv.get<std::size_t>("points_per_seed", 1000);
    const auto seeds = iv.get("seeds", c.seeds);
    const auto bank = parse_bank(iv.raw("test_functions"), field->dim(), "invariant.invariance.test_functions");
    iv.record("test_functions", iv.raw("test_functions"));
    p.record("invariance", iv.resolved());
    const auto rep = check_invariance(*field, measures.back(), bank, t, c.dt, seeds, pts, c.flow_options());
    CsvTable ti({"function", "semigroup_side", "measure_side", "discrepancy", "combined_error", "within"});
    for (const auto& r : rep.rows)
      ti.row().add(r.function).add(r.semigroup_side).add(r.measure_side).add(r.discrepancy).add(r.combined_error).add(
          r.within ? 1 : 0);
    out.csv("invariance.csv", ti);
    res.summary["invariance_holds"] = rep.holds;
    if (!rep.holds) {
      res.status = kExitAssertion;
      res.message = "invariance discrepancy above 3 sigma";
    }
  }
}

void run_verify(const ExperimentConfig& c, Block& p, Output& out, RunResult& res) {
  const auto levels = p.get("levels", std::vector<int>{});
  const double weight = p.get("divsigma_weight", 1.0);
  const double tol = p.get("tolerance", 1e-9);
  const bool si = p.get("si", false);
  const auto expect = p.get("expect_hold", std::vector<std::string>{});
  const auto expect_fail = p.get("expect_fail", std::vector<std::string>{});
  CsvTable t({"level", "condition", "points", "rejected", "max_value", "positive_part", "constant", "holds"});
  std::map<std::string, bool> held{{"en3", true}, {"en4", true}, {"coercivity", true}, {"si", true}};
  double c1 = 0.0, en3_max = -std::numeric_limits<double>::infinity();
  std::vector<std::optional<int>> runs;
  if (levels.empty()) runs.push_back(std::nullopt);
  for (int n : levels) runs.emplace_back(n);
  for (const auto& level : runs) {
    const auto field = level ? build_field_at_level(c.preset, *level) : build_field(c.preset);
    const auto grid = build_grid(c.grid, field->dim());
    const long long tag = level ? *level : (c.preset.level ? *c.preset.level : 0);
    auto add = [&](const GridSupReport& r) {
      t.row().add(tag).add(r.condition).add(r.points_evaluated).add(r.points_rejected).add(r.max_value).add(
          r.positive_part).add(r.constant).add(r.holds ? 1 : 0);
    };
    const auto en3 = check_en3(*field, grid, weight, tol);
    const auto co = check_coercivity(*field, grid);
    const auto growth = check_growth_en4(*field, grid);
    add(en3);
    add(growth);
    t.row().add(tag).add(std::string("coercivity")).add(co.points_evaluated).add(std::size_t{0}).add(co.max_value).add(
        std::max(co.max_value, 0.0)).add(co.c1).add(co.holds ? 1 : 0);
    held["en3"] = held["en3"] && en3.holds;
    held["en4"] = held["en4"] && growth.holds;
    held["coercivity"] = held["coercivity"] && co.holds;
    if (si) {
      const auto s = check_si(*field, grid);
      add(s);
      held["si"] = held["si"] && s.holds;
    }
    c1 = std::max(c1, en3.constant);
    en3_max = std::max(en3_max, en3.max_value);
    res.summary["coercivity_C1"] = co.c1;
    res.summary["coercivity_C2"] = co.c2;
    res.summary["en4_C2"] = growth.constant;
  }
  out.csv("conditions.csv", t);
  res.summary["C1"] = c1;
  res.summary["en3_max"] = en3_max;
  res.summary["en3_holds"] = held["en3"];
  auto lookup = [&](const std::string& e) {
    const auto it = held.find(e);
    if (it == held.end() || (e == "si" && !si))
      throw ValidationError("conditions.expect", "unknown or unchecked condition '" + e + "'");
    return it->second;
  };
  for (const auto& e : expect)
    if (!lookup(e)) {
      res.status = kExitAssertion;
      res.message = "condition " + e + " fails";
    }
  for (const auto& e : expect_fail)
    if (lookup(e)) {
      res.status = kExitAssertion;
      res.message = "condition " + e + " holds but was expected to fail";
    }
}

const char* block_name(const std::string& pipeline) {
  if (pipeline == "simulate") return "simulate";
  if (pipeline == "jacobian-check") return "jacobian";
  if (pipeline == "stability") return "stability";
  if (pipeline == "transport") return "transport";
  if (pipeline == "invariant") return "invariant";
  if (pipeline == "verify-conditions") return "conditions";
  throw ValidationError("pipeline", "unknown pipeline '" + pipeline + "'");
}

}  // namespace

const std::vector<std::string>& pipelines() {
  static const std::vector<std::string> p{"simulate",  "jacobian-check", "stability",
                                          "transport", "invariant",      "verify-conditions"};
  return p;
}

FieldPtr build_field(const PresetConfig& p) {
  FieldPtr f;
  if (p.name == "example_sec6") {
    f = example_field(p.d, p.beta, p.level);
  } else if (p.name == "constant") {
    if (p.v.size() != static_cast<std::size_t>(p.d)) throw ValidationError("preset.v", "must hold d entries");
    int m = 0;
    auto s = diffusion_matrix(p, m);
    f = constant_field(p.v, s, m);
  } else if (p.name == "linear") {
    if (p.a.size() != static_cast<std::size_t>(p.d) * p.d) throw ValidationError("preset.A", "must hold d x d entries");
    int m = 0;
    auto s = diffusion_matrix(p, m);
    f = linear_field(p.a, s, m);
  } else if (p.name == "ou") {
    f = ou_field(p.d);
  } else if (p.name == "rotation") {
    if (p.d != 2) throw ValidationError("preset.d", "rotation is planar (d = 2)");
    f = rotation_field();
  } else if (p.name == "smooth_lipschitz") {
    f = smooth_field(p.d);
  } else if (p.name == "user_grid") {
    if (p.path.empty()) throw ValidationError("preset.path", "required for user_grid");
    f = user_grid_field(p.path);
  } else {
    throw ValidationError("preset.name", "unknown preset '" + p.name + "'");
  }
  if (p.mollify) f = mollify(f, Mollifier(f->dim(), *p.mollify, p.quadrature_order));
  return f;
}

FieldPtr build_field_at_level(const PresetConfig& p, int level) {
  if (level < 1) throw ValidationError("levels", "must be >= 1");
  if (p.name == "example_sec6") return example_field(p.d, p.beta, level);
  PresetConfig base = p;
  base.mollify.reset();
  const auto f = build_field(base);
  return mollify(f, Mollifier(f->dim(), level, p.quadrature_order));
}

PointSet build_grid(const GridConfig& g, int dim) {
  if (g.kind == "points") {
    if (g.points.empty()) throw ValidationError("grid.points", "empty point list");
    PointSet ps;
    ps.dim = dim;
    for (const auto& x : g.points) {
      if (static_cast<int>(x.size()) != dim) throw ValidationError("grid.points", "point dimension mismatch");
      ps.coords.insert(ps.coords.end(), x.begin(), x.end());
    }
    return ps;
  }
  if (g.kind == "shell") {
    if (g.count == 0) throw ValidationError("grid.count", "must be >= 1");
    return sample_shell(dim, g.r_in, g.r_out, g.count, g.seed);
  }
  if (static_cast<int>(g.lower.size()) != dim || static_cast<int>(g.upper.size()) != dim)
    throw ValidationError("grid.lower", "box bounds must have d entries");
  if (g.per_axis < 1) throw ValidationError("grid.per_axis", "must be >= 1");
  auto ps = lattice_points(Lattice::box(g.lower, g.upper, g.per_axis), g.exclude_radius);
  if (g.r_out > 0.0) ps = restrict_to_shell(ps, g.r_in, g.r_out);
  if (ps.size() == 0) throw ValidationError("grid", "no points");
  return ps;
}

FlowOptions ExperimentConfig::flow_options() const {
  FlowOptions o;
  o.scheme = scheme;
  o.escape_radius = escape_radius;
  o.save_every = save_every;
  o.workers = workers;
  return o;
}

FunctionBank parse_bank(const json& list, int dim, const std::string& where) {
  if (!list.is_array() || list.empty()) throw ValidationError(where, "must be a non-empty list");
  FunctionBank bank;
  for (std::size_t i = 0; i < list.size(); ++i) {
    const std::string at = where + "[" + std::to_string(i) + "]";
    Block b(list[i], at);
    const auto family = b.require<std::string>("family");
    const auto center = b.get("center", std::vector<double>(dim, 0.0));
    const double width = b.get("width", 1.0);
    if (static_cast<int>(center.size()) != dim) throw ValidationError(at + ".center", "must have d entries");
    TestFunction f;
    if (family == "bump") {
      f = TestFunction::bump(center, width);
    } else if (family == "poly_bump") {
      f = TestFunction::poly_bump(b.require<std::vector<int>>("exponents"), center, width);
    } else {
      throw ValidationError(at + ".family", "unknown family '" + family + "' (bump, poly_bump)");
    }
    f.name = b.get<std::string>("name", family + std::to_string(i));
    bank.push_back(std::move(f));
  }
  return bank;
}

ExperimentConfig parse_config(const std::string& text, const std::filesystem::path& source_dir) {
  json j;
  try {
    j = json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw ValidationError("config", std::string("not valid JSON: ") + e.what());
  }
  if (!j.is_object()) throw ValidationError("config", "top level must be an object");
  static const std::set<std::string> keys{"pipeline", "preset",   "time",      "grid",      "escape_radius",
                                          "truncation", "seeds",  "scheme",    "save_every", "workers",
                                          "simulate",  "jacobian", "stability", "transport", "invariant",
                                          "conditions", "description"};
  for (const auto& [key, _] : j.items())
    if (!keys.count(key)) throw ValidationError(key, "unknown key");

  ExperimentConfig c;
  c.source_text = text;
  c.source_dir = source_dir;
  if (j.contains("pipeline")) c.pipeline = as<std::string>(j.at("pipeline"), "pipeline");
  if (!j.contains("preset")) throw ValidationError("preset", "required");
  c.preset = parse_preset(j.at("preset"), "preset");
  if (!c.preset.path.empty() && c.preset.path.front() != '/' && !source_dir.empty())
    c.preset.path = (source_dir / c.preset.path).string();
  if (j.contains("time")) {
    const auto& t = j.at("time");
    if (t.contains("T")) c.horizon = as<double>(t.at("T"), "time.T");
    if (t.contains("dt")) c.dt = as<double>(t.at("dt"), "time.dt");
  }
  if (!(c.dt > 0.0)) throw ValidationError("time.dt", "must be > 0");
  if (!(c.horizon > 0.0)) throw ValidationError("time.T", "must be > 0");
  try {
    (void)TimeGrid::from_horizon(c.horizon, c.dt);
  } catch (const ValidationError&) {
    throw ValidationError("time", "T must be a positive integer multiple of dt");
  }
  c.grid = parse_grid(j.contains("grid") ? j.at("grid") : json());
  if (j.contains("escape_radius")) c.escape_radius = as<double>(j.at("escape_radius"), "escape_radius");
  if (j.contains("truncation")) {
    const auto& t = j.at("truncation");
    if (t.contains("N")) c.n_radius = as<double>(t.at("N"), "truncation.N");
    if (t.contains("R")) c.radius = as<double>(t.at("R"), "truncation.R");
    if (t.contains("deltas")) c.deltas = as<std::vector<double>>(t.at("deltas"), "truncation.deltas");
  }
  for (std::size_t i = 1; i < c.deltas.size(); ++i)
    if (!(c.deltas[i] < c.deltas[i - 1])) throw ValidationError("truncation.deltas", "must be strictly decreasing");
  for (double dl : c.deltas)
    if (!(dl > 0.0)) throw ValidationError("truncation.deltas", "must be > 0");
  if (j.contains("seeds")) c.seeds = as<std::vector<std::uint64_t>>(j.at("seeds"), "seeds");
  if (j.contains("scheme")) c.scheme = parse_scheme(as<std::string>(j.at("scheme"), "scheme"));
  if (j.contains("save_every")) c.save_every = as<std::int64_t>(j.at("save_every"), "save_every");
  if (c.save_every < 0) throw ValidationError("save_every", "must be >= 0");
  if (j.contains("workers")) c.workers = as<int>(j.at("workers"), "workers");
  for (const char* block : {"simulate", "jacobian", "stability", "transport", "invariant", "conditions"})
    if (j.contains(block)) {
      if (!j.at(block).is_object()) throw ValidationError(block, "must be an object");
      c.params[block] = j.at(block);
    }
  return c;
}

ExperimentConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw ValidationError("config", "cannot read " + path.string());
  std::ostringstream s;
  s << f.rdbuf();
  return parse_config(s.str(), path.parent_path());
}

RunResult run(const std::string& pipeline, const ExperimentConfig& c, const std::filesystem::path& out_dir,
              std::ostream& log) {
  RunResult res;
  const std::string block = block_name(pipeline);
  if (!c.pipeline.empty() && c.pipeline != pipeline)
    throw ValidationError("pipeline", "config is for '" + c.pipeline + "', not '" + pipeline + "'");
  Output out(out_dir, res);
  const json empty = json::object();
  Block p(c.params.contains(block) ? c.params.at(block) : empty, block);
  try {
    if (pipeline == "simulate") run_simulate(c, p, out, res);
    if (pipeline == "jacobian-check") run_jacobian(c, p, out, res);
    if (pipeline == "stability") run_stability(c, p, out, res);
    if (pipeline == "transport") run_transport(c, p, out, res);
    if (pipeline == "invariant") run_invariant(c, p, out, res);
    if (pipeline == "verify-conditions") run_verify(c, p, out, res);
  } catch (const ValidationError& e) {
    res.status = kExitValidation;
    res.message = std::string(pipeline) + ": " + e.what();
  } catch (const SingularityError& e) {
    res.status = kExitValidation;
    res.message = std::string(pipeline) + ": " + e.what();
  } catch (const CheckFailed& e) {
    res.status = kExitAssertion;
    res.message = std::string(pipeline) + ": " + e.what();
  }

  json m;
  m["tool"] = "aeflow";
  m["version"] = AEFLOW_VERSION;
  m["pipeline"] = pipeline;
  m["config_hash"] = hex64(fnv1a64(c.source_text));
  m["seeds"] = c.seeds;
  m["workers"] = c.workers;
  json cfg;
  cfg["preset"] = preset_json(c.preset);
  cfg["time"] = {{"T", c.horizon}, {"dt", c.dt}};
  cfg["grid"] = grid_json(c.grid);
  cfg["escape_radius"] = c.escape_radius;
  cfg["truncation"] = {{"N", c.n_radius}, {"R", c.radius}, {"deltas", c.deltas}};
  cfg["scheme"] = scheme_name(c.scheme);
  cfg["save_every"] = c.save_every;
  cfg[block] = p.resolved();
  m["config"] = cfg;
  m["outputs"] = res.outputs;
  m["summary"] = res.summary;
  m["status"] = res.status;
  m["message"] = res.message;
  {
    std::ofstream f(out.dir() / "manifest.json", std::ios::binary);
    f << m.dump(2) << '\n';
  }

  log << pipeline << " (" << c.preset.name << ")\n";
  for (const auto& [k, v] : res.summary.items()) log << "  " << std::left << std::setw(34) << k << v.dump() << '\n';
  log << "  " << std::left << std::setw(34) << "status" << res.status << (res.message.empty() ? "" : "  " + res.message)
      << '\n';
  return res;
}

}  // namespace aeflow
