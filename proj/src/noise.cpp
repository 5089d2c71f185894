#include "aeflow/noise.hpp"

#include <cmath>
#include <cstring>
#include <istream>
#include <ostream>
#include <sstream>

#include "aeflow/common.hpp"
#include "aeflow/io.hpp"
#include "aeflow/parallel.hpp"
#include "aeflow/rng.hpp"

namespace aeflow {

TimeGrid::TimeGrid(double dt_, std::int64_t steps_) : dt(dt_), steps(steps_) {
  if (!(dt > 0.0) || !std::isfinite(dt)) throw ValidationError("time_grid.dt", "must be positive");
  if (steps < 1) throw ValidationError("time_grid.steps", "must be >= 1");
}

TimeGrid TimeGrid::from_horizon(double horizon, double dt) {
  if (!(dt > 0.0)) throw ValidationError("time_grid.dt", "must be positive");
  const double ratio = horizon / dt;
  const double k = std::round(ratio);
  if (k < 1.0 || std::abs(ratio - k) > 1e-9 * std::max(1.0, k))
    throw ValidationError("time_grid.T", "horizon must be a positive integer multiple of dt");
  return TimeGrid(dt, static_cast<std::int64_t>(k));
}

std::int64_t TimeGrid::index_of(double t) const {
  const double ratio = t / dt;
  const double k = std::round(ratio);
  if (k < 0.0 || k > static_cast<double>(steps) || std::abs(ratio - k) > 1e-9 * std::max(1.0, k))
    throw ValidationError("time", "t=" + format_double(t) + " is not a point of the time grid");
  return static_cast<std::int64_t>(k);
}

NoiseBundle::NoiseBundle(std::uint64_t seed, int noise_dim, TimeGrid grid, std::vector<double> increments,
                         std::string generator, std::string lineage)
    : seed_(seed),
      m_(noise_dim),
      grid_(grid),
      increments_(std::move(increments)),
      generator_(std::move(generator)),
      lineage_(std::move(lineage)) {
  if (m_ <= 0) throw ValidationError("noise.m", "Brownian dimension must be >= 1");
  if (increments_.size() != static_cast<std::size_t>(grid_.steps) * static_cast<std::size_t>(m_))
    throw ValidationError("noise.increments", "size does not match steps * m");
}

std::vector<double> NoiseBundle::path_at(std::int64_t k) const {
  std::vector<double> w(m_, 0.0);
  for (std::int64_t j = 0; j < k; ++j)
    for (int l = 0; l < m_; ++l) w[l] += increments_[j * m_ + l];
  return w;
}

std::vector<double> NoiseBundle::path() const {
  std::vector<double> w(static_cast<std::size_t>(grid_.steps + 1) * m_, 0.0);
  for (std::int64_t j = 0; j < grid_.steps; ++j)
    for (int l = 0; l < m_; ++l) w[(j + 1) * m_ + l] = w[j * m_ + l] + increments_[j * m_ + l];
  return w;
}

bool NoiseBundle::operator==(const NoiseBundle& other) const {
  return seed_ == other.seed_ && m_ == other.m_ && grid_ == other.grid_ && increments_ == other.increments_;
}

NoiseBundle generate(std::uint64_t seed, int noise_dim, TimeGrid grid, int workers) {
  if (noise_dim <= 0) throw ValidationError("noise.m", "Brownian dimension must be >= 1");
  const std::size_t m = static_cast<std::size_t>(noise_dim);
  std::vector<double> inc(static_cast<std::size_t>(grid.steps) * m);
  const double scale = std::sqrt(grid.dt);
  parallel_for(static_cast<std::size_t>(grid.steps), workers, [&](std::size_t begin, std::size_t end) {
    for (std::size_t k = begin; k < end; ++k) {
      for (std::size_t pair = 0; 2 * pair < m; ++pair) {
        const auto z = normal_pair(seed, k, static_cast<std::uint32_t>(pair));
        inc[k * m + 2 * pair] = scale * z[0];
        if (2 * pair + 1 < m) inc[k * m + 2 * pair + 1] = scale * z[1];
      }
    }
  });
  return NoiseBundle(seed, noise_dim, grid, std::move(inc), kPhiloxGenerator);
}

NoiseBundle shift_steps(const NoiseBundle& bundle, std::int64_t j) {
  if (j < 0 || j > bundle.steps()) throw ValidationError("shift.s", "outside the bundle horizon");
  if (j == 0) return bundle;
  if (j == bundle.steps()) throw ValidationError("shift.s", "shift by the full horizon leaves an empty path");
  const auto& inc = bundle.increments();
  std::vector<double> out(inc.begin() + j * bundle.noise_dim(), inc.end());
  return NoiseBundle(bundle.seed(), bundle.noise_dim(), TimeGrid(bundle.dt(), bundle.steps() - j), std::move(out),
                     bundle.generator(), bundle.lineage() + "|shift(" + std::to_string(j) + ")");
}

NoiseBundle shift(const NoiseBundle& bundle, double s) { return shift_steps(bundle, bundle.grid().index_of(s)); }

NoiseBundle reverse(const NoiseBundle& bundle, double horizon) {
  const double h = bundle.horizon();
  if (std::abs(horizon - h) > 1e-12 * std::max(1.0, h))
    throw ValidationError("reverse.T", "must equal the bundle horizon " + format_double(h));
  const std::int64_t K = bundle.steps();
  const int m = bundle.noise_dim();
  std::vector<double> out(bundle.increments().size());
  const auto& inc = bundle.increments();
  for (std::int64_t k = 0; k < K; ++k)
    for (int l = 0; l < m; ++l) out[k * m + l] = -inc[(K - 1 - k) * m + l];
  return NoiseBundle(bundle.seed(), m, bundle.grid(), std::move(out), bundle.generator(),
                     bundle.lineage() + "|reverse");
}

NoiseBundle truncate(const NoiseBundle& bundle, std::int64_t steps) {
  if (steps < 1 || steps > bundle.steps()) throw ValidationError("truncate.steps", "outside [1, K]");
  if (steps == bundle.steps()) return bundle;
  const auto& inc = bundle.increments();
  std::vector<double> out(inc.begin(), inc.begin() + steps * bundle.noise_dim());
  return NoiseBundle(bundle.seed(), bundle.noise_dim(), TimeGrid(bundle.dt(), steps), std::move(out),
                     bundle.generator(), bundle.lineage() + "|truncate(" + std::to_string(steps) + ")");
}

NoiseBundle coarsen(const NoiseBundle& bundle, int factor) {
  if (factor < 1 || bundle.steps() % factor != 0)
    throw ValidationError("coarsen.factor", "must divide the number of steps");
  if (factor == 1) return bundle;
  const int m = bundle.noise_dim();
  const std::int64_t K = bundle.steps() / factor;
  std::vector<double> out(static_cast<std::size_t>(K) * m, 0.0);
  const auto& inc = bundle.increments();
  for (std::int64_t k = 0; k < K; ++k)
    for (int f = 0; f < factor; ++f)
      for (int l = 0; l < m; ++l) out[k * m + l] += inc[(k * factor + f) * m + l];
  return NoiseBundle(bundle.seed(), m, TimeGrid(bundle.dt() * factor, K), std::move(out), bundle.generator(),
                     bundle.lineage() + "|coarsen(" + std::to_string(factor) + ")");
}

bool same_path(const NoiseBundle& a, const NoiseBundle& b, double tol) {
  if (a.seed() != b.seed() || a.noise_dim() != b.noise_dim() || a.generator() != b.generator()) return false;
  if (a == b) return true;
  const NoiseBundle& fine = a.dt() <= b.dt() ? a : b;
  const NoiseBundle& coarse = a.dt() <= b.dt() ? b : a;
  const double ratio = coarse.dt() / fine.dt();
  const auto factor = static_cast<std::int64_t>(std::llround(ratio));
  if (std::abs(ratio - static_cast<double>(factor)) > 1e-9) return false;
  const auto wf = fine.path();
  const auto wc = coarse.path();
  const int m = a.noise_dim();
  const std::int64_t common = std::min(coarse.steps(), fine.steps() / factor);
  for (std::int64_t k = 0; k <= common; ++k)
    for (int l = 0; l < m; ++l) {
      const double x = wc[k * m + l];
      const double y = wf[k * factor * m + l];
      if (std::abs(x - y) > tol * std::max(1.0, std::abs(x))) return false;
    }
  return true;
}

void write_csv(const NoiseBundle& bundle, std::ostream& out) {
  out << "# seed=" << bundle.seed() << "\n# m=" << bundle.noise_dim() << "\n# dt=" << format_double(bundle.dt())
      << "\n# K=" << bundle.steps() << "\n# generator=" << bundle.generator() << "\n# lineage=" << bundle.lineage()
      << "\n";
  out << "k";
  for (int l = 0; l < bundle.noise_dim(); ++l) out << ",dW" << l;
  out << "\n";
  for (std::int64_t k = 0; k < bundle.steps(); ++k) {
    out << k;
    for (double v : bundle.increment(k)) out << ',' << format_double(v);
    out << '\n';
  }
}

namespace {

std::string header_value(const std::string& line, const std::string& key) {
  const std::string prefix = "# " + key + "=";
  if (line.rfind(prefix, 0) != 0) throw ValidationError("noise.csv", "expected header '" + prefix + "'");
  return line.substr(prefix.size());
}

}  // namespace

NoiseBundle read_csv(std::istream& in) {
  std::string line;
  auto next = [&](const std::string& key) {
    if (!std::getline(in, line)) throw ValidationError("noise.csv", "truncated header");
    return header_value(line, key);
  };
  const std::uint64_t seed = std::stoull(next("seed"));
  const int m = std::stoi(next("m"));
  const double dt = std::stod(next("dt"));
  const std::int64_t K = std::stoll(next("K"));
  std::string generator = next("generator");
  std::string lineage = next("lineage");
  std::getline(in, line);  // column names
  std::vector<double> inc;
  inc.reserve(static_cast<std::size_t>(K) * m);
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::stringstream row(line);
    std::string cell;
    std::getline(row, cell, ',');
    while (std::getline(row, cell, ',')) inc.push_back(std::stod(cell));
  }
  return NoiseBundle(seed, m, TimeGrid(dt, K), std::move(inc), std::move(generator), std::move(lineage));
}

namespace {

template <class T>
void put(std::ostream& out, T v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <class T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw ValidationError("noise.bin", "truncated file");
  return v;
}
void put_string(std::ostream& out, const std::string& s) {
  put<std::uint32_t>(out, static_cast<std::uint32_t>(s.size()));
  out.write(s.data(), static_cast<std::streamsize>(s.size()));
}
std::string get_string(std::istream& in) {
  const auto n = get<std::uint32_t>(in);
  std::string s(n, '\0');
  in.read(s.data(), n);
  return s;
}

constexpr char kMagic[8] = {'A', 'E', 'F', 'N', 'O', 'I', 'S', '1'};

}  // namespace

void write_binary(const NoiseBundle& bundle, std::ostream& out) {
  out.write(kMagic, sizeof kMagic);
  put<std::uint64_t>(out, bundle.seed());
  put<std::int32_t>(out, bundle.noise_dim());
  put<double>(out, bundle.dt());
  put<std::int64_t>(out, bundle.steps());
  put_string(out, bundle.generator());
  put_string(out, bundle.lineage());
  out.write(reinterpret_cast<const char*>(bundle.increments().data()),
            static_cast<std::streamsize>(bundle.increments().size() * sizeof(double)));
}

NoiseBundle read_binary(std::istream& in) {
  char magic[8];
  in.read(magic, sizeof magic);
  if (!in || std::memcmp(magic, kMagic, sizeof kMagic) != 0) throw ValidationError("noise.bin", "bad magic");
  const auto seed = get<std::uint64_t>(in);
  const auto m = get<std::int32_t>(in);
  const auto dt = get<double>(in);
  const auto K = get<std::int64_t>(in);
  auto generator = get_string(in);
  auto lineage = get_string(in);
  std::vector<double> inc(static_cast<std::size_t>(K) * m);
  in.read(reinterpret_cast<char*>(inc.data()), static_cast<std::streamsize>(inc.size() * sizeof(double)));
  if (!in) throw ValidationError("noise.bin", "truncated increments");
  return NoiseBundle(seed, m, TimeGrid(dt, K), std::move(inc), std::move(generator), std::move(lineage));
}

}  // namespace aeflow
