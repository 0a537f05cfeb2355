#include "beable/mechanism.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include "beable/errors.hpp"
#include "beable/optimizer.hpp"
#include "beable/parallel.hpp"

namespace beable {

namespace {

double softplus(double u) { return u > 30.0 ? u : std::log1p(std::exp(u)); }
double sigmoid(double u) { return 1.0 / (1.0 + std::exp(-u)); }
double softplus_inverse(double y) { return y > 30.0 ? y : std::log(std::expm1(y)); }

struct WindowData {
  std::vector<double> m;
  std::vector<double> log_m;
  std::vector<double> y;
};

WindowData select_window(const ModulationDataset& ds, const FitWindow& window) {
  const double tol = 1e-9 * std::max(1.0, ds.increment);
  WindowData w;
  for (const auto& row : ds.rows) {
    if (row.modulation < window.lo - tol || row.modulation > window.hi + tol) continue;
    if (row.modulation <= 0.0) continue;
    w.m.push_back(row.modulation);
    w.log_m.push_back(std::log(row.modulation));
    w.y.push_back(row.population);
  }
  return w;
}

// Parameter vector layout: [<j^1> .. <j^K>, a (or u), |psi|].
class SeriesModel {
 public:
  SeriesModel(const WindowData& data, const FitOptions& options)
      : data_(data), k_max_(options.k_max), bound_(options.a_lower_bound),
        amplitude_space_(options.amplitude_space) {}

  double a_of(double raw) const { return bound_ ? *bound_ + softplus(raw) : raw; }
  double raw_of(double a) const {
    return bound_ ? softplus_inverse(std::max(a - *bound_, 1e-8)) : a;
  }

  FitParameters params(const Eigen::VectorXd& x) const {
    FitParameters p;
    p.moments.assign(x.data(), x.data() + k_max_);
    p.a = a_of(x[k_max_]);
    p.amplitude = std::abs(x[k_max_ + 1]);
    return p;
  }

  void operator()(const Eigen::VectorXd& x, Eigen::VectorXd& r, Eigen::MatrixXd* jac) const {
    const auto n = static_cast<Eigen::Index>(data_.m.size());
    r.resize(n);
    if (jac) jac->resize(n, k_max_ + 2);
    const double a = a_of(x[k_max_]);
    const double da_du = bound_ ? sigmoid(x[k_max_]) : 1.0;
    const double b = x[k_max_ + 1];
    for (Eigen::Index i = 0; i < n; ++i) {
      const double l = data_.log_m[i];
      const double decay = std::exp(-a * (data_.m[i] - 1.0));
      double series = 1.0;
      double term = 1.0;
      std::array<double, 16> basis{};
      for (int k = 1; k <= k_max_; ++k) {
        term *= l / k;
        basis[k] = term;
        series += x[k - 1] * term;
      }
      const double amp = b * decay * series;
      double outer = 1.0;  // d residual / d amp
      if (amplitude_space_) {
        r[i] = amp - std::sqrt(std::max(data_.y[i], 0.0));
      } else {
        r[i] = amp * amp - data_.y[i];
        outer = 2.0 * amp;
      }
      if (!jac) continue;
      for (int k = 1; k <= k_max_; ++k) (*jac)(i, k - 1) = outer * b * decay * basis[k];
      (*jac)(i, k_max_) = outer * (-(data_.m[i] - 1.0)) * amp * da_du;
      (*jac)(i, k_max_ + 1) = outer * decay * series;
    }
  }

 private:
  const WindowData& data_;
  int k_max_;
  std::optional<int> bound_;
  bool amplitude_space_;
};

// For fixed a, sqrt(y) e^{a(M-1)} = b + sum_k (b <j^k>) L^k / k! is linear in
// (b, b<j^1>, ..., b<j^K>).
Eigen::VectorXd linear_start(const WindowData& data, int k_max, double a) {
  const auto n = static_cast<Eigen::Index>(data.m.size());
  Eigen::MatrixXd design(n, k_max + 1);
  Eigen::VectorXd target(n);
  for (Eigen::Index i = 0; i < n; ++i) {
    double term = 1.0;
    design(i, 0) = 1.0;
    for (int k = 1; k <= k_max; ++k) {
      term *= data.log_m[i] / k;
      design(i, k) = term;
    }
    target[i] = std::sqrt(std::max(data.y[i], 0.0)) * std::exp(a * (data.m[i] - 1.0));
  }
  const Eigen::VectorXd c = design.colPivHouseholderQr().solve(target);
  Eigen::VectorXd x(k_max + 2);
  const double b = std::abs(c[0]) > 1e-300 ? c[0] : 1e-300;
  for (int k = 1; k <= k_max; ++k) x[k - 1] = c[k] / b;
  x[k_max + 1] = b;
  return x;
}

double population_msd(const WindowData& data, const FitParameters& p) {
  double sum = 0.0;
  for (std::size_t i = 0; i < data.m.size(); ++i) {
    const double d = model_population(data.m[i], p) - data.y[i];
    sum += d * d;
  }
  return sum / static_cast<double>(data.m.size());
}

}  // namespace

void ModulationDataset::validate() const {
  if (rows.empty()) throw ConfigError("empty modulation dataset");
  if (!(increment > 0.0)) throw ConfigError("dataset increment must be > 0");
  for (std::size_t i = 0; i < rows.size(); ++i) {
    if (!(rows[i].population >= 0.0)) throw ConfigError("populations must be >= 0");
    if (i == 0) continue;
    const double d = rows[i].modulation - rows[i - 1].modulation;
    if (!(d > 0.0) || std::abs(d - increment) > 1e-6 * increment)
      throw ConfigError("modulation values must increase by a uniform increment");
  }
}

std::vector<double> modulation_grid(double lo, double hi, double increment) {
  if (!(increment > 0.0) || !(lo >= 0.0) || !(hi >= lo))
    throw ConfigError("invalid modulation grid");
  const long first = std::lround(lo / increment);
  const long last = std::lround(hi / increment);
  std::vector<double> out;
  for (long k = first; k <= last; ++k) out.push_back(static_cast<double>(k) * increment);
  return out;
}

double simulate_measurement(const LevelSystem& sys, const ControlField& field,
                            const Transfer& transfer, double modulation, double sigma,
                            RandomStream& rng) {
  if (!(modulation >= 0.0)) throw ConfigError("modulation must be >= 0");
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  const double exact =
      transfer_population(sys, field.with_modulation(field.modulation() * modulation), transfer);
  if (sigma == 0.0) return exact;
  return std::max(0.0, exact * (1.0 + sigma * rng.normal()));
}

std::vector<double> exact_populations(const LevelSystem& sys, const ControlField& field,
                                      const Transfer& transfer,
                                      const std::vector<double>& modulations, int workers) {
  std::vector<double> out(modulations.size());
  parallel_for(modulations.size(), workers, [&](std::size_t i) {
    if (!(modulations[i] >= 0.0)) throw ConfigError("modulation must be >= 0");
    out[i] = transfer_population(
        sys, field.with_modulation(field.modulation() * modulations[i]), transfer);
  });
  return out;
}

ModulationDataset add_noise(const std::vector<double>& modulations,
                            const std::vector<double>& populations, double sigma,
                            std::uint64_t seed) {
  if (modulations.size() != populations.size())
    throw ConfigError("modulations and populations differ in length");
  if (!(sigma >= 0.0)) throw ConfigError("noise sigma must be >= 0");
  ModulationDataset ds;
  ds.increment = modulations.size() > 1 ? modulations[1] - modulations[0] : 0.0;
  ds.rows.reserve(modulations.size());
  for (std::size_t i = 0; i < modulations.size(); ++i) {
    double y = populations[i];
    if (sigma > 0.0) {
      RandomStream rng(seed, i);
      y = std::max(0.0, y * (1.0 + sigma * rng.normal()));
    }
    ds.rows.push_back({modulations[i], y, sigma});
  }
  return ds;
}

ModulationDataset sweep(const LevelSystem& sys, const ControlField& field,
                        const Transfer& transfer, const std::vector<double>& modulations,
                        double sigma, std::uint64_t seed, int workers) {
  return add_noise(modulations, exact_populations(sys, field, transfer, modulations, workers),
                   sigma, seed);
}

JminEstimate estimate_jmin(const ModulationDataset& ds, double head_fraction) {
  if (!(head_fraction > 0.0 && head_fraction <= 1.0))
    throw ConfigError("head fraction must be in (0, 1]");
  const std::size_t n = ds.rows.size();
  auto usable = [&](std::size_t i) {
    return ds.rows[i].modulation > 0.0 && ds.rows[i].population > 0.0;
  };

  JminEstimate out;
  const auto head_rows = static_cast<std::size_t>(std::ceil(head_fraction * n));
  std::vector<DerivativePoint> head;
  for (std::size_t i = 1; i + 1 < n; ++i) {
    if (!usable(i - 1) || !usable(i) || !usable(i + 1)) continue;
    const double dlog_m =
        std::log(ds.rows[i + 1].modulation) - std::log(ds.rows[i - 1].modulation);
    const double dlog_amp =
        0.5 * (std::log(ds.rows[i + 1].population) - std::log(ds.rows[i - 1].population));
    // Multiplicative noise gives the derivative a variance proportional to 1/dlog_m^2.
    const DerivativePoint pt{ds.rows[i].modulation, dlog_amp / dlog_m, dlog_m * dlog_m};
    out.derivative.push_back(pt);
    if (i < head_rows) head.push_back(pt);
  }
  out.head_points = static_cast<int>(head.size());
  if (head.size() < 5)
    throw NumericalError("fewer than 5 usable points in the small-M head region (" +
                         std::to_string(head.size()) + ")");

  // Weighted least squares for derivative = limit + slope * M.
  double sw = 0.0, sx = 0.0, sy = 0.0, sxx = 0.0, sxy = 0.0;
  for (const auto& pt : head) {
    sw += pt.weight;
    sx += pt.weight * pt.modulation;
    sy += pt.weight * pt.derivative;
    sxx += pt.weight * pt.modulation * pt.modulation;
    sxy += pt.weight * pt.modulation * pt.derivative;
  }
  const double det = sw * sxx - sx * sx;
  if (!(det > 0.0)) throw NumericalError("degenerate head region for j_min extrapolation");
  out.slope = (sw * sxy - sx * sy) / det;
  out.limit = (sy - out.slope * sx) / sw;
  out.j_min = static_cast<int>(std::lround(out.limit));
  return out;
}

double model_population(double modulation, const FitParameters& params) {
  if (!(modulation > 0.0)) throw ConfigError("model needs M > 0");
  const double l = std::log(modulation);
  double series = 1.0;
  double term = 1.0;
  for (int k = 1; k <= params.k_max(); ++k) {
    term *= l / k;
    series += params.moments[k - 1] * term;
  }
  const double amp = params.amplitude * std::exp(-params.a * (modulation - 1.0)) * series;
  return amp * amp;
}

FitResult lm_fit(const ModulationDataset& ds, const FitWindow& window,
                 const FitOptions& options) {
  if (options.k_max < 1 || options.k_max > 12) throw ConfigError("k_max must be in 1..12");
  const WindowData data = select_window(ds, window);
  if (static_cast<int>(data.m.size()) < options.k_max + 3)
    throw ConfigError("fit window holds fewer than k_max + 3 points");

  const SeriesModel model(data, options);
  const double anchor = options.jump_hint.value_or(
      options.a_lower_bound ? static_cast<double>(*options.a_lower_bound) : 1.0);
  std::vector<double> starts;
  for (double offset : {0.25, 0.75, 1.5, 2.5, 4.0}) starts.push_back(anchor + offset);
  // Scan a with the linear amplitude-space start; exact for noise-free data
  // whose series stays positive.
  {
    const auto start_msd = [&](double a) {
      const Eigen::VectorXd x = linear_start(data, options.k_max, a);
      FitParameters p;
      p.moments.assign(x.data(), x.data() + options.k_max);
      p.a = a;
      p.amplitude = std::abs(x[options.k_max + 1]);
      const double msd = population_msd(data, p);
      return std::isfinite(msd) ? msd : std::numeric_limits<double>::infinity();
    };
    constexpr double kSpacing = 0.1;
    double best_a = anchor, best_msd = std::numeric_limits<double>::infinity();
    for (int k = 1; k <= 80; ++k) {
      const double msd = start_msd(anchor + kSpacing * k);
      if (msd < best_msd) best_msd = msd, best_a = anchor + kSpacing * k;
    }
    if (std::isfinite(best_msd)) {
      // Golden-section refinement inside the neighbouring grid cells.
      const double g = 0.5 * (std::sqrt(5.0) - 1.0);
      double lo = std::max(best_a - kSpacing, anchor + 1e-6), hi = best_a + kSpacing;
      double x1 = hi - g * (hi - lo), x2 = lo + g * (hi - lo);
      double f1 = start_msd(x1), f2 = start_msd(x2);
      for (int it = 0; it < 60; ++it) {
        if (f1 < f2) {
          hi = x2, x2 = x1, f2 = f1;
          x1 = hi - g * (hi - lo), f1 = start_msd(x1);
        } else {
          lo = x1, x1 = x2, f1 = f2;
          x2 = lo + g * (hi - lo), f2 = start_msd(x2);
        }
      }
      const double refined = f1 < f2 ? x1 : x2;
      starts.push_back(std::min(f1, f2) < best_msd ? refined : best_a);
    }
  }

  FitResult best;
  best.window = window;
  best.points = static_cast<int>(data.m.size());
  double best_cost = std::numeric_limits<double>::infinity();
  for (double a0 : starts) {
    Eigen::VectorXd x0 = linear_start(data, options.k_max, a0);
    x0[options.k_max] = model.raw_of(a0);
    const LmResult r = levenberg_marquardt(
        [&model](const Eigen::VectorXd& x, Eigen::VectorXd& res, Eigen::MatrixXd* jac) {
          model(x, res, jac);
        },
        x0, options.lm);
    if (!(r.cost < best_cost)) continue;
    best_cost = r.cost;
    best.params = model.params(r.x);
    best.converged = r.converged;
  }
  if (!std::isfinite(best_cost)) {
    best.params = model.params(linear_start(data, options.k_max, anchor));
    best.converged = false;
  }
  best.msd = population_msd(data, best.params);
  if (best.params.k_max() >= 2)
    best.moment_flag = best.params.moments[1] < best.params.moments[0] * best.params.moments[0];
  return best;
}

std::vector<FitWindow> RangeGrid::windows() const {
  if (!(increment > 0.0)) throw ConfigError("range grid increment must be > 0");
  // Strict inequalities on an integer lattice of the increment.
  const auto above = [this](double v) { return std::lround(std::floor(v / increment + 1e-9)) + 1; };
  const auto below = [this](double v) { return std::lround(std::ceil(v / increment - 1e-9)) - 1; };
  const long width = std::lround(std::floor(min_width / increment + 1e-9)) + 1;
  std::vector<FitWindow> out;
  for (long i = above(m_min_lo); i <= below(m_min_hi); ++i)
    for (long j = above(m_max_lo); j <= below(m_max_hi); ++j)
      if (j - i >= width) out.push_back({i * increment, j * increment});
  return out;
}

RangeReport range_search(const ModulationDataset& ds, const RangeGrid& grid,
                         const FitOptions& options, int j_min, int workers) {
  const std::vector<FitWindow> windows = grid.windows();
  RangeReport report;
  report.j_min = j_min;
  report.k_max = options.k_max;
  report.fits.resize(windows.size());
  parallel_for(windows.size(), workers, [&](std::size_t i) {
    WindowFit wf;
    wf.fit = lm_fit(ds, windows[i], options);
    const double jp = wf.fit.mean_jumps();
    wf.below_jmin = !(jp > j_min);
    wf.pathological = windows[i].hi < grid.pathological_max - 1e-9 &&
                      windows[i].lo < grid.pathological_min - 1e-9;
    report.fits[i] = std::move(wf);
  });
  return report;
}

BestFit select_best(const RangeReport& report) {
  std::optional<std::size_t> best;
  for (std::size_t i = 0; i < report.fits.size(); ++i) {
    const auto& wf = report.fits[i];
    if (wf.excluded() || !std::isfinite(wf.fit.msd)) continue;
    if (!best) {
      best = i;
      continue;
    }
    const auto& cur = report.fits[*best].fit;
    const double width = wf.fit.window.hi - wf.fit.window.lo;
    const double cur_width = cur.window.hi - cur.window.lo;
    if (wf.fit.msd < cur.msd || (wf.fit.msd == cur.msd && width > cur_width)) best = i;
  }
  if (!best) throw EmptyResultError("every fit window was excluded");
  const auto& fit = report.fits[*best].fit;
  return {*best, fit.mean_jumps(), fit.window, fit.msd};
}

}  // namespace beable
