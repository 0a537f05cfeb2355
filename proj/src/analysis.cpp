#include "beable/analysis.hpp"

#include <algorithm>
#include <cmath>
#include <map>

#include "beable/errors.hpp"

namespace beable {

namespace {
__extension__ typedef unsigned __int128 Accumulator;
}  // namespace

Pathway Pathway::of(const Trajectory& traj) {
  Pathway out;
  out.sites.reserve(traj.events.size() + 1);
  out.sites.push_back(traj.initial);
  for (const auto& e : traj.events) out.sites.push_back(e.to);
  return out;
}

std::vector<double> occupancy(const Ensemble& ens, int p) {
  return occupancy_series(ens, {p}).front();
}

std::vector<std::vector<double>> occupancy_series(const Ensemble& ens,
                                                  const std::vector<int>& steps) {
  if (ens.trajectories.empty()) throw EmptyResultError("empty ensemble");
  int n_lev = 0;
  for (const auto& t : ens.trajectories) {
    n_lev = std::max(n_lev, t.initial + 1);
    for (const auto& e : t.events) n_lev = std::max({n_lev, e.from + 1, e.to + 1});
  }
  std::vector<std::vector<std::int64_t>> counts(steps.size(), std::vector<std::int64_t>(n_lev));
  for (const auto& t : ens.trajectories)
    for (std::size_t k = 0; k < steps.size(); ++k) ++counts[k][t.site_at(steps[k])];

  std::vector<std::vector<double>> out(steps.size(), std::vector<double>(n_lev));
  const double n = static_cast<double>(ens.trajectories.size());
  for (std::size_t k = 0; k < steps.size(); ++k)
    for (int s = 0; s < n_lev; ++s) out[k][s] = static_cast<double>(counts[k][s]) / n;
  return out;
}

PathwayTable pathway_table(const Ensemble& ens) {
  if (ens.trajectories.empty()) throw EmptyResultError("empty ensemble");
  std::map<Pathway, std::int64_t> counts;
  for (const auto& t : ens.trajectories) ++counts[Pathway::of(t)];

  PathwayTable table;
  table.n_traj = static_cast<std::int64_t>(ens.trajectories.size());
  const double n = static_cast<double>(table.n_traj);
  for (auto& [path, c] : counts) {
    const double prob = static_cast<double>(c) / n;
    table.rows.push_back({path, c, prob, std::sqrt(prob / n)});
  }
  std::stable_sort(table.rows.begin(), table.rows.end(),
                   [](const PathwayRow& a, const PathwayRow& b) { return a.count > b.count; });
  return table;
}

JumpMoments jump_moments(const Ensemble& ens, int k_max, std::optional<int> only_reaching) {
  if (k_max < 0 || k_max > 8) throw ConfigError("k_max must be in 0..8");
  std::vector<Accumulator> sums(k_max + 1, 0);
  JumpMoments out;
  out.j_min = -1;
  for (const auto& t : ens.trajectories) {
    if (only_reaching && t.final != *only_reaching) continue;
    const auto j = static_cast<Accumulator>(t.events.size());
    Accumulator power = 1;
    for (int k = 0; k <= k_max; ++k) {
      sums[k] += power;
      power *= j;
    }
    const int jumps = t.jumps();
    out.j_min = out.j_min < 0 ? jumps : std::min(out.j_min, jumps);
    out.j_max = std::max(out.j_max, jumps);
    ++out.count;
  }
  if (out.count == 0) throw EmptyResultError("no trajectories in the moment selection");
  out.moments.resize(k_max + 1);
  for (int k = 0; k <= k_max; ++k)
    out.moments[k] = static_cast<double>(static_cast<long double>(sums[k]) /
                                         static_cast<long double>(out.count));
  return out;
}

bool JumpSelector::matches_jump(const JumpEvent& e) const {
  return (from < 0 || e.from == from) && (to < 0 || e.to == to);
}

bool JumpSelector::matches_trajectory(const Trajectory& traj) const {
  if (pathways.empty()) return true;
  const Pathway path = Pathway::of(traj);
  return std::find(pathways.begin(), pathways.end(), path) != pathways.end();
}

std::vector<std::int64_t> jump_counts(const Ensemble& ens, const JumpSelector& selector) {
  std::vector<std::int64_t> counts(ens.grid.steps, 0);
  for (const auto& t : ens.trajectories) {
    if (!selector.matches_trajectory(t)) continue;
    for (const auto& e : t.events)
      if (selector.matches_jump(e)) ++counts[e.step];
  }
  return counts;
}

std::vector<double> jump_correlation(const Ensemble& ens, const JumpSelector& selector,
                                     const std::vector<double>& tau_grid) {
  if (tau_grid.empty()) throw ConfigError("empty tau grid");
  const std::vector<std::int64_t> counts = jump_counts(ens, selector);
  const long n = static_cast<long>(counts.size());
  std::vector<double> out;
  out.reserve(tau_grid.size());
  for (double tau : tau_grid) {
    const long lag = std::lround(tau / ens.grid.step);
    const long terms = n - std::labs(lag);
    if (terms <= 0) {
      out.push_back(0.0);
      continue;
    }
    const long lo = std::max(0L, -lag);
    const long hi = std::min(n, n - lag);
    long double sum = 0.0;
    for (long p = lo; p < hi; ++p)
      sum += static_cast<long double>(counts[p]) * static_cast<long double>(counts[p + lag]);
    out.push_back(static_cast<double>(sum / terms));
  }
  return out;
}

std::vector<double> rez_series(const Propagation& prop, int n, int m, double floor) {
  if (prop.generators.empty()) throw ConfigError("propagation was run without generators");
  std::vector<double> out(prop.generators.size());
  for (std::size_t p = 0; p < prop.generators.size(); ++p) {
    const auto& psi = prop.states[p];
    const double occ = std::norm(psi[m]);
    if (occ < floor) {
      out[p] = 0.0;
      continue;
    }
    const Complex z = Complex(0.0, -1.0 / prop.grid.step) *
                      (prop.generators[p](n, m) * (std::conj(psi[n]) * psi[m])) / occ;
    out[p] = z.real();
  }
  return out;
}

double pearson(const std::vector<double>& x, const std::vector<double>& y) {
  if (x.size() != y.size() || x.size() < 2) throw ConfigError("pearson needs two equal series");
  const double n = static_cast<double>(x.size());
  double mx = 0.0, my = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    mx += x[i];
    my += y[i];
  }
  mx /= n;
  my /= n;
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < x.size(); ++i) {
    sxy += (x[i] - mx) * (y[i] - my);
    sxx += (x[i] - mx) * (x[i] - mx);
    syy += (y[i] - my) * (y[i] - my);
  }
  if (sxx == 0.0 || syy == 0.0) throw NumericalError("zero-variance input to correlation");
  return sxy / std::sqrt(sxx * syy);
}

double field_rate_correlation(const ControlField& field, const std::vector<double>& series,
                              double t_lo, double t_hi) {
  const TimeGrid& grid = field.grid();
  if (static_cast<int>(series.size()) != grid.steps)
    throw ConfigError("series length must equal the field step count");
  if (!(t_lo < t_hi) || t_lo < 0.0 || t_hi > grid.horizon())
    throw ConfigError("correlation window outside the grid");
  std::vector<double> e, r;
  for (int p = 0; p < grid.steps; ++p) {
    const double t = grid.time(p);
    if (t < t_lo - 1e-9 || t > t_hi + 1e-9) continue;
    e.push_back(std::abs(field.value(p)));
    r.push_back(series[p]);
  }
  return pearson(e, r);
}

}  // namespace beable
