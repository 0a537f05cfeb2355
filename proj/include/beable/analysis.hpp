#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "beable/control_field.hpp"
#include "beable/propagator.hpp"
#include "beable/sampler.hpp"

namespace beable {

/// Site sequence of a trajectory with jump times dropped.
struct Pathway {
  std::vector<int> sites;

  static Pathway of(const Trajectory& traj);
  int jumps() const { return static_cast<int>(sites.size()) - 1; }

  friend auto operator<=>(const Pathway&, const Pathway&) = default;
};

struct PathwayRow {
  Pathway pathway;
  std::int64_t count = 0;
  double probability = 0.0;
  /// Absolute standard error sqrt(P / n_traj), i.e. relative error (n P)^{-1/2}.
  double std_error = 0.0;
};

struct PathwayTable {
  std::int64_t n_traj = 0;
  /// Ordered by probability (descending), then lexicographically by sites.
  std::vector<PathwayRow> rows;
};

/// Empirical occupation probabilities at grid time t_p.
std::vector<double> occupancy(const Ensemble& ens, int p);
/// Occupancy at each requested grid index, one row per index.
std::vector<std::vector<double>> occupancy_series(const Ensemble& ens,
                                                  const std::vector<int>& steps);

PathwayTable pathway_table(const Ensemble& ens);

struct JumpMoments {
  /// <j^k> for k = 0..k_max.
  std::vector<double> moments;
  int j_min = 0;
  int j_max = 0;
  std::int64_t count = 0;

  double mean() const { return moments.at(1); }
};

/// Exact sample moments of the jump count, optionally restricted to
/// trajectories that end on `only_reaching`.
JumpMoments jump_moments(const Ensemble& ens, int k_max,
                         std::optional<int> only_reaching = std::nullopt);

/// Selects jumps of type Omega: by (from, to), -1 meaning any, and
/// optionally only jumps of trajectories following one of `pathways`.
struct JumpSelector {
  int from = -1;
  int to = -1;
  std::vector<Pathway> pathways;

  bool matches_jump(const JumpEvent& e) const;
  bool matches_trajectory(const Trajectory& traj) const;
};

/// Per-step counts J_Omega(t_p) of selected jumps.
std::vector<std::int64_t> jump_counts(const Ensemble& ens, const JumpSelector& selector);

/// J2(tau) = (1/N_tau) sum_p J(t_p) J(t_p + tau). Lags are tau / eps rounded to the
/// nearest step; pairs with t_p + tau off the grid are dropped and N_tau counts
/// the remaining terms.
std::vector<double> jump_correlation(const Ensemble& ens, const JumpSelector& selector,
                                     const std::vector<double>& tau_grid);

/// Re{z_nm(t_p)} for every step, from the propagation's own generators.
std::vector<double> rez_series(const Propagation& prop, int n, int m,
                               double floor = kOccupancyFloor);

/// Pearson correlation between |E(t_p)| and series[p] over t_p in [t_lo, t_hi].
double field_rate_correlation(const ControlField& field, const std::vector<double>& series,
                              double t_lo, double t_hi);

double pearson(const std::vector<double>& x, const std::vector<double>& y);

}  // namespace beable
