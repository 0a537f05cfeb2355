#pragma once

#include <cstdint>
#include <variant>
#include <vector>

#include <Eigen/Dense>

#include "beable/control_field.hpp"
#include "beable/level_system.hpp"
#include "beable/propagator.hpp"
#include "beable/random.hpp"

namespace beable {

/// |psi_m|^2 below which site m counts as unoccupied and emits no jumps.
inline constexpr double kOccupancyFloor = 1e-12;

struct JumpEvent {
  int step = 0;  // grid index p: the jump happens in (t_p, t_{p+1})
  int from = 0;
  int to = 0;

  friend bool operator==(const JumpEvent&, const JumpEvent&) = default;
};

struct Trajectory {
  int initial = 0;
  std::vector<JumpEvent> events;
  int final = 0;

  int jumps() const { return static_cast<int>(events.size()); }
  /// Site occupied at grid time t_p.
  int site_at(int p) const;

  friend bool operator==(const Trajectory&, const Trajectory&) = default;
};

/// Either a fixed starting site or a distribution over sites.
using InitialSites = std::variant<int, std::vector<double>>;

struct EnsembleConfig {
  int n_traj = 1;
  std::uint64_t seed = 0;
  InitialSites initial = 0;
  /// Sampler substeps per propagator step.
  int substeps = 1;
  double floor = kOccupancyFloor;
  int workers = 0;  // 0: default_workers()
};

struct SamplerStats {
  /// (step, pair) instances where the occupancy floor suppressed a nonzero flux.
  std::int64_t floor_exceptions = 0;
  /// (step, pair) instances over coupled pairs.
  std::int64_t pair_instances = 0;
  /// (step, site) columns whose total jump probability exceeded one.
  std::int64_t overflow_columns = 0;
};

struct Ensemble {
  TimeGrid grid;
  std::vector<Trajectory> trajectories;
  SamplerStats stats;

  int size() const { return static_cast<int>(trajectories.size()); }
};

/// z_nm = -(i/eps) G_nm psi_n^* / psi_m^*, evaluated as -(i/eps) G_nm psi_n^* psi_m / |psi_m|^2
/// so that Re{z_nm}|psi_m|^2 = -Re{z_mn}|psi_n|^2 holds bit-exactly. Columns with
/// |psi_m|^2 < floor are zero.
Eigen::MatrixXcd z_matrix(const Eigen::VectorXcd& psi, const Eigen::MatrixXcd& generator,
                          double eps, double floor = kOccupancyFloor);

/// T_nm = max(0, 2 Re{z_nm}), zero diagonal.
Eigen::MatrixXd jump_rates(const Eigen::MatrixXcd& z);

/// Probability current F_nm = 2 Re{z_nm} |psi_m|^2 (antisymmetric, no floor).
Eigen::MatrixXd probability_flux(const Eigen::VectorXcd& psi, const Eigen::MatrixXcd& generator,
                                 double eps);

/// Number of coupled pairs whose flux is nonzero but leaves a site below the floor.
int floor_exceptions(const Eigen::VectorXcd& psi, const Eigen::MatrixXcd& generator,
                     double eps, double floor = kOccupancyFloor);

/// One step of the jump rule from `site`: jump to n with probability T_nm eps,
/// otherwise stay. Steps whose total jump probability exceeds one are halved
/// recursively.
int advance_beable(RandomStream& rng, int site, const Eigen::MatrixXd& rates, double eps);

/// Rate matrices on the sampler grid (steps * substeps entries).
struct RateSchedule {
  TimeGrid grid;
  int substeps = 1;
  std::vector<Eigen::MatrixXd> rates;
  SamplerStats stats;
};

RateSchedule build_rate_schedule(const LevelSystem& sys, const ControlField& field,
                                 const Propagation& prop, int substeps,
                                 double floor = kOccupancyFloor);

Ensemble sample_ensemble(const RateSchedule& schedule, const EnsembleConfig& cfg);

/// Coupled (step, pair) instances with min(T_nm, T_mn) != 0.
std::int64_t exclusivity_violations(const LevelSystem& sys, const RateSchedule& schedule);

struct FlowBalance {
  std::int64_t checked = 0;
  std::int64_t over_tolerance = 0;
  double worst = 0.0;  // largest relative error
};

/// Net jump flow into each site, sum_m (T_nm |psi_m|^2 - T_mn |psi_n|^2), against the
/// centered difference of |psi_n|^2. Both are taken at step midpoints, where the
/// field is constant across the difference stencil. Sites with |d|psi_n|^2/dt| at
/// or below `threshold` (fs^-1) are skipped.
FlowBalance flow_balance(const LevelSystem& sys, const ControlField& field,
                         const Propagation& prop, double threshold = 1e-4,
                         double tolerance = 0.05);

Ensemble run_ensemble(const LevelSystem& sys, const ControlField& field,
                      const EnsembleConfig& cfg);
/// Reuses an existing propagation of `field` from the ensemble's initial state.
Ensemble run_ensemble(const LevelSystem& sys, const ControlField& field,
                      const Propagation& prop, const EnsembleConfig& cfg);

}  // namespace beable
