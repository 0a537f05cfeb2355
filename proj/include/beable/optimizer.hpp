#pragma once

#include <cstdint>
#include <vector>

#include "beable/control_field.hpp"
#include "beable/level_system.hpp"

namespace beable {

/// Initial field: sum over coupled transitions of resonant cosines under a
/// sin^2 envelope, with phases drawn from `seed`.
struct InitialFieldSpec {
  std::uint64_t seed = 1;
  double amplitude = 0.05;  // V/Angstrom per transition
};

struct OptimizerConfig {
  Transfer transfer{0, 1};
  double horizon = 100.0;  // fs
  double step = 0.025;     // fs
  int iterations = 2000;
  double learning_rate = 1.0;
  /// Largest change of any field sample in one iteration, V/Angstrom.
  double max_field_step = 0.01;
  double fluence_penalty = 0.0;
  /// Gaussian smoothing width (fs) applied to the gradient; 0 disables.
  double smoothing_width = 0.0;
  InitialFieldSpec initial;
  /// Stop once the transferred population reaches this value.
  double stop_transfer = 1.0;
  /// Stagnation: stop after this many consecutive rejected line searches.
  int max_rejections = 30;
};

/// J = |psi_target(t_f)|^2 - lambda * eps * sum_p E(t_p)^2.
double objective(const LevelSystem& sys, const ControlField& field, const Transfer& transfer,
                 double fluence_penalty = 0.0);

/// dJ/dE(t_p) of a raw sampled field by one forward and one backward sweep.
std::vector<double> gradient(const LevelSystem& sys, const ControlField& field,
                             const Transfer& transfer, double fluence_penalty = 0.0);

double transfer_population(const LevelSystem& sys, const ControlField& field,
                           const Transfer& transfer);

ControlField initial_field(const LevelSystem& sys, const OptimizerConfig& cfg);

struct OptimizerLogRow {
  int iteration = 0;
  double objective = 0.0;
  double transfer = 0.0;
  double fluence = 0.0;
  double step_size = 0.0;
};

struct OptimizationResult {
  ControlField field;
  std::vector<OptimizerLogRow> log;
  double transfer = 0.0;
  bool stagnated = false;
};

/// Gradient ascent with backtracking on a raw sampled field.
OptimizationResult optimize(const LevelSystem& sys, const OptimizerConfig& cfg);
OptimizationResult optimize(const LevelSystem& sys, const OptimizerConfig& cfg,
                            ControlField start);

}  // namespace beable
