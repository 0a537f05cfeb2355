#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "beable/control_field.hpp"
#include "beable/level_system.hpp"
#include "beable/levenberg_marquardt.hpp"
#include "beable/random.hpp"

namespace beable {

struct ModulationSample {
  double modulation = 0.0;
  double population = 0.0;
  double sigma = 0.0;
};

struct ModulationDataset {
  std::vector<ModulationSample> rows;
  double increment = 0.0;

  /// Throws ConfigError unless M is strictly increasing with uniform increment
  /// and populations are non-negative.
  void validate() const;
};

/// M = k * increment for k covering [lo, hi].
std::vector<double> modulation_grid(double lo, double hi, double increment);

/// |psi_target(t_f)|^2 under M * E(t), times g ~ Normal(1, sigma^2), clamped at 0.
double simulate_measurement(const LevelSystem& sys, const ControlField& field,
                            const Transfer& transfer, double modulation, double sigma,
                            RandomStream& rng);

/// Noise-free target populations for each modulation value.
std::vector<double> exact_populations(const LevelSystem& sys, const ControlField& field,
                                      const Transfer& transfer,
                                      const std::vector<double>& modulations, int workers = 0);

/// Multiplies each population by its own Normal(1, sigma^2) draw from stream
/// (seed, row index) and clamps at zero.
ModulationDataset add_noise(const std::vector<double>& modulations,
                            const std::vector<double>& populations, double sigma,
                            std::uint64_t seed);

ModulationDataset sweep(const LevelSystem& sys, const ControlField& field,
                        const Transfer& transfer, const std::vector<double>& modulations,
                        double sigma, std::uint64_t seed, int workers = 0);

struct DerivativePoint {
  double modulation = 0.0;
  double derivative = 0.0;  // d log sqrt(population) / d log M
  double weight = 0.0;
};

struct JminEstimate {
  int j_min = 0;
  double limit = 0.0;  // extrapolated derivative at M -> 0
  double slope = 0.0;
  std::vector<DerivativePoint> derivative;  // all usable rows
  int head_points = 0;
};

/// Centered log-log derivative of |psi|, weighted line fit in M over the
/// smallest-M `head_fraction` of rows, intercept rounded to an integer.
JminEstimate estimate_jmin(const ModulationDataset& ds, double head_fraction = 0.1);

struct FitParameters {
  std::vector<double> moments;  // <j^k>, k = 1..k_max
  double a = 0.0;
  double amplitude = 0.0;  // |psi_target(t_f)|

  int k_max() const { return static_cast<int>(moments.size()); }
};

/// (|psi| e^{-a(M-1)} sum_{k<=k_max} <j^k> (log M)^k / k!)^2 with <j^0> = 1.
double model_population(double modulation, const FitParameters& params);

struct FitWindow {
  double lo = 0.0;
  double hi = 0.0;
};

struct FitOptions {
  int k_max = 4;
  /// Enforce a > j_min through a = j_min + softplus(u).
  std::optional<int> a_lower_bound;
  /// Fit |psi| to sqrt(population) instead of population.
  bool amplitude_space = false;
  /// Anchor for the deterministic starts; defaults to a_lower_bound or 1.
  std::optional<double> jump_hint;
  LmOptions lm;
};

struct FitResult {
  FitParameters params;
  FitWindow window;
  int points = 0;
  double msd = 0.0;  // mean squared population deviation over the window
  bool converged = false;
  /// <j^2> < <j>^2: not interpretable as moments (annotated, never excluded).
  bool moment_flag = false;

  double mean_jumps() const { return params.moments.at(0); }
};

FitResult lm_fit(const ModulationDataset& ds, const FitWindow& window,
                 const FitOptions& options = {});

/// Fit windows on a grid with spacing `increment`:
/// m_min_lo < M_min < m_min_hi, m_max_lo < M_max < m_max_hi, M_max - M_min > min_width.
struct RangeGrid {
  double m_min_lo = 0.2;
  double m_min_hi = 0.8;
  double m_max_lo = 0.7;
  double m_max_hi = 1.6;
  double min_width = 0.10;
  double increment = 0.01;
  /// Lower-left exclusion: windows with M_max < edge_max AND M_min < edge_min.
  double pathological_max = 0.95;
  double pathological_min = 0.3;

  std::vector<FitWindow> windows() const;
};

struct WindowFit {
  FitResult fit;
  bool below_jmin = false;
  bool pathological = false;

  bool excluded() const { return below_jmin || pathological; }
};

struct RangeReport {
  int j_min = 0;
  int k_max = 0;
  /// One entry per admissible window, ordered by (M_min, M_max).
  std::vector<WindowFit> fits;
};

RangeReport range_search(const ModulationDataset& ds, const RangeGrid& grid,
                         const FitOptions& options, int j_min, int workers = 0);

struct BestFit {
  std::size_t index = 0;
  double mean_jumps = 0.0;
  FitWindow window;
  double msd = 0.0;
};

/// Minimum-MSD window among non-excluded fits; ties go to the wider window.
BestFit select_best(const RangeReport& report);

}  // namespace beable
