#pragma once

#include <span>
#include <vector>

namespace beable {

/// Uniform time grid t_p = p * step for p = 0..steps; samples live on the
/// left endpoints p = 0..steps-1 and states on all steps+1 points.
struct TimeGrid {
  int steps = 0;
  double step = 0.0;

  double time(int p) const { return p * step; }
  double horizon() const { return steps * step; }
};

/// Envelope values of one carrier frozen on a step.
struct CarrierSample {
  double amplitude = 0.0;
  double phase = 0.0;
  double frequency = 0.0;
};

/// One term alpha * A(t) * exp(i(phi(t) + omega_c t)) of the complex field.
struct Carrier {
  std::vector<double> amplitude;  // V/Angstrom, one per step
  std::vector<double> phase;      // rad, one per step
  double frequency = 0.0;         // fs^-1
  double weight = 1.0;

  CarrierSample at(int p) const { return {amplitude[p], phase[p], frequency}; }
};

/// Control field E(t) = M * Re{sum_i alpha_i A_i(t) exp(i(phi_i(t) + omega_i t))}.
class ControlField {
 public:
  ControlField(TimeGrid grid, std::vector<Carrier> carriers, double modulation = 1.0);

  /// Raw sampled field: one carrier with omega_c = 0 and phi = 0.
  static ControlField sampled(double step, std::vector<double> samples);
  static ControlField zero(TimeGrid grid);

  const TimeGrid& grid() const { return grid_; }
  const std::vector<Carrier>& carriers() const { return carriers_; }
  double modulation() const { return modulation_; }

  /// E(t_p) including the modulation factor.
  double value(int p) const;
  std::vector<double> values() const;

  bool is_raw() const;
  /// Raw samples A(t_p) of a raw field, without modulation.
  std::span<const double> raw_samples() const;

  ControlField with_modulation(double m) const;

  /// Same field on a grid `factor` times finer; envelopes are held constant
  /// over each original step, carrier phases stay exact.
  ControlField refined(int factor) const;

  /// Raw field with every `factor`-th sample kept (zero-order hold source).
  ControlField decimated(int factor) const;

 private:
  TimeGrid grid_;
  std::vector<Carrier> carriers_;
  double modulation_ = 1.0;
};

}  // namespace beable
