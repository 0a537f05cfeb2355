#pragma once

#include <complex>
#include <vector>

#include <Eigen/Dense>

#include "beable/control_field.hpp"
#include "beable/level_system.hpp"

namespace beable {

using Complex = std::complex<double>;

struct QuantumState {
  Eigen::VectorXcd amplitudes;
  double time = 0.0;

  static QuantumState basis(int count, int site);
  double norm_squared() const { return amplitudes.squaredNorm(); }
};

/// Propagator for one grid step together with its generator
/// G_p = integral of H(s) over the step (fs^-1 * fs, dimensionless).
struct StepOperator {
  Eigen::MatrixXcd generator;
  Eigen::MatrixXcd unitary;
};

/// Interaction-picture element kappa * E * mu_nm * exp(i omega_nm t), fs^-1.
Complex hamiltonian_element(const LevelSystem& sys, double field_value, int n, int m, double t);

/// Integral over [t_start, t_start + length] of A e^{i(phi + omega_c s)} e^{i omega s} ds
/// with A and phi held fixed.
Complex step_phase_integral(double omega, const CarrierSample& carrier, double t_start,
                            double length);

/// Integral of H over [t_start, t_start + length] with envelopes frozen at step p.
Eigen::MatrixXcd step_generator(const LevelSystem& sys, const ControlField& field, int p,
                                double t_start, double length);

/// exp(-i G) for Hermitian G.
Eigen::MatrixXcd unitary_from_generator(const Eigen::MatrixXcd& generator);

StepOperator step_operator(const LevelSystem& sys, const ControlField& field, int p);

struct PropagateOptions {
  double norm_tolerance = 1e-8;
  bool keep_generators = true;
};

/// States at every grid point and the per-step generators.
struct Propagation {
  TimeGrid grid;
  std::vector<Eigen::VectorXcd> states;
  std::vector<Eigen::MatrixXcd> generators;

  const Eigen::VectorXcd& final_state() const { return states.back(); }
  double population(int p, int site) const { return std::norm(states[p][site]); }
  Eigen::VectorXd populations(int p) const { return states[p].cwiseAbs2(); }
};

Propagation propagate(const LevelSystem& sys, const ControlField& field,
                      const QuantumState& initial, const PropagateOptions& options = {});

/// Fast propagator for raw sampled fields. The step generator factors as
/// G_p = M E_p D_p K D_p^dagger with D_p = diag(exp(i omega_n t_p)), so one
/// eigendecomposition of K serves every step and every field.
class RawFieldPropagator {
 public:
  RawFieldPropagator(const LevelSystem& sys, TimeGrid grid);

  const TimeGrid& grid() const { return grid_; }
  int count() const { return static_cast<int>(phases_.size()); }

  /// psi <- U_p psi for field amplitude `amplitude` (modulation included).
  void step(Eigen::VectorXcd& psi, int p, double amplitude) const;
  /// psi <- U_p^dagger psi.
  void step_back(Eigen::VectorXcd& psi, int p, double amplitude) const;
  /// K_p psi, the field-independent part of the generator of step p.
  Eigen::VectorXcd apply_coupling(const Eigen::VectorXcd& psi, int p) const;
  Eigen::MatrixXcd coupling(int p) const;

  Eigen::VectorXcd final_state(std::span<const double> samples, double modulation,
                               const Eigen::VectorXcd& initial) const;

 private:
  Eigen::VectorXcd phase_at(int p) const;

  TimeGrid grid_;
  std::vector<double> phases_;  // omega_n
  Eigen::MatrixXcd coupling_;   // K = K_0
  Eigen::MatrixXcd vectors_;
  Eigen::VectorXd values_;
};

}  // namespace beable
