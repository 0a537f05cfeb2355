#include "beable/propagator.hpp"

#include <cmath>
#include <sstream>

#include "beable/errors.hpp"
#include "beable/units.hpp"

namespace beable {

namespace {

constexpr double kTaylorThreshold = 1e-6;

bool raw_carrier(const Carrier& c, int p) { return c.frequency == 0.0 && c.phase[p] == 0.0; }

// Integral of Re{alpha A e^{i(phi + omega_c s)}} e^{i omega s} over the interval.
Complex real_carrier_integral(double omega, const Carrier& c, int p, double t_start,
                              double length) {
  const CarrierSample s = c.at(p);
  if (raw_carrier(c, p)) return c.weight * step_phase_integral(omega, s, t_start, length);
  const CarrierSample conj{s.amplitude, -s.phase, -s.frequency};
  return 0.5 * c.weight *
         (step_phase_integral(omega, s, t_start, length) +
          step_phase_integral(omega, conj, t_start, length));
}

}  // namespace

QuantumState QuantumState::basis(int count, int site) {
  if (site < 0 || site >= count) throw ConfigError("basis site out of range");
  QuantumState s;
  s.amplitudes = Eigen::VectorXcd::Zero(count);
  s.amplitudes[site] = 1.0;
  return s;
}

Complex hamiltonian_element(const LevelSystem& sys, double field_value, int n, int m,
                            double t) {
  const double w = sys.transition_frequency(n, m);
  const double mu = sys.mu()(n, m);
  if (mu == 0.0) return 0.0;
  return units::kCoupling * field_value * mu * std::polar(1.0, w * t);
}

Complex step_phase_integral(double omega, const CarrierSample& carrier, double t_start,
                            double length) {
  const double theta = omega + carrier.frequency;
  const Complex envelope = std::polar(carrier.amplitude, carrier.phase);
  // (e^{i theta (t+L)} - e^{i theta t}) / (i theta) written without cancellation.
  const double half = 0.5 * theta * length;
  const double width = std::abs(half) < kTaylorThreshold ? length * (1.0 - half * half / 6.0)
                                                         : 2.0 * std::sin(half) / theta;
  return envelope * std::polar(width, theta * t_start + half);
}

Eigen::MatrixXcd step_generator(const LevelSystem& sys, const ControlField& field, int p,
                                double t_start, double length) {
  const int n_lev = sys.count();
  Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(n_lev, n_lev);
  const double scale = units::kCoupling * field.modulation();
  for (const auto& [n, m] : sys.edges()) {
    const double w = sys.omega()[n] - sys.omega()[m];
    Complex v = 0.0;
    for (const auto& c : field.carriers()) v += real_carrier_integral(w, c, p, t_start, length);
    v *= scale * sys.mu()(n, m);
    if (!std::isfinite(v.real()) || !std::isfinite(v.imag())) {
      std::ostringstream msg;
      msg << "non-finite generator element (" << n << "," << m << ") at step " << p;
      throw NumericalError(msg.str());
    }
    g(n, m) = v;
    g(m, n) = std::conj(v);
  }
  return g;
}

Eigen::MatrixXcd unitary_from_generator(const Eigen::MatrixXcd& generator) {
  const Eigen::Index n = generator.rows();
  if (generator.isZero(0.0)) return Eigen::MatrixXcd::Identity(n, n);
  if (!generator.isApprox(generator.adjoint(), 1e-14))
    throw NumericalError("step generator is not Hermitian");
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(generator);
  if (eig.info() != Eigen::Success) throw NumericalError("eigendecomposition failed");
  Eigen::VectorXcd phases(n);
  for (Eigen::Index k = 0; k < n; ++k) phases[k] = std::polar(1.0, -eig.eigenvalues()[k]);
  return eig.eigenvectors() * phases.asDiagonal() * eig.eigenvectors().adjoint();
}

StepOperator step_operator(const LevelSystem& sys, const ControlField& field, int p) {
  const auto& grid = field.grid();
  if (p < 0 || p >= grid.steps) throw std::out_of_range("step index outside the field grid");
  StepOperator op;
  op.generator = step_generator(sys, field, p, grid.time(p), grid.step);
  op.unitary = unitary_from_generator(op.generator);
  return op;
}

Propagation propagate(const LevelSystem& sys, const ControlField& field,
                      const QuantumState& initial, const PropagateOptions& options) {
  if (initial.amplitudes.size() != sys.count())
    throw ConfigError("initial state dimension does not match the level system");
  if (std::abs(initial.norm_squared() - 1.0) > options.norm_tolerance)
    throw ConfigError("initial state is not normalized");

  const auto& grid = field.grid();
  Propagation out;
  out.grid = grid;
  out.states.reserve(grid.steps + 1);
  if (options.keep_generators) out.generators.reserve(grid.steps);
  out.states.push_back(initial.amplitudes);

  for (int p = 0; p < grid.steps; ++p) {
    StepOperator op = step_operator(sys, field, p);
    out.states.push_back(op.unitary * out.states.back());
    const double drift = std::abs(out.states.back().squaredNorm() - 1.0);
    if (drift > options.norm_tolerance) {
      std::ostringstream msg;
      msg << "norm drift " << drift << " exceeds " << options.norm_tolerance << " at step "
          << p << " (t = " << grid.time(p + 1) << " fs)";
      throw NumericalError(msg.str());
    }
    if (options.keep_generators) out.generators.push_back(std::move(op.generator));
  }
  return out;
}

RawFieldPropagator::RawFieldPropagator(const LevelSystem& sys, TimeGrid grid)
    : grid_(grid), phases_(sys.omega()) {
  const int n_lev = sys.count();
  coupling_ = Eigen::MatrixXcd::Zero(n_lev, n_lev);
  const CarrierSample unit{1.0, 0.0, 0.0};
  for (const auto& [n, m] : sys.edges()) {
    const Complex v = units::kCoupling * sys.mu()(n, m) *
                      step_phase_integral(phases_[n] - phases_[m], unit, 0.0, grid_.step);
    coupling_(n, m) = v;
    coupling_(m, n) = std::conj(v);
  }
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXcd> eig(coupling_);
  vectors_ = eig.eigenvectors();
  values_ = eig.eigenvalues();
}

Eigen::VectorXcd RawFieldPropagator::phase_at(int p) const {
  const double t = grid_.time(p);
  Eigen::VectorXcd d(count());
  for (int n = 0; n < count(); ++n) d[n] = std::polar(1.0, phases_[n] * t);
  return d;
}

void RawFieldPropagator::step(Eigen::VectorXcd& psi, int p, double amplitude) const {
  if (amplitude == 0.0) return;
  const Eigen::VectorXcd d = phase_at(p);
  Eigen::VectorXcd w = vectors_.adjoint() * d.conjugate().cwiseProduct(psi);
  for (int k = 0; k < count(); ++k) w[k] *= std::polar(1.0, -amplitude * values_[k]);
  psi = d.cwiseProduct(vectors_ * w);
}

void RawFieldPropagator::step_back(Eigen::VectorXcd& psi, int p, double amplitude) const {
  if (amplitude == 0.0) return;
  const Eigen::VectorXcd d = phase_at(p);
  Eigen::VectorXcd w = vectors_.adjoint() * d.conjugate().cwiseProduct(psi);
  for (int k = 0; k < count(); ++k) w[k] *= std::polar(1.0, amplitude * values_[k]);
  psi = d.cwiseProduct(vectors_ * w);
}

Eigen::VectorXcd RawFieldPropagator::apply_coupling(const Eigen::VectorXcd& psi, int p) const {
  const Eigen::VectorXcd d = phase_at(p);
  return d.cwiseProduct(coupling_ * d.conjugate().cwiseProduct(psi));
}

Eigen::MatrixXcd RawFieldPropagator::coupling(int p) const {
  const Eigen::VectorXcd d = phase_at(p);
  return d.asDiagonal() * coupling_ * d.conjugate().asDiagonal();
}

Eigen::VectorXcd RawFieldPropagator::final_state(std::span<const double> samples,
                                                 double modulation,
                                                 const Eigen::VectorXcd& initial) const {
  if (static_cast<int>(samples.size()) != grid_.steps)
    throw ConfigError("field samples do not match the propagator grid");
  Eigen::VectorXcd psi = initial;
  for (int p = 0; p < grid_.steps; ++p) step(psi, p, modulation * samples[p]);
  return psi;
}

}  // namespace beable
