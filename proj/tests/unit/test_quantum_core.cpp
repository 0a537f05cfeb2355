#include <cmath>
#include <complex>
#include <numbers>

#include <gtest/gtest.h>

#include "beable/control_field.hpp"
#include "beable/errors.hpp"
#include "beable/level_system.hpp"
#include "beable/propagator.hpp"
#include "beable/units.hpp"

using namespace beable;

namespace {

LevelSystem two_level(double omega1, double mu) {
  Eigen::MatrixXd m(2, 2);
  m << 0.0, mu, mu, 0.0;
  return LevelSystem({0.0, omega1}, m);
}

// Composite Simpson rule for a complex integrand.
template <class F>
std::complex<double> simpson(F f, double a, double b, int n) {
  const double h = (b - a) / n;
  std::complex<double> s = f(a) + f(b);
  for (int i = 1; i < n; ++i) s += (i % 2 ? 4.0 : 2.0) * f(a + i * h);
  return s * h / 3.0;
}

ControlField carrier_field(double step, double horizon, double freq, double peak) {
  const int steps = static_cast<int>(std::lround(horizon / step));
  Carrier c;
  c.frequency = freq;
  for (int p = 0; p < steps; ++p) {
    const double s = std::sin(std::numbers::pi * p * step / horizon);
    c.amplitude.push_back(peak * s * s);
    c.phase.push_back(0.3);
  }
  return ControlField({steps, step}, {c});
}

}  // namespace

TEST(LevelSystem, ExampleHonoursPrintedConstraints) {
  const LevelSystem sys = seven_level_example();
  ASSERT_EQ(sys.count(), 7);
  EXPECT_EQ(sys.omega()[4], sys.omega()[5]);
  EXPECT_NEAR(std::abs(sys.transition_frequency(5, 3) - sys.transition_frequency(6, 5)), 0.12,
              1e-12);
  const std::vector<std::pair<int, int>> edges{{0, 1}, {0, 2}, {1, 3}, {2, 3},
                                               {3, 4}, {3, 5}, {4, 6}, {5, 6}};
  EXPECT_EQ(sys.edges(), edges);
  EXPECT_EQ(sys.shortest_jumps(0, 6), 4);
  EXPECT_EQ(sys.shortest_jumps(3, 3), 0);
}

TEST(LevelSystem, RejectsMalformedDipoles) {
  Eigen::MatrixXd asym(2, 2);
  asym << 0.0, 1.0, 2.0, 0.0;
  EXPECT_THROW(LevelSystem({0.0, 1.0}, asym), ConfigError);
  Eigen::MatrixXd diag(2, 2);
  diag << 1.0, 1.0, 1.0, 0.0;
  EXPECT_THROW(LevelSystem({0.0, 1.0}, diag), ConfigError);
  EXPECT_THROW(LevelSystem({0.0}, Eigen::MatrixXd::Zero(1, 1)), ConfigError);
}

TEST(LevelSystem, DisconnectedTransferIsRejected) {
  Eigen::MatrixXd m = Eigen::MatrixXd::Zero(3, 3);
  m(0, 1) = m(1, 0) = 1.0;
  const LevelSystem sys({0.0, 1.0, 2.0}, m);
  EXPECT_FALSE(sys.connected(0, 2));
  EXPECT_THROW(validate_transfer(sys, {0, 2}), ConfigError);
  EXPECT_THROW(validate_transfer(sys, {0, 5}), ConfigError);
}

TEST(Hamiltonian, ElementAtPi) {
  const LevelSystem sys = seven_level_example();
  const double t = std::numbers::pi, e = 0.02;
  const double w = sys.omega()[3] - sys.omega()[1];
  const std::complex<double> want =
      units::kCoupling * e * 3.0 * std::complex<double>(std::cos(w * t), std::sin(w * t));
  const auto got = hamiltonian_element(sys, e, 3, 1, t);
  EXPECT_NEAR(std::abs(got - want), 0.0, 1e-15);
  EXPECT_NEAR(std::abs(hamiltonian_element(sys, e, 1, 3, t) - std::conj(want)), 0.0, 1e-15);
  EXPECT_EQ(hamiltonian_element(sys, e, 0, 6, t), std::complex<double>(0.0, 0.0));
}

TEST(Hamiltonian, CouplingConstant) {
  // 1e-30 C*m * 1 V/Angstrom / hbar, in fs^-1.
  EXPECT_NEAR(units::kCoupling, 0.0948252, 1e-7);
}

TEST(PhaseIntegral, ClosedFormAndQuadrature) {
  const CarrierSample c{1.0, 0.0, 0.0};
  const auto got = step_phase_integral(0.5, c, 0.0, 1.0);
  const std::complex<double> i(0.0, 1.0);
  const auto closed = (std::exp(0.5 * i) - 1.0) / (0.5 * i);
  EXPECT_NEAR(std::abs(got - closed), 0.0, 1e-15);

  const CarrierSample c2{0.7, 0.4, 1.3};
  const auto quad = simpson(
      [&](double s) { return c2.amplitude * std::exp(i * (c2.phase + c2.frequency * s)) * std::exp(i * 2.1 * s); },
      3.0, 3.25, 2000);
  EXPECT_NEAR(std::abs(step_phase_integral(2.1, c2, 3.0, 0.25) - quad), 0.0, 1e-13);
}

TEST(PhaseIntegral, ZeroFrequencyLimit) {
  const CarrierSample c{0.3, 0.2, 0.0};
  const auto got = step_phase_integral(0.0, c, 5.0, 0.025);
  const auto want = 0.3 * 0.025 * std::exp(std::complex<double>(0.0, 0.2));
  EXPECT_NEAR(std::abs(got - want), 0.0, 1e-17);
  // Small omega: leading order is the midpoint phase e^{i omega (t + L/2)}.
  const auto tiny = step_phase_integral(1e-9, c, 5.0, 0.025);
  const auto mid = want * std::exp(std::complex<double>(0.0, 1e-9 * 5.0125));
  EXPECT_NEAR(std::abs(tiny - mid), 0.0, 1e-16);
}

TEST(Propagator, RabiOscillationOnDegenerateLevels) {
  const double mu = 2.0, e = 0.01, eps = 0.025;
  const LevelSystem sys = two_level(0.0, mu);
  const auto field = ControlField::sampled(eps, std::vector<double>(4000, e));
  const Propagation prop = propagate(sys, field, QuantumState::basis(2, 0));
  double worst = 0.0;
  for (int p = 0; p <= prop.grid.steps; ++p) {
    const double s = std::sin(units::kCoupling * mu * e * prop.grid.time(p));
    worst = std::max(worst, std::abs(prop.population(p, 1) - s * s));
  }
  EXPECT_LT(worst, 1e-6);
}

TEST(Propagator, UnitaryStepsAndNorm) {
  const LevelSystem sys = seven_level_example();
  const ControlField field = carrier_field(0.025, 100.0, 2.3, 0.05);
  const Propagation prop = propagate(sys, field, QuantumState::basis(7, 0));
  for (int p = 0; p < prop.grid.steps; p += 97) {
    const auto u = unitary_from_generator(prop.generators[p]);
    const double err = (u.adjoint() * u - Eigen::MatrixXcd::Identity(7, 7)).cwiseAbs().maxCoeff();
    EXPECT_LT(err, 1e-12);
    EXPECT_LT((prop.generators[p] - prop.generators[p].adjoint()).cwiseAbs().maxCoeff(), 1e-15);
  }
  for (const auto& psi : prop.states) EXPECT_NEAR(psi.squaredNorm(), 1.0, 1e-8);
}

TEST(Propagator, RawFastPathMatchesGeneral) {
  const LevelSystem sys = seven_level_example();
  std::vector<double> samples;
  for (int p = 0; p < 800; ++p) samples.push_back(0.04 * std::sin(0.9 * p * 0.025) + 0.01 * std::cos(2.2 * p * 0.025));
  const auto field = ControlField::sampled(0.025, samples);
  const auto general = propagate(sys, field, QuantumState::basis(7, 0)).final_state();
  const RawFieldPropagator fast(sys, field.grid());
  const Eigen::VectorXcd init = QuantumState::basis(7, 0).amplitudes;
  const auto got = fast.final_state(field.raw_samples(), 1.0, init);
  EXPECT_LT((got - general).cwiseAbs().maxCoeff(), 1e-12);
  // Backward step undoes the forward step.
  Eigen::VectorXcd psi = init;
  fast.step(psi, 17, 0.03);
  fast.step_back(psi, 17, 0.03);
  EXPECT_LT((psi - init).cwiseAbs().maxCoeff(), 1e-14);
}

TEST(Propagator, SecondOrderInStep) {
  // Zero-order-hold field sampled at 0.1 fs, refined onto finer grids.
  const LevelSystem sys = seven_level_example();
  std::vector<double> samples;
  for (int p = 0; p < 1000; ++p) {
    const double t = 0.1 * p;
    samples.push_back(0.05 * std::sin(std::numbers::pi * t / 100.0) * std::cos(1.5 * t));
  }
  const auto base = ControlField::sampled(0.1, samples);
  const auto init = QuantumState::basis(7, 0);
  const auto reference = propagate(sys, base.refined(32), init).final_state();
  std::vector<double> err;
  for (int f : {1, 2, 4}) err.push_back((propagate(sys, base.refined(f), init).final_state() - reference).cwiseAbs().maxCoeff());
  EXPECT_GT(err[0] / err[1], 3.5);
  EXPECT_LT(err[0] / err[1], 4.5);
  EXPECT_GT(err[1] / err[2], 3.5);
  EXPECT_LT(err[1] / err[2], 4.5);
}

TEST(Propagator, CarrierAndSampledRepresentationsAgree) {
  const LevelSystem sys = seven_level_example();
  std::vector<double> diff;
  for (double eps : {0.05, 0.025}) {
    const ControlField carrier = carrier_field(eps, 100.0, 2.3, 0.05);
    std::vector<double> raw = carrier.values();
    const auto sampled = ControlField::sampled(eps, raw);
    const auto a = propagate(sys, carrier, QuantumState::basis(7, 0)).final_state();
    const auto b = propagate(sys, sampled, QuantumState::basis(7, 0)).final_state();
    diff.push_back((a.cwiseAbs2() - b.cwiseAbs2()).cwiseAbs().maxCoeff());
  }
  EXPECT_LT(diff[0], 1e-3);
  EXPECT_GT(diff[0] / diff[1], 3.5);
  EXPECT_LT(diff[0] / diff[1], 4.5);
}

TEST(ControlField, ModulationScalesValues) {
  const auto f = ControlField::sampled(0.5, {1.0, -2.0, 3.0});
  const auto g = f.with_modulation(0.25);
  EXPECT_DOUBLE_EQ(g.value(1), -0.5);
  EXPECT_TRUE(f.is_raw());
  const auto r = f.refined(2);
  EXPECT_EQ(r.grid().steps, 6);
  EXPECT_DOUBLE_EQ(r.grid().step, 0.25);
  EXPECT_DOUBLE_EQ(r.value(3), -2.0);
  const auto d = r.decimated(2);
  EXPECT_EQ(d.values(), f.values());
}

TEST(Propagator, ZeroFieldIsStationary) {
  const LevelSystem sys = seven_level_example();
  const auto prop = propagate(sys, ControlField::zero({400, 0.025}), QuantumState::basis(7, 2));
  EXPECT_NEAR(prop.population(400, 2), 1.0, 1e-15);
}
