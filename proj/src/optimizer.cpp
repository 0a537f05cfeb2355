#include "beable/optimizer.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

#include "beable/errors.hpp"
#include "beable/propagator.hpp"
#include "beable/random.hpp"

namespace beable {

namespace {

double fluence(std::span<const double> samples, double modulation, double step) {
  double sum = 0.0;
  for (double a : samples) sum += (modulation * a) * (modulation * a);
  return step * sum;
}

std::vector<double> smooth(const std::vector<double>& g, double width, double step) {
  if (width <= 0.0) return g;
  const double sigma = width / step;
  const int half = static_cast<int>(std::ceil(4.0 * sigma));
  std::vector<double> kernel(2 * half + 1);
  double norm = 0.0;
  for (int k = -half; k <= half; ++k) {
    kernel[k + half] = std::exp(-0.5 * (k / sigma) * (k / sigma));
    norm += kernel[k + half];
  }
  const int n = static_cast<int>(g.size());
  std::vector<double> out(n, 0.0);
  for (int p = 0; p < n; ++p) {
    double acc = 0.0;
    for (int k = -half; k <= half; ++k) {
      const int q = p + k;
      if (q >= 0 && q < n) acc += kernel[k + half] * g[q];
    }
    out[p] = acc / norm;
  }
  return out;
}

struct Evaluation {
  double objective = 0.0;
  double transfer = 0.0;
  double fluence = 0.0;
};

Evaluation evaluate(const RawFieldPropagator& prop, std::span<const double> samples,
                    const Transfer& transfer, double penalty) {
  const Eigen::VectorXcd psi0 = QuantumState::basis(prop.count(), transfer.initial).amplitudes;
  const Eigen::VectorXcd psi = prop.final_state(samples, 1.0, psi0);
  Evaluation e;
  e.transfer = std::norm(psi[transfer.target]);
  e.fluence = fluence(samples, 1.0, prop.grid().step);
  e.objective = e.transfer - penalty * e.fluence;
  return e;
}

}  // namespace

double transfer_population(const LevelSystem& sys, const ControlField& field,
                           const Transfer& transfer) {
  validate_transfer(sys, transfer);
  if (field.is_raw()) {
    RawFieldPropagator prop(sys, field.grid());
    const Eigen::VectorXcd psi0 = QuantumState::basis(sys.count(), transfer.initial).amplitudes;
    return std::norm(prop.final_state(field.raw_samples(), field.modulation(), psi0)[transfer.target]);
  }
  const Propagation p = propagate(sys, field, QuantumState::basis(sys.count(), transfer.initial),
                                  {.keep_generators = false});
  return std::norm(p.final_state()[transfer.target]);
}

double objective(const LevelSystem& sys, const ControlField& field, const Transfer& transfer,
                 double fluence_penalty) {
  if (fluence_penalty < 0.0) throw ConfigError("fluence penalty must be >= 0");
  const std::vector<double> e = field.values();
  return transfer_population(sys, field, transfer) -
         fluence_penalty * fluence(e, 1.0, field.grid().step);
}

std::vector<double> gradient(const LevelSystem& sys, const ControlField& field,
                             const Transfer& transfer, double fluence_penalty) {
  validate_transfer(sys, transfer);
  const auto samples = field.raw_samples();
  const double m = field.modulation();
  const TimeGrid& grid = field.grid();
  RawFieldPropagator prop(sys, grid);

  std::vector<Eigen::VectorXcd> states;
  states.reserve(grid.steps + 1);
  states.push_back(QuantumState::basis(sys.count(), transfer.initial).amplitudes);
  for (int p = 0; p < grid.steps; ++p) {
    Eigen::VectorXcd next = states.back();
    prop.step(next, p, m * samples[p]);
    states.push_back(std::move(next));
  }

  // Costate lambda_p = U_p^dagger ... U_{N-1}^dagger |f><f|psi_N>.
  Eigen::VectorXcd costate = Eigen::VectorXcd::Zero(sys.count());
  costate[transfer.target] = states.back()[transfer.target];
  std::vector<double> grad(grid.steps);
  for (int p = grid.steps - 1; p >= 0; --p) {
    const Complex overlap = costate.dot(prop.apply_coupling(states[p + 1], p));
    grad[p] = 2.0 * m * overlap.imag() - 2.0 * fluence_penalty * grid.step * m * m * samples[p];
    prop.step_back(costate, p, m * samples[p]);
  }
  return grad;
}

ControlField initial_field(const LevelSystem& sys, const OptimizerConfig& cfg) {
  if (!(cfg.horizon > 0.0) || !(cfg.step > 0.0)) throw ConfigError("horizon and step must be > 0");
  const int steps = static_cast<int>(std::lround(cfg.horizon / cfg.step));
  if (std::abs(steps * cfg.step - cfg.horizon) > 1e-9 * cfg.horizon)
    throw ConfigError("horizon must be a multiple of the step");
  RandomStream rng(cfg.initial.seed, 0);
  std::vector<double> e(steps, 0.0);
  for (const auto& [n, m] : sys.edges()) {
    const double w = std::abs(sys.omega()[m] - sys.omega()[n]);
    const double phi = 2.0 * std::numbers::pi * rng.uniform();
    for (int p = 0; p < steps; ++p) {
      const double t = p * cfg.step;
      const double env = std::sin(std::numbers::pi * t / cfg.horizon);
      e[p] += cfg.initial.amplitude * env * env * std::cos(w * t + phi);
    }
  }
  return ControlField::sampled(cfg.step, std::move(e));
}

OptimizationResult optimize(const LevelSystem& sys, const OptimizerConfig& cfg) {
  return optimize(sys, cfg, initial_field(sys, cfg));
}

OptimizationResult optimize(const LevelSystem& sys, const OptimizerConfig& cfg,
                            ControlField start) {
  validate_transfer(sys, cfg.transfer);
  if (cfg.fluence_penalty < 0.0) throw ConfigError("fluence penalty must be >= 0");
  if (cfg.iterations < 0) throw ConfigError("iterations must be >= 0");
  if (!(cfg.learning_rate > 0.0)) throw ConfigError("learning rate must be > 0");
  if (!(cfg.max_field_step > 0.0)) throw ConfigError("max field step must be > 0");
  if (!start.is_raw()) throw ConfigError("optimizer works on raw sampled fields");

  const TimeGrid grid = start.grid();
  const double m = start.modulation();
  std::vector<double> x(start.raw_samples().begin(), start.raw_samples().end());
  for (double& v : x) v *= m;

  RawFieldPropagator prop(sys, grid);
  Evaluation current = evaluate(prop, x, cfg.transfer, cfg.fluence_penalty);
  double rate = cfg.learning_rate;

  OptimizationResult result{ControlField::sampled(grid.step, x), {}, current.transfer, false};
  result.log.push_back({0, current.objective, current.transfer, current.fluence, rate});

  int rejections = 0;
  std::vector<double> trial(x.size());
  for (int it = 1; it <= cfg.iterations && current.transfer < cfg.stop_transfer; ++it) {
    const std::vector<double> g =
        smooth(gradient(sys, ControlField::sampled(grid.step, x), cfg.transfer,
                        cfg.fluence_penalty),
               cfg.smoothing_width, grid.step);
    double g_max = 0.0;
    for (double v : g) g_max = std::max(g_max, std::abs(v));
    if (g_max > 0.0) rate = std::min(rate, cfg.max_field_step / g_max);
    bool accepted = false;
    for (int attempt = 0; attempt < 40; ++attempt) {
      for (std::size_t p = 0; p < x.size(); ++p) trial[p] = x[p] + rate * g[p];
      const Evaluation next = evaluate(prop, trial, cfg.transfer, cfg.fluence_penalty);
      if (next.objective > current.objective) {
        x.swap(trial);
        current = next;
        rate *= 1.5;
        accepted = true;
        break;
      }
      rate *= 0.5;
    }
    if (!accepted) {
      rate = cfg.learning_rate;
      if (++rejections >= cfg.max_rejections) {
        result.stagnated = true;
        break;
      }
      continue;
    }
    rejections = 0;
    result.log.push_back({it, current.objective, current.transfer, current.fluence, rate});
  }
  result.field = ControlField::sampled(grid.step, std::move(x));
  result.transfer = current.transfer;
  return result;
}

}  // namespace beable
