#include "beable/sampler.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>

#include "beable/errors.hpp"
#include "beable/parallel.hpp"

namespace beable {

int Trajectory::site_at(int p) const {
  int site = initial;
  for (const auto& e : events) {
    if (e.step >= p) break;
    site = e.to;
  }
  return site;
}

Eigen::MatrixXcd z_matrix(const Eigen::VectorXcd& psi, const Eigen::MatrixXcd& generator,
                          double eps, double floor) {
  const Eigen::Index n_lev = psi.size();
  Eigen::MatrixXcd z = Eigen::MatrixXcd::Zero(n_lev, n_lev);
  const Complex minus_i_over_eps(0.0, -1.0 / eps);
  for (Eigen::Index m = 0; m < n_lev; ++m) {
    const double occ = std::norm(psi[m]);
    if (occ < floor) continue;
    for (Eigen::Index n = 0; n < n_lev; ++n) {
      if (n == m || generator(n, m) == 0.0) continue;
      z(n, m) = minus_i_over_eps * (generator(n, m) * (std::conj(psi[n]) * psi[m])) / occ;
    }
  }
  return z;
}

Eigen::MatrixXd jump_rates(const Eigen::MatrixXcd& z) {
  Eigen::MatrixXd t = Eigen::MatrixXd::Zero(z.rows(), z.cols());
  for (Eigen::Index m = 0; m < z.cols(); ++m)
    for (Eigen::Index n = 0; n < z.rows(); ++n)
      if (n != m && z(n, m).real() > 0.0) t(n, m) = 2.0 * z(n, m).real();
  return t;
}

Eigen::MatrixXd probability_flux(const Eigen::VectorXcd& psi, const Eigen::MatrixXcd& generator,
                                 double eps) {
  const Eigen::Index n_lev = psi.size();
  Eigen::MatrixXd f = Eigen::MatrixXd::Zero(n_lev, n_lev);
  for (Eigen::Index m = 0; m < n_lev; ++m)
    for (Eigen::Index n = 0; n < n_lev; ++n)
      if (n != m) f(n, m) = 2.0 * (generator(n, m) * (std::conj(psi[n]) * psi[m])).imag() / eps;
  return f;
}

int floor_exceptions(const Eigen::VectorXcd& psi, const Eigen::MatrixXcd& generator, double eps,
                     double floor) {
  const Eigen::MatrixXd flux = probability_flux(psi, generator, eps);
  int count = 0;
  for (Eigen::Index m = 0; m < psi.size(); ++m) {
    const double occ = std::norm(psi[m]);
    if (occ >= floor || occ == 0.0) continue;
    for (Eigen::Index n = 0; n < psi.size(); ++n)
      if (n != m && flux(n, m) > 0.0) ++count;
  }
  return count;
}

namespace {

// Appends every site entered, so that both jumps of a halved step are kept.
int advance_path(RandomStream& rng, int site, const Eigen::MatrixXd& rates, double eps,
                 std::vector<int>* entered) {
  const Eigen::Index n_lev = rates.rows();
  double total = 0.0;
  for (Eigen::Index n = 0; n < n_lev; ++n) {
    if (n == site) continue;
    const double r = rates(n, site);
    if (r < 0.0 || !std::isfinite(r)) throw std::logic_error("negative or non-finite jump rate");
    total += r;
  }
  total *= eps;
  if (total == 0.0) return site;
  if (total > 1.0) {
    site = advance_path(rng, site, rates, 0.5 * eps, entered);
    return advance_path(rng, site, rates, 0.5 * eps, entered);
  }
  const double u = rng.uniform();
  if (u >= total) return site;
  double acc = 0.0;
  int last = site;
  for (Eigen::Index n = 0; n < n_lev; ++n) {
    if (n == site || rates(n, site) == 0.0) continue;
    acc += rates(n, site) * eps;
    last = static_cast<int>(n);
    if (u < acc) break;
  }
  if (entered) entered->push_back(last);
  return last;
}

}  // namespace

int advance_beable(RandomStream& rng, int site, const Eigen::MatrixXd& rates, double eps) {
  return advance_path(rng, site, rates, eps, nullptr);
}

RateSchedule build_rate_schedule(const LevelSystem& sys, const ControlField& field,
                                 const Propagation& prop, int substeps, double floor) {
  if (substeps < 1) throw ConfigError("sampler substeps must be >= 1");
  const TimeGrid& grid = field.grid();
  if (static_cast<int>(prop.states.size()) != grid.steps + 1)
    throw ConfigError("propagation does not match the field grid");
  RateSchedule out;
  out.grid = grid;
  out.substeps = substeps;
  out.rates.reserve(static_cast<std::size_t>(grid.steps) * substeps);
  const double h = grid.step / substeps;
  const auto n_edges = static_cast<std::int64_t>(sys.edges().size());

  auto add = [&](const Eigen::VectorXcd& psi, const Eigen::MatrixXcd& g) {
    Eigen::MatrixXd t = jump_rates(z_matrix(psi, g, h, floor));
    out.stats.pair_instances += n_edges;
    out.stats.floor_exceptions += floor_exceptions(psi, g, h, floor);
    for (Eigen::Index m = 0; m < t.cols(); ++m)
      if (t.col(m).sum() * h > 1.0) ++out.stats.overflow_columns;
    out.rates.push_back(std::move(t));
  };

  for (int p = 0; p < grid.steps; ++p) {
    if (substeps == 1) {
      if (!prop.generators.empty()) {
        add(prop.states[p], prop.generators[p]);
      } else {
        add(prop.states[p], step_generator(sys, field, p, grid.time(p), grid.step));
      }
      continue;
    }
    Eigen::VectorXcd psi = prop.states[p];
    for (int s = 0; s < substeps; ++s) {
      const Eigen::MatrixXcd g = step_generator(sys, field, p, grid.time(p) + s * h, h);
      add(psi, g);
      psi = unitary_from_generator(g) * psi;
    }
  }
  return out;
}

std::int64_t exclusivity_violations(const LevelSystem& sys, const RateSchedule& schedule) {
  std::int64_t count = 0;
  for (const auto& t : schedule.rates)
    for (const auto& [n, m] : sys.edges())
      if (std::min(t(n, m), t(m, n)) != 0.0) ++count;
  return count;
}

FlowBalance flow_balance(const LevelSystem& sys, const ControlField& field,
                         const Propagation& prop, double threshold, double tolerance) {
  const TimeGrid& grid = field.grid();
  if (static_cast<int>(prop.states.size()) != grid.steps + 1)
    throw ConfigError("propagation does not match the field grid");
  const int n_lev = sys.count();
  const double eps = grid.step;
  FlowBalance out;
  for (int p = 0; p < grid.steps; ++p) {
    const double t = grid.time(p);
    const Eigen::VectorXcd mid =
        unitary_from_generator(step_generator(sys, field, p, t, 0.5 * eps)) * prop.states[p];
    Eigen::MatrixXcd g = Eigen::MatrixXcd::Zero(n_lev, n_lev);
    for (const auto& [n, m] : sys.edges()) {
      g(n, m) = hamiltonian_element(sys, field.value(p), n, m, t + 0.5 * eps) * eps;
      g(m, n) = std::conj(g(n, m));
    }
    const Eigen::MatrixXd rates = jump_rates(z_matrix(mid, g, eps));
    for (int n = 0; n < n_lev; ++n) {
      const double d =
          (std::norm(prop.states[p + 1][n]) - std::norm(prop.states[p][n])) / eps;
      if (!(std::abs(d) > threshold)) continue;
      double flow = 0.0;
      for (int m = 0; m < n_lev; ++m)
        if (m != n) flow += rates(n, m) * std::norm(mid[m]) - rates(m, n) * std::norm(mid[n]);
      const double err = std::abs(flow - d) / std::abs(d);
      ++out.checked;
      if (err > tolerance) ++out.over_tolerance;
      out.worst = std::max(out.worst, err);
    }
  }
  return out;
}

namespace {

int draw_initial(RandomStream& rng, const InitialSites& initial) {
  if (const int* site = std::get_if<int>(&initial)) return *site;
  const auto& dist = std::get<std::vector<double>>(initial);
  const double u = rng.uniform();
  double acc = 0.0;
  int last = 0;
  for (std::size_t n = 0; n < dist.size(); ++n) {
    if (dist[n] <= 0.0) continue;
    acc += dist[n];
    last = static_cast<int>(n);
    if (u < acc) return last;
  }
  return last;
}

void check_initial(const InitialSites& initial, int n_lev) {
  if (const int* site = std::get_if<int>(&initial)) {
    if (*site < 0 || *site >= n_lev) throw ConfigError("initial site out of range");
    return;
  }
  const auto& dist = std::get<std::vector<double>>(initial);
  if (static_cast<int>(dist.size()) != n_lev)
    throw ConfigError("initial distribution length must equal the level count");
  double sum = 0.0;
  for (double v : dist) {
    if (v < 0.0 || !std::isfinite(v)) throw ConfigError("initial distribution must be >= 0");
    sum += v;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw ConfigError("initial distribution must sum to 1");
}

}  // namespace

Ensemble sample_ensemble(const RateSchedule& schedule, const EnsembleConfig& cfg) {
  if (cfg.n_traj < 1) throw ConfigError("n_traj must be >= 1");
  if (schedule.rates.empty()) throw ConfigError("empty rate schedule");
  const int n_lev = static_cast<int>(schedule.rates.front().rows());
  check_initial(cfg.initial, n_lev);

  Ensemble out;
  out.grid = schedule.grid;
  out.stats = schedule.stats;
  out.trajectories.resize(cfg.n_traj);
  const double h = schedule.grid.step / schedule.substeps;
  const auto n_sub = static_cast<int>(schedule.rates.size());

  parallel_for(static_cast<std::size_t>(cfg.n_traj), cfg.workers, [&](std::size_t i) {
    RandomStream rng(cfg.seed, i);
    Trajectory traj;
    traj.initial = draw_initial(rng, cfg.initial);
    int site = traj.initial;
    std::vector<int> entered;
    for (int s = 0; s < n_sub; ++s) {
      entered.clear();
      advance_path(rng, site, schedule.rates[s], h, &entered);
      for (int next : entered) {
        traj.events.push_back({s / schedule.substeps, site, next});
        site = next;
      }
    }
    traj.final = site;
    out.trajectories[i] = std::move(traj);
  });
  return out;
}

Ensemble run_ensemble(const LevelSystem& sys, const ControlField& field,
                      const Propagation& prop, const EnsembleConfig& cfg) {
  return sample_ensemble(build_rate_schedule(sys, field, prop, cfg.substeps, cfg.floor), cfg);
}

Ensemble run_ensemble(const LevelSystem& sys, const ControlField& field,
                      const EnsembleConfig& cfg) {
  check_initial(cfg.initial, sys.count());
  QuantumState psi0;
  if (const int* site = std::get_if<int>(&cfg.initial)) {
    psi0 = QuantumState::basis(sys.count(), *site);
  } else {
    const auto& dist = std::get<std::vector<double>>(cfg.initial);
    psi0.amplitudes = Eigen::VectorXcd::Zero(sys.count());
    for (int n = 0; n < sys.count(); ++n) psi0.amplitudes[n] = std::sqrt(dist[n]);
    psi0.amplitudes.normalize();
  }
  return run_ensemble(sys, field, propagate(sys, field, psi0), cfg);
}

}  // namespace beable
