#include "beable/level_system.hpp"

#include <cmath>
#include <deque>
#include <string>

#include "beable/errors.hpp"

namespace beable {

LevelSystem::LevelSystem(std::vector<double> omega, Eigen::MatrixXd mu)
    : omega_(std::move(omega)), mu_(std::move(mu)) {
  const int n = count();
  if (n < 2) throw ConfigError("level system needs at least 2 levels");
  if (mu_.rows() != n || mu_.cols() != n)
    throw ConfigError("dipole matrix must be " + std::to_string(n) + "x" + std::to_string(n));
  for (int i = 0; i < n; ++i) {
    if (!std::isfinite(omega_[i])) throw ConfigError("level frequencies must be finite");
    if (mu_(i, i) != 0.0) throw ConfigError("dipole matrix must have a zero diagonal");
    for (int j = 0; j < n; ++j) {
      if (!std::isfinite(mu_(i, j))) throw ConfigError("dipole matrix must be finite");
      if (mu_(i, j) != mu_(j, i)) throw ConfigError("dipole matrix must be symmetric");
      if (i < j && mu_(i, j) != 0.0) edges_.emplace_back(i, j);
    }
  }
}

double LevelSystem::transition_frequency(int n, int m) const {
  check_site(n);
  check_site(m);
  return omega_[n] - omega_[m];
}

bool LevelSystem::coupled(int n, int m) const {
  check_site(n);
  check_site(m);
  return mu_(n, m) != 0.0;
}

void LevelSystem::check_site(int n) const {
  if (n < 0 || n >= count())
    throw std::out_of_range("site " + std::to_string(n) + " outside 0.." +
                            std::to_string(count() - 1));
}

std::optional<int> LevelSystem::shortest_jumps(int from, int to) const {
  check_site(from);
  check_site(to);
  std::vector<int> dist(count(), -1);
  std::deque<int> queue{from};
  dist[from] = 0;
  while (!queue.empty()) {
    const int m = queue.front();
    queue.pop_front();
    if (m == to) return dist[m];
    for (int n = 0; n < count(); ++n) {
      if (mu_(n, m) != 0.0 && dist[n] < 0) {
        dist[n] = dist[m] + 1;
        queue.push_back(n);
      }
    }
  }
  return std::nullopt;
}

void validate_transfer(const LevelSystem& sys, const Transfer& transfer) {
  if (transfer.initial < 0 || transfer.initial >= sys.count() || transfer.target < 0 ||
      transfer.target >= sys.count())
    throw ConfigError("initial/target site outside the level system");
  if (!sys.connected(transfer.initial, transfer.target))
    throw ConfigError("target site is not reachable from the initial site");
}

LevelSystem seven_level_example() {
  // omega_1 = omega_2 and omega_4 = omega_5; omega_35 = -0.70, omega_56 = -0.82.
  std::vector<double> omega{0.0, 2.30, 2.30, 3.80, 4.50, 4.50, 5.32};
  Eigen::MatrixXd mu = Eigen::MatrixXd::Zero(7, 7);
  auto link = [&mu](int a, int b, double value) { mu(a, b) = mu(b, a) = value; };
  link(0, 1, 3.0);
  link(0, 2, 3.4);
  link(1, 3, 3.0);
  link(2, 3, 3.2);
  link(3, 4, 2.8);
  link(3, 5, 3.2);
  link(4, 6, 2.8);
  link(5, 6, 3.0);
  return LevelSystem(std::move(omega), std::move(mu));
}

}  // namespace beable
