#pragma once

#include <optional>
#include <utility>
#include <vector>

#include <Eigen/Dense>

namespace beable {

/// A finite-level system: level frequencies omega_n (fs^-1) and a real
/// symmetric dipole matrix mu_nm (1e-30 C*m) with zero diagonal.
class LevelSystem {
 public:
  LevelSystem(std::vector<double> omega, Eigen::MatrixXd mu);

  int count() const { return static_cast<int>(omega_.size()); }
  const std::vector<double>& omega() const { return omega_; }
  const Eigen::MatrixXd& mu() const { return mu_; }

  /// omega_n - omega_m.
  double transition_frequency(int n, int m) const;
  bool coupled(int n, int m) const;

  /// Coupled pairs (n, m) with n < m.
  const std::vector<std::pair<int, int>>& edges() const { return edges_; }

  /// Minimum number of jumps from `from` to `to` along nonzero dipoles.
  std::optional<int> shortest_jumps(int from, int to) const;
  bool connected(int from, int to) const { return shortest_jumps(from, to).has_value(); }

  void check_site(int n) const;

 private:
  std::vector<double> omega_;
  Eigen::MatrixXd mu_;
  std::vector<std::pair<int, int>> edges_;
};

/// Initial and target levels of a population-transfer problem.
struct Transfer {
  int initial = 0;
  int target = 0;
};

/// Throws ConfigError unless both sites exist and are connected.
void validate_transfer(const LevelSystem& sys, const Transfer& transfer);

/// Seven-level example: couplings 0-1, 0-2, 1-3, 2-3, 3-4, 3-5, 4-6, 5-6,
/// omega_4 = omega_5 and |omega_35 - omega_56| = 0.12 fs^-1. Other values
/// are illustrative.
LevelSystem seven_level_example();
inline constexpr Transfer kSevenLevelTransfer{0, 6};

}  // namespace beable
