#pragma once

// Internal unit system: hbar = 1, energies and frequencies in fs^-1,
// time in fs, fields in V/Angstrom, dipoles in 1e-30 C*m.

namespace beable::units {

inline constexpr double kHbarJouleSecond = 1.054571817e-34;

/// mu*E/hbar in fs^-1 for mu = 1e-30 C*m and E = 1 V/Angstrom (1e10 V/m).
inline constexpr double kCoupling = 1e-30 * 1e10 / kHbarJouleSecond * 1e-15;

}  // namespace beable::units
