#pragma once

namespace bold {

/// Numerical tolerances shared by every module.
struct Tolerances {
  /// Allowed drift of a Distribution's sum from 1.
  double validation = 1e-9;
  /// Arithmetic tolerance for identities such as softmax shift invariance.
  double arithmetic = 1e-12;
  /// Mass floor applied before any logarithm.
  double prob_floor = 1e-12;
};

inline constexpr Tolerances kTolerance{};

/// Defaults for the seeded pipeline.
inline constexpr unsigned long long kDefaultSeed = 1;
inline constexpr double kDefaultBudget = 0.5;

}  // namespace bold
