#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace egopose {

/// One analytic-vs-finite-difference comparison over random instances.
/// The error of an instance is max |analytic - numeric| / max(max |numeric|, 1e-8);
/// `max_rel_error` is the worst instance.
struct GradCheckRow {
  std::string name;
  std::string covers;
  int instances = 0;
  double max_rel_error = 0.0;
  double tolerance = 0.0;
  bool passed = false;
};

struct GradCheckOptions {
  std::uint64_t seed = 1;
  int instances = 20;
  /// Test fixture: perturbs the analytic gradient of the named check.
  std::string inject_fault;
};

inline constexpr double kGradTolerance = 1e-4;
inline constexpr double kWeightGradTolerance = 1e-3;

/// Fisheye Jacobian, heatmap sampling, every energy term and both
/// objectives, the decoder pullback and the tiny-VAE weight gradient.
std::vector<GradCheckRow> run_gradcheck(const GradCheckOptions& options = {});

std::vector<std::string> gradcheck_names();

}  // namespace egopose
