#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace pxd {

struct GradcheckStage {
  std::string name;
  double error = 0.0;      // max relative error (absolute for the adjoint identity)
  double threshold = 0.0;
  bool pass = false;
};

struct GradcheckOptions {
  int size = 4;  // grid is size×size, at most 8
  int classes = 3;
  std::uint64_t seed = 0;
  bool inject_sign_error = false;  // negates the analytic pipeline gradient
};

struct GradcheckReport {
  std::vector<GradcheckStage> stages;
  bool pass = false;
};

// Central finite differences against every analytic derivative in the
// pipeline: generator backprop (softmax and Gumbel modes), augmentation vjp,
// FFT loss, and the full delta-oracle step with all draws frozen.
GradcheckReport run_gradcheck(const GradcheckOptions& options);

// max_i |a_i - f_i| / max(|a_i|, |f_i|, floor)
// max_i |a_i - f_i| / max(|a_i|, |f_i|, rel_floor * max_j |f_j|)
double max_relative_error(const std::vector<double>& analytic, const std::vector<double>& numeric, double rel_floor);

}  // namespace pxd
