#pragma once

#include <cstdint>
#include <map>
#include <string>

#include "invdec/model.hpp"

namespace invdec::model {

/// The small configuration used for gradient checks: C=3, L=16, S=s=4, D=8,
/// 2 heads, one encoder and one decoder layer, H=4.
ModelConfig gradcheck_config();

struct GradcheckReport {
  /// Largest relative error per parameter group (see param_group()).
  std::map<std::string, double> group_error;
  /// Parameter with the largest error in each group.
  std::map<std::string, std::string> worst_param;
  double max_error = 0.0;
};

/// Compares reverse-mode gradients of an MSE loss on a random batch against
/// central differences (step h) for every parameter. Parameters are drawn at
/// unit-ish scale so that no group passes on the absolute floor alone. Runs
/// in eval mode; a learnable λ adds the "lambda" group.
GradcheckReport check_gradients(const ModelConfig& cfg, std::uint64_t seed = 1, double h = 1e-5,
                                double abs_floor = 1e-8, double rel_tol = 1e-4);

}  // namespace invdec::model
