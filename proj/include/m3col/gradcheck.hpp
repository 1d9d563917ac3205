#pragma once

#include "m3col/tensor.hpp"

#include <functional>
#include <vector>

namespace m3col {

/// Builds a scalar loss on the given tape from differentiable leaves carrying
/// the supplied parameter values. Must be deterministic given the parameters
/// (dropout disabled or masks frozen).
using ScalarFn = std::function<Tensor(Tape&, const std::vector<Tensor>&)>;

struct GradCheckReport {
  double max_rel_error = 0.0;
  int worst_param = -1;
  int worst_row = -1;
  int worst_col = -1;
  double analytic = 0.0;
  double numeric = 0.0;
};

/// Central-difference verification of Tape::backward. Relative error per
/// entry is |analytic - numeric| / max(1e-8, |analytic| + |numeric|); the
/// report carries the maximum over all parameter entries. Throws if two
/// evaluations at the base point disagree (non-deterministic function).
GradCheckReport finite_diff_gradcheck(const ScalarFn& f, const std::vector<Mat>& params,
                                      double h = 1e-5);

}  // namespace m3col
