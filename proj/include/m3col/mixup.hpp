#pragma once

#include "m3col/tensor.hpp"

#include <random>
#include <vector>

namespace m3col {

/// Per-step mixing recipe: one mixing coefficient per batch sample (shared by
/// every modality) and one partner permutation per modality.
struct MixupPlan {
  std::vector<double> lambda;
  std::vector<std::vector<int>> partner;
  double alpha = 0.15;

  int size() const { return static_cast<int>(lambda.size()); }
  int num_modalities() const { return static_cast<int>(partner.size()); }
};

/// One draw from Beta(alpha, alpha), via the ratio of two Gamma(alpha) variates.
double sample_beta(double alpha, std::mt19937_64& rng);

/// N lambda draws plus one independent uniform permutation per modality.
/// Fixed points are permitted: a sample may be paired with itself.
MixupPlan make_plan(int n, int num_modalities, double alpha, std::mt19937_64& rng);

/// Convex combination of each row with its partner row, recorded on the
/// features' tape (differentiable into the features).
Tensor make_mixtures(const Tensor& features, const MixupPlan& plan, int modality);

/// Row i = lambda[i]*onehot(labels[i]) + (1-lambda[i])*onehot(labels[partner[i]]).
Mat mixed_onehot_targets(const std::vector<int>& labels, const MixupPlan& plan, int num_classes,
                         int modality);

}  // namespace m3col
