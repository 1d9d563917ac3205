#include "m3col/mixup.hpp"

#include <algorithm>
#include <numeric>
#include <stdexcept>

namespace m3col {

double sample_beta(double alpha, std::mt19937_64& rng) {
  if (!(alpha > 0.0))
    throw std::invalid_argument("sample_beta: alpha must be positive, got " + std::to_string(alpha));
  std::gamma_distribution<double> gamma(alpha, 1.0);
  const double g1 = gamma(rng);
  const double g2 = gamma(rng);
  const double sum = g1 + g2;
  if (sum == 0.0) return 0.5;  // both draws underflowed
  return g1 / sum;
}

MixupPlan make_plan(int n, int num_modalities, double alpha, std::mt19937_64& rng) {
  if (n < 1) throw std::invalid_argument("make_plan: empty batch");
  if (num_modalities < 1) throw std::invalid_argument("make_plan: need at least one modality");

  MixupPlan plan;
  plan.alpha = alpha;
  plan.lambda.resize(static_cast<size_t>(n));
  for (double& l : plan.lambda) l = sample_beta(alpha, rng);

  plan.partner.resize(static_cast<size_t>(num_modalities));
  for (auto& perm : plan.partner) {
    perm.resize(static_cast<size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
  }
  return plan;
}

Tensor make_mixtures(const Tensor& features, const MixupPlan& plan, int modality) {
  if (modality < 0 || modality >= plan.num_modalities())
    throw std::invalid_argument("make_mixtures: modality index " + std::to_string(modality) +
                                " out of range for plan with " +
                                std::to_string(plan.num_modalities()) + " modalities");
  if (features.rows() != plan.size())
    throw std::invalid_argument("make_mixtures: feature rows " + std::to_string(features.rows()) +
                                " do not match plan size " + std::to_string(plan.size()));
  return features.tape()->mix_rows(features, plan.lambda, plan.partner[static_cast<size_t>(modality)]);
}

Mat mixed_onehot_targets(const std::vector<int>& labels, const MixupPlan& plan, int num_classes,
                         int modality) {
  if (modality < 0 || modality >= plan.num_modalities())
    throw std::invalid_argument("mixed_onehot_targets: modality index out of range");
  if (static_cast<int>(labels.size()) != plan.size())
    throw std::invalid_argument("mixed_onehot_targets: label count does not match plan size");
  const auto& perm = plan.partner[static_cast<size_t>(modality)];

  Mat targets = Mat::Zero(plan.size(), num_classes);
  for (int i = 0; i < plan.size(); ++i) {
    const int yi = labels[static_cast<size_t>(i)];
    const int yj = labels[static_cast<size_t>(perm[static_cast<size_t>(i)])];
    if (yi < 0 || yi >= num_classes || yj < 0 || yj >= num_classes)
      throw std::invalid_argument("mixed_onehot_targets: label out of range [0," +
                                  std::to_string(num_classes) + ") at sample " + std::to_string(i));
    targets(i, yi) += plan.lambda[static_cast<size_t>(i)];
    targets(i, yj) += 1.0 - plan.lambda[static_cast<size_t>(i)];
  }
  return targets;
}

}  // namespace m3col
