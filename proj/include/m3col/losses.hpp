#pragma once

#include "m3col/mixup.hpp"
#include "m3col/tensor.hpp"

#include <vector>

namespace m3col {

enum class ContrastivePhase { m3co, multisclip };
enum class ContrastiveMode { scheduled, only_m3co, only_multisclip, none };

struct ContrastiveConfig {
  double tau = 0.1;
  double beta = 0.1;
  double schedule_fraction = 1.0 / 3.0;
  ContrastiveMode mode = ContrastiveMode::scheduled;
};

/// Everything the objective consumes from one model pass.
struct ForwardOutputs {
  std::vector<Tensor> embeddings;            // one per modality
  std::vector<Tensor> mixed_embeddings;      // empty unless mixtures were requested
  std::vector<Tensor> unimodal_logits;       // one per modality
  Tensor fused_logits;
  std::vector<Tensor> param_leaves;          // aligned with M3colModel::parameters()
};

struct LossBreakdown {
  double contrastive = 0.0;
  std::vector<double> ce_uni;
  double ce_multi = 0.0;
  double total = 0.0;
  ContrastivePhase phase = ContrastivePhase::m3co;
  Tensor total_node;  // scalar on the tape, for backward
};

/// Temperature-scaled softmax alignment of one anchor against a candidate
/// bank, -log p(candidate m | anchor). Anchor (1 x e) and candidate rows must
/// be unit-normalized already.
Tensor l_sim(const Tensor& anchor, const Tensor& candidates, int m, double tau);

/// Diagonal-positive contrastive loss, averaged over anchors. Rows are
/// normalized internally.
Tensor conventional_contrastive(const Tensor& p1, const Tensor& p2, double tau);

/// Bidirectional mixup contrastive loss for one modality pair. The mixed
/// embeddings must have been built with the plan's permutations for
/// modality1 / modality2; all four banks are normalized internally.
Tensor m3co_pair(const Tensor& p1, const Tensor& p2, const Tensor& p1_mixed,
                 const Tensor& p2_mixed, const MixupPlan& plan, int modality1, int modality2,
                 double tau);

/// Bidirectional soft-alignment contrastive loss for one modality pair,
/// weighting cross-modal terms by within-modality similarity softmax.
Tensor multisclip_pair(const Tensor& p1, const Tensor& p2, double tau);

/// Sum of the phase-selected pairwise loss over all unordered modality pairs.
/// In the m3co phase, mixed embeddings and the plan are required.
Tensor multi_modal_contrastive(const std::vector<Tensor>& embeddings,
                               const std::vector<Tensor>* mixed_embeddings, const MixupPlan* plan,
                               double tau, ContrastivePhase phase);

/// Mean negative log-likelihood of the true class.
Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels);

/// Mean cross-entropy against per-row target distributions (rows must sum to
/// 1 within 1e-6).
Tensor soft_cross_entropy(const Tensor& logits, const Mat& targets);

/// m3co for the first ceil(fraction * total_epochs) epochs, then multisclip.
ContrastivePhase schedule_phase(int epoch, int total_epochs, double fraction);

/// Full training objective: beta * contrastive (phase-selected) + per-modality
/// cross-entropies + fused cross-entropy. Mode none drops the contrastive
/// term; if a plan is supplied in that mode, the run is treated as an
/// input-mixup run and all cross-entropy terms use mixed one-hot targets
/// (unimodal heads with their own modality's partners, the fused head with
/// modality 0's).
LossBreakdown total_objective(const ForwardOutputs& outputs, const std::vector<int>& labels,
                              const MixupPlan* plan, const ContrastiveConfig& config, int epoch,
                              int total_epochs, bool unimodal_supervision = true);

}  // namespace m3col
