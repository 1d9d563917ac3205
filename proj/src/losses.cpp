#include "m3col/losses.hpp"

#include <cmath>
#include <stdexcept>

namespace m3col {

namespace {

Tape& tape_of(const Tensor& t, const char* op) {
  if (!t.valid()) throw std::invalid_argument(std::string(op) + ": tensor is not on a tape");
  return *t.tape();
}

void check_same_shape(const Tensor& a, const Tensor& b, const char* op) {
  if (a.rows() != b.rows() || a.cols() != b.cols())
    throw std::invalid_argument(std::string(op) + ": shape mismatch (" + std::to_string(a.rows()) +
                                "x" + std::to_string(a.cols()) + " vs " + std::to_string(b.rows()) +
                                "x" + std::to_string(b.cols()) + ")");
}

void check_unit_rows(const Tensor& t, const char* what) {
  for (int i = 0; i < t.rows(); ++i) {
    const double norm = t.value().row(i).norm();
    if (std::abs(norm - 1.0) > 1e-6)
      throw std::invalid_argument(std::string("l_sim: ") + what + " row " + std::to_string(i) +
                                  " is not unit-normalized (norm " + std::to_string(norm) + ")");
  }
}

// Cross-bank log-softmax scores: row i holds log p(j | anchor i) over the
// candidate bank. Inputs must already be normalized.
Tensor alignment_scores(Tape& t, const Tensor& anchors, const Tensor& bank, double tau) {
  return t.log_softmax_rows(t.scale(t.matmul(anchors, t.transpose(bank)), 1.0 / tau));
}

// sum of W (constant) elementwise-times scores.
Tensor weighted_score_sum(Tape& t, const Mat& weights, const Tensor& scores) {
  return t.sum_all(t.mul(t.constant(weights), scores));
}

}  // namespace

Tensor l_sim(const Tensor& anchor, const Tensor& candidates, int m, double tau) {
  Tape& t = tape_of(anchor, "l_sim");
  if (tau <= 0.0) throw std::invalid_argument("l_sim: temperature must be positive");
  if (anchor.rows() != 1 || anchor.cols() != candidates.cols())
    throw std::invalid_argument("l_sim: anchor must be 1x" + std::to_string(candidates.cols()) +
                                ", got " + std::to_string(anchor.rows()) + "x" +
                                std::to_string(anchor.cols()));
  if (m < 0 || m >= candidates.rows())
    throw std::out_of_range("l_sim: target index " + std::to_string(m) + " out of range [0," +
                            std::to_string(candidates.rows()) + ")");
  check_unit_rows(anchor, "anchor");
  check_unit_rows(candidates, "candidate");

  Tensor scores = alignment_scores(t, anchor, candidates, tau);
  Mat w = Mat::Zero(1, candidates.rows());
  w(0, m) = -1.0;
  return weighted_score_sum(t, w, scores);
}

Tensor conventional_contrastive(const Tensor& p1, const Tensor& p2, double tau) {
  Tape& t = tape_of(p1, "conventional_contrastive");
  check_same_shape(p1, p2, "conventional_contrastive");
  const int n = p1.rows();
  if (n < 1) throw std::invalid_argument("conventional_contrastive: empty batch");

  Tensor scores = alignment_scores(t, t.row_l2_normalize(p1), t.row_l2_normalize(p2), tau);
  Mat w = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) w(i, i) = -1.0 / n;
  return weighted_score_sum(t, w, scores);
}

Tensor m3co_pair(const Tensor& p1, const Tensor& p2, const Tensor& p1_mixed,
                 const Tensor& p2_mixed, const MixupPlan& plan, int modality1, int modality2,
                 double tau) {
  Tape& t = tape_of(p1, "m3co_pair");
  check_same_shape(p1, p2, "m3co_pair");
  check_same_shape(p1, p1_mixed, "m3co_pair");
  check_same_shape(p1, p2_mixed, "m3co_pair");
  const int n = p1.rows();
  if (plan.size() != n)
    throw std::invalid_argument("m3co_pair: plan size " + std::to_string(plan.size()) +
                                " does not match batch size " + std::to_string(n));
  if (modality1 < 0 || modality1 >= plan.num_modalities() || modality2 < 0 ||
      modality2 >= plan.num_modalities())
    throw std::invalid_argument("m3co_pair: modality index out of range for plan");

  const auto& lam = plan.lambda;
  const auto& pj = plan.partner[static_cast<size_t>(modality1)];
  const auto& pk = plan.partner[static_cast<size_t>(modality2)];

  Tensor n1 = t.row_l2_normalize(p1);
  Tensor n2 = t.row_l2_normalize(p2);
  Tensor n1m = t.row_l2_normalize(p1_mixed);
  Tensor n2m = t.row_l2_normalize(p2_mixed);

  // Each weight matrix scatters the per-sample coefficients of one directed
  // sum: row = anchor sample, column = target index in the candidate bank.
  Mat wa = Mat::Zero(n, n), wb = Mat::Zero(n, n), wc = Mat::Zero(n, n), wd = Mat::Zero(n, n);
  for (int i = 0; i < n; ++i) {
    const double li = lam[static_cast<size_t>(i)];
    const int j = pj[static_cast<size_t>(i)];
    const int k = pk[static_cast<size_t>(i)];
    // mixed anchors of modality 1 against bank 2, then the reverse direction
    wa(i, i) += -li / n;
    wa(i, j) += -(1.0 - li) / n;
    wb(i, i) += -li / n;
    wb(j, i) += -(1.0 - li) / n;
    // mixed anchors of modality 2 against bank 1, then the reverse direction
    wc(i, i) += -li / n;
    wc(i, k) += -(1.0 - li) / n;
    wd(i, i) += -li / n;
    wd(k, i) += -(1.0 - li) / n;
  }

  Tensor loss1 = t.add(weighted_score_sum(t, wa, alignment_scores(t, n1m, n2, tau)),
                       weighted_score_sum(t, wb, alignment_scores(t, n2, n1m, tau)));
  Tensor loss2 = t.add(weighted_score_sum(t, wc, alignment_scores(t, n2m, n1, tau)),
                       weighted_score_sum(t, wd, alignment_scores(t, n1, n2m, tau)));
  return t.scale(t.add(loss1, loss2), 0.5);
}

Tensor multisclip_pair(const Tensor& p1, const Tensor& p2, double tau) {
  Tape& t = tape_of(p1, "multisclip_pair");
  check_same_shape(p1, p2, "multisclip_pair");
  const int n = p1.rows();
  if (n < 1) throw std::invalid_argument("multisclip_pair: empty batch");

  Tensor n1 = t.row_l2_normalize(p1);
  Tensor n2 = t.row_l2_normalize(p2);

  // Within-modality soft weights (rows sum to 1), themselves differentiable.
  Tensor w1 = t.exp_elem(alignment_scores(t, n1, n1, tau));
  Tensor w2 = t.exp_elem(alignment_scores(t, n2, n2, tau));

  Tensor s12 = alignment_scores(t, n1, n2, tau);  // anchor modality 1, bank 2
  Tensor s21 = alignment_scores(t, n2, n1, tau);  // anchor modality 2, bank 1

  // [i,l] entries: align sample i of the other modality with candidate l, and
  // candidate l's counterpart back with sample i.
  Tensor pair1 = t.add(s21, t.transpose(s12));
  Tensor pair2 = t.add(s12, t.transpose(s21));

  Tensor loss1 = t.sum_all(t.mul(w1, pair1));
  Tensor loss2 = t.sum_all(t.mul(w2, pair2));
  return t.scale(t.add(loss1, loss2), -0.5 / n);
}

Tensor multi_modal_contrastive(const std::vector<Tensor>& embeddings,
                               const std::vector<Tensor>* mixed_embeddings, const MixupPlan* plan,
                               double tau, ContrastivePhase phase) {
  const int m = static_cast<int>(embeddings.size());
  if (m < 2)
    throw std::invalid_argument("multi_modal_contrastive: need at least 2 modalities, got " +
                                std::to_string(m));
  if (phase == ContrastivePhase::m3co) {
    if (mixed_embeddings == nullptr || static_cast<int>(mixed_embeddings->size()) != m)
      throw std::invalid_argument("multi_modal_contrastive: m3co phase requires one mixed "
                                  "embedding bank per modality");
    if (plan == nullptr)
      throw std::invalid_argument("multi_modal_contrastive: m3co phase requires a mixup plan");
  }

  Tape& t = tape_of(embeddings[0], "multi_modal_contrastive");
  Tensor total;
  for (int i = 0; i < m; ++i) {
    for (int j = i + 1; j < m; ++j) {
      Tensor pair =
          phase == ContrastivePhase::m3co
              ? m3co_pair(embeddings[static_cast<size_t>(i)], embeddings[static_cast<size_t>(j)],
                          (*mixed_embeddings)[static_cast<size_t>(i)],
                          (*mixed_embeddings)[static_cast<size_t>(j)], *plan, i, j, tau)
              : multisclip_pair(embeddings[static_cast<size_t>(i)],
                                embeddings[static_cast<size_t>(j)], tau);
      total = total.valid() ? t.add(total, pair) : pair;
    }
  }
  return total;
}

Tensor cross_entropy(const Tensor& logits, const std::vector<int>& labels) {
  Tape& t = tape_of(logits, "cross_entropy");
  const int n = logits.rows();
  const int c = logits.cols();
  if (static_cast<int>(labels.size()) != n)
    throw std::invalid_argument("cross_entropy: " + std::to_string(labels.size()) +
                                " labels for " + std::to_string(n) + " rows");
  Mat w = Mat::Zero(n, c);
  for (int i = 0; i < n; ++i) {
    const int y = labels[static_cast<size_t>(i)];
    if (y < 0 || y >= c)
      throw std::invalid_argument("cross_entropy: label " + std::to_string(y) +
                                  " out of range [0," + std::to_string(c) + ") at sample " +
                                  std::to_string(i));
    w(i, y) = -1.0 / n;
  }
  return weighted_score_sum(t, w, t.log_softmax_rows(logits));
}

Tensor soft_cross_entropy(const Tensor& logits, const Mat& targets) {
  Tape& t = tape_of(logits, "soft_cross_entropy");
  if (targets.rows() != logits.rows() || targets.cols() != logits.cols())
    throw std::invalid_argument("soft_cross_entropy: target shape " +
                                std::to_string(targets.rows()) + "x" +
                                std::to_string(targets.cols()) + " does not match logits");
  const int n = logits.rows();
  for (Eigen::Index i = 0; i < targets.rows(); ++i) {
    if (std::abs(targets.row(i).sum() - 1.0) > 1e-6)
      throw std::invalid_argument("soft_cross_entropy: target row " + std::to_string(i) +
                                  " does not sum to 1");
  }
  Mat w = targets * (-1.0 / n);
  return weighted_score_sum(t, w, t.log_softmax_rows(logits));
}

ContrastivePhase schedule_phase(int epoch, int total_epochs, double fraction) {
  const int cutoff = static_cast<int>(std::ceil(fraction * total_epochs));
  return epoch < cutoff ? ContrastivePhase::m3co : ContrastivePhase::multisclip;
}

LossBreakdown total_objective(const ForwardOutputs& outputs, const std::vector<int>& labels,
                              const MixupPlan* plan, const ContrastiveConfig& config, int epoch,
                              int total_epochs, bool unimodal_supervision) {
  Tape& t = tape_of(outputs.fused_logits, "total_objective");
  const int m = static_cast<int>(outputs.embeddings.size());
  const int num_classes = outputs.fused_logits.cols();

  LossBreakdown bd;
  switch (config.mode) {
    case ContrastiveMode::scheduled:
      bd.phase = schedule_phase(epoch, total_epochs, config.schedule_fraction);
      break;
    case ContrastiveMode::only_m3co:
      bd.phase = ContrastivePhase::m3co;
      break;
    case ContrastiveMode::only_multisclip:
      bd.phase = ContrastivePhase::multisclip;
      break;
    case ContrastiveMode::none:
      bd.phase = schedule_phase(epoch, total_epochs, config.schedule_fraction);
      break;
  }

  Tensor total;
  if (config.mode != ContrastiveMode::none) {
    const std::vector<Tensor>* mixed =
        bd.phase == ContrastivePhase::m3co ? &outputs.mixed_embeddings : nullptr;
    Tensor contrastive =
        multi_modal_contrastive(outputs.embeddings, mixed, plan, config.tau, bd.phase);
    bd.contrastive = contrastive.scalar();
    total = t.scale(contrastive, config.beta);
  }

  const bool mixup_targets = config.mode == ContrastiveMode::none && plan != nullptr;
  bd.ce_uni.assign(static_cast<size_t>(m), 0.0);
  if (unimodal_supervision) {
    for (int i = 0; i < m; ++i) {
      Tensor ce = mixup_targets
                      ? soft_cross_entropy(outputs.unimodal_logits[static_cast<size_t>(i)],
                                           mixed_onehot_targets(labels, *plan, num_classes, i))
                      : cross_entropy(outputs.unimodal_logits[static_cast<size_t>(i)], labels);
      bd.ce_uni[static_cast<size_t>(i)] = ce.scalar();
      total = total.valid() ? t.add(total, ce) : ce;
    }
  }

  Tensor ce_multi =
      mixup_targets
          ? soft_cross_entropy(outputs.fused_logits,
                               mixed_onehot_targets(labels, *plan, num_classes, 0))
          : cross_entropy(outputs.fused_logits, labels);
  bd.ce_multi = ce_multi.scalar();
  total = total.valid() ? t.add(total, ce_multi) : ce_multi;

  bd.total_node = total;
  bd.total = total.scalar();
  return bd;
}

}  // namespace m3col
