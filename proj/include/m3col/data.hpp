#pragma once

#include "m3col/tensor.hpp"

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

namespace m3col {

/// Aligned per-modality feature matrices plus integer class labels.
struct LabeledBatch {
  std::vector<Mat> modalities;
  std::vector<int> labels;
  std::vector<std::string> modality_names;

  int size() const { return static_cast<int>(labels.size()); }
  int num_modalities() const { return static_cast<int>(modalities.size()); }
  int num_classes() const;
};

struct DatasetSplits {
  LabeledBatch train;
  LabeledBatch test;
};

/// Loads the train/test pair described by a manifest. Feature files are
/// comma-separated numeric text, one sample per row, no header; label files
/// hold one integer per line. Paths are resolved relative to the manifest.
DatasetSplits load_dataset(const std::string& manifest_path);

/// Writes feature/label files plus a manifest consumable by load_dataset.
/// Values are emitted with 17 significant digits, so a round-trip is
/// bit-exact. Returns the manifest path.
std::string write_dataset(const DatasetSplits& splits, const std::string& out_dir);

/// Per-modality column means and standard deviations, computed on training
/// rows only. Columns with std below 1e-12 are recorded as 1.
struct StandardizationStats {
  std::vector<Mat> mean;  // 1 x d_m
  std::vector<Mat> std;   // 1 x d_m
};

StandardizationStats compute_standardization(const LabeledBatch& train);
LabeledBatch apply_standardization(const LabeledBatch& batch, const StandardizationStats& stats);

/// Z-scores apply_to with train-derived stats (or the supplied ones).
std::pair<LabeledBatch, StandardizationStats> standardize(const LabeledBatch& train,
                                                          const LabeledBatch& apply_to,
                                                          const StandardizationStats* stats = nullptr);

/// Latent-factor generator: every class has a latent center, every sample a
/// noisy copy of it, and each modality observes the latent through its own
/// fixed random linear map. With probability shared_prob a sample picks up an
/// extra component from a pool reused across classes, giving samples from
/// different classes shared structure across modalities.
struct SyntheticConfig {
  int classes = 4;
  int modalities = 2;
  std::vector<int> dims = {64, 64};
  int samples_per_class = 200;
  double shared_strength = 1.0;  // scale of class centers and pool components
  double noise = 0.5;            // latent and observation noise level
  double shared_prob = 0.3;      // chance of drawing a pooled shared component
  std::uint64_t seed = 7;
  int latent_dim = 16;
  int pool_size = 8;
};

/// Deterministic given the seed; stratified 70/30 train/test split.
DatasetSplits generate_synthetic(const SyntheticConfig& config);

}  // namespace m3col
