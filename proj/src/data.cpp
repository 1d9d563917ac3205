#include "m3col/data.hpp"

#include <json.hpp>

#include <algorithm>
#include <charconv>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <random>
#include <stdexcept>

namespace m3col {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

[[noreturn]] void ingest_error(const std::string& file, int line, const std::string& what) {
  throw std::runtime_error("ingestion error: " + file + ":" + std::to_string(line) + ": " + what);
}

std::vector<std::vector<double>> read_csv_rows(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingestion error: cannot open " + path.string());
  std::vector<std::vector<double>> rows;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = line.data() + line.size();
    while (p < end) {
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      double v = 0.0;
      auto [next, ec] = std::from_chars(p, end, v);
      if (ec != std::errc())
        ingest_error(path.string(), lineno, "non-numeric cell starting at '" +
                                                std::string(p, std::min<size_t>(8, end - p)) + "'");
      row.push_back(v);
      p = next;
      while (p < end && (*p == ' ' || *p == '\t')) ++p;
      if (p < end) {
        if (*p != ',') ingest_error(path.string(), lineno, "expected ',' separator");
        ++p;
      }
    }
    if (row.empty()) ingest_error(path.string(), lineno, "empty row");
    rows.push_back(std::move(row));
  }
  return rows;
}

Mat read_feature_file(const fs::path& path) {
  auto rows = read_csv_rows(path);
  if (rows.empty()) throw std::runtime_error("ingestion error: " + path.string() + " has no rows");
  const size_t width = rows.front().size();
  Mat m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(width));
  for (size_t i = 0; i < rows.size(); ++i) {
    if (rows[i].size() != width)
      ingest_error(path.string(), static_cast<int>(i) + 1,
                   "row has " + std::to_string(rows[i].size()) + " cells, expected " +
                       std::to_string(width));
    for (size_t j = 0; j < width; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
  }
  return m;
}

std::vector<int> read_label_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("ingestion error: cannot open " + path.string());
  std::vector<int> labels;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    int v = 0;
    auto [next, ec] = std::from_chars(line.data(), line.data() + line.size(), v);
    if (ec != std::errc() || next != line.data() + line.size())
      ingest_error(path.string(), lineno, "expected one integer, got '" + line + "'");
    labels.push_back(v);
  }
  if (labels.empty()) throw std::runtime_error("ingestion error: " + path.string() + " is empty");
  return labels;
}

LabeledBatch load_split(const json& split, const std::vector<std::string>& names,
                        const fs::path& base) {
  LabeledBatch batch;
  batch.modality_names = names;
  for (const auto& name : names) {
    const auto& files = split.at("features");
    if (!files.contains(name))
      throw std::runtime_error("ingestion error: manifest lists no feature file for modality '" +
                               name + "'");
    batch.modalities.push_back(read_feature_file(base / files.at(name).get<std::string>()));
  }
  batch.labels = read_label_file(base / split.at("labels").get<std::string>());

  const int n = batch.size();
  for (size_t m = 0; m < batch.modalities.size(); ++m) {
    if (batch.modalities[m].rows() != n)
      throw std::runtime_error("ingestion error: modality '" + names[m] + "' has " +
                               std::to_string(batch.modalities[m].rows()) + " rows but " +
                               std::to_string(n) + " labels");
  }
  return batch;
}

void write_csv(const fs::path& path, const Mat& m) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  char buf[64];
  for (Eigen::Index i = 0; i < m.rows(); ++i) {
    for (Eigen::Index j = 0; j < m.cols(); ++j) {
      std::snprintf(buf, sizeof(buf), "%.17g", m(i, j));
      out << buf;
      if (j + 1 < m.cols()) out << ',';
    }
    out << '\n';
  }
}

void write_labels(const fs::path& path, const std::vector<int>& labels) {
  std::ofstream out(path);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  for (int l : labels) out << l << '\n';
}

}  // namespace

int LabeledBatch::num_classes() const {
  int c = 0;
  for (int l : labels) c = std::max(c, l + 1);
  return c;
}

DatasetSplits load_dataset(const std::string& manifest_path) {
  std::ifstream in(manifest_path);
  if (!in) throw std::runtime_error("ingestion error: cannot open manifest " + manifest_path);
  json manifest;
  try {
    in >> manifest;
  } catch (const json::exception& e) {
    throw std::runtime_error("ingestion error: manifest " + manifest_path + ": " + e.what());
  }
  const fs::path base = fs::path(manifest_path).parent_path();
  const auto names = manifest.at("modalities").get<std::vector<std::string>>();
  if (names.empty()) throw std::runtime_error("ingestion error: manifest lists no modalities");

  DatasetSplits splits;
  splits.train = load_split(manifest.at("train"), names, base);
  splits.test = load_split(manifest.at("test"), names, base);
  for (int m = 0; m < splits.train.num_modalities(); ++m) {
    if (splits.train.modalities[m].cols() != splits.test.modalities[m].cols())
      throw std::runtime_error("ingestion error: modality '" + names[m] +
                               "' width differs between train and test");
  }
  return splits;
}

std::string write_dataset(const DatasetSplits& splits, const std::string& out_dir) {
  fs::create_directories(out_dir);
  const fs::path base(out_dir);
  json manifest;
  manifest["modalities"] = splits.train.modality_names;
  for (const auto& [split_name, batch] :
       {std::pair<std::string, const LabeledBatch*>{"train", &splits.train},
        std::pair<std::string, const LabeledBatch*>{"test", &splits.test}}) {
    json files;
    for (int m = 0; m < batch->num_modalities(); ++m) {
      const std::string fname = split_name + "_" + batch->modality_names[m] + ".csv";
      write_csv(base / fname, batch->modalities[m]);
      files[batch->modality_names[m]] = fname;
    }
    const std::string lname = split_name + "_labels.csv";
    write_labels(base / lname, batch->labels);
    manifest[split_name] = {{"features", files}, {"labels", lname}};
  }
  const fs::path mpath = base / "manifest.json";
  std::ofstream out(mpath);
  out << manifest.dump(2) << '\n';
  return mpath.string();
}

StandardizationStats compute_standardization(const LabeledBatch& train) {
  StandardizationStats stats;
  for (const Mat& x : train.modalities) {
    const double n = static_cast<double>(x.rows());
    Mat mean = x.colwise().sum() / n;
    Mat var = (x.rowwise() - mean.row(0)).array().square().colwise().sum() / n;
    Mat sd = var.array().sqrt();
    for (Eigen::Index j = 0; j < sd.cols(); ++j)
      if (sd(0, j) < 1e-12) sd(0, j) = 1.0;
    stats.mean.push_back(std::move(mean));
    stats.std.push_back(std::move(sd));
  }
  return stats;
}

LabeledBatch apply_standardization(const LabeledBatch& batch, const StandardizationStats& stats) {
  if (stats.mean.size() != batch.modalities.size())
    throw std::invalid_argument("apply_standardization: stats cover " +
                                std::to_string(stats.mean.size()) + " modalities, batch has " +
                                std::to_string(batch.modalities.size()));
  LabeledBatch out = batch;
  for (size_t m = 0; m < out.modalities.size(); ++m) {
    if (stats.mean[m].cols() != out.modalities[m].cols())
      throw std::invalid_argument("apply_standardization: width mismatch on modality " +
                                  std::to_string(m));
    out.modalities[m] = (out.modalities[m].rowwise() - stats.mean[m].row(0)).array().rowwise() /
                        stats.std[m].row(0).array();
  }
  return out;
}

std::pair<LabeledBatch, StandardizationStats> standardize(const LabeledBatch& train,
                                                          const LabeledBatch& apply_to,
                                                          const StandardizationStats* stats) {
  StandardizationStats s = stats ? *stats : compute_standardization(train);
  return {apply_standardization(apply_to, s), s};
}

DatasetSplits generate_synthetic(const SyntheticConfig& config) {
  if (config.classes < 1 || config.modalities < 1 || config.samples_per_class < 1 ||
      config.latent_dim < 1 || config.pool_size < 1)
    throw std::invalid_argument("generate_synthetic: counts must be positive");
  if (static_cast<int>(config.dims.size()) != config.modalities)
    throw std::invalid_argument("generate_synthetic: need one dim per modality");
  if (config.noise < 0 || config.shared_strength < 0 || config.shared_prob < 0 ||
      config.shared_prob > 1)
    throw std::invalid_argument("generate_synthetic: invalid noise/strength/probability");

  std::mt19937_64 rng(config.seed);
  std::normal_distribution<double> normal(0.0, 1.0);
  std::uniform_real_distribution<double> unif(0.0, 1.0);

  const int L = config.latent_dim;
  const double map_scale = 1.0 / std::sqrt(static_cast<double>(L));

  std::vector<Mat> maps;  // fixed random observation map per modality
  for (int m = 0; m < config.modalities; ++m) {
    Mat a(config.dims[static_cast<size_t>(m)], L);
    for (Eigen::Index i = 0; i < a.rows(); ++i)
      for (Eigen::Index j = 0; j < a.cols(); ++j) a(i, j) = map_scale * normal(rng);
    maps.push_back(std::move(a));
  }

  Mat centers(config.classes, L);
  for (Eigen::Index i = 0; i < centers.rows(); ++i)
    for (Eigen::Index j = 0; j < centers.cols(); ++j)
      centers(i, j) = config.shared_strength * normal(rng);

  Mat pool(config.pool_size, L);
  for (Eigen::Index i = 0; i < pool.rows(); ++i)
    for (Eigen::Index j = 0; j < pool.cols(); ++j)
      pool(i, j) = config.shared_strength * normal(rng);

  const int total = config.classes * config.samples_per_class;
  std::vector<Mat> features;
  for (int m = 0; m < config.modalities; ++m)
    features.emplace_back(total, config.dims[static_cast<size_t>(m)]);
  std::vector<int> labels(static_cast<size_t>(total));

  std::uniform_int_distribution<int> pool_pick(0, config.pool_size - 1);
  int row = 0;
  for (int c = 0; c < config.classes; ++c) {
    for (int s = 0; s < config.samples_per_class; ++s, ++row) {
      Eigen::VectorXd u = centers.row(c).transpose();
      for (int j = 0; j < L; ++j) u(j) += config.noise * normal(rng);
      if (unif(rng) < config.shared_prob) u += pool.row(pool_pick(rng)).transpose();
      for (int m = 0; m < config.modalities; ++m) {
        Eigen::VectorXd x = maps[static_cast<size_t>(m)] * u;
        for (Eigen::Index j = 0; j < x.size(); ++j) x(j) += config.noise * normal(rng);
        features[static_cast<size_t>(m)].row(row) = x.transpose();
      }
      labels[static_cast<size_t>(row)] = c;
    }
  }

  // Stratified split: the first ~70% of each class block goes to train.
  DatasetSplits splits;
  for (int m = 0; m < config.modalities; ++m) {
    splits.train.modality_names.push_back("mod" + std::to_string(m));
    splits.test.modality_names.push_back("mod" + std::to_string(m));
  }
  const int train_per_class =
      static_cast<int>(std::lround(0.7 * static_cast<double>(config.samples_per_class)));
  const int n_train = config.classes * train_per_class;
  const int n_test = total - n_train;
  for (int m = 0; m < config.modalities; ++m) {
    splits.train.modalities.emplace_back(n_train, config.dims[static_cast<size_t>(m)]);
    splits.test.modalities.emplace_back(n_test, config.dims[static_cast<size_t>(m)]);
  }
  splits.train.labels.reserve(static_cast<size_t>(n_train));
  splits.test.labels.reserve(static_cast<size_t>(n_test));

  int tr = 0, te = 0;
  for (int c = 0; c < config.classes; ++c) {
    for (int s = 0; s < config.samples_per_class; ++s) {
      const int src = c * config.samples_per_class + s;
      if (s < train_per_class) {
        for (int m = 0; m < config.modalities; ++m)
          splits.train.modalities[static_cast<size_t>(m)].row(tr) =
              features[static_cast<size_t>(m)].row(src);
        splits.train.labels.push_back(c);
        ++tr;
      } else {
        for (int m = 0; m < config.modalities; ++m)
          splits.test.modalities[static_cast<size_t>(m)].row(te) =
              features[static_cast<size_t>(m)].row(src);
        splits.test.labels.push_back(c);
        ++te;
      }
    }
  }
  return splits;
}

}  // namespace m3col
