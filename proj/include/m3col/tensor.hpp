#pragma once

#include <Eigen/Core>

#include <cstdint>
#include <deque>
#include <functional>
#include <random>
#include <unordered_map>
#include <vector>

namespace m3col {

// Dense double-precision matrix, row-major storage.
using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

class Tape;

/// Handle to a value recorded on a Tape. The value itself is owned by the
/// tape so the backward pass can revisit saved forward context without
/// copies; handles stay valid for the lifetime of the tape.
class Tensor {
 public:
  Tensor() = default;

  bool valid() const { return tape_ != nullptr; }
  int rows() const;
  int cols() const;
  const Mat& value() const;
  /// Value of a 1x1 tensor.
  double scalar() const;

  int node() const { return node_; }
  Tape* tape() const { return tape_; }

 private:
  friend class Tape;
  Tensor(Tape* tape, int node) : tape_(tape), node_(node) {}

  Tape* tape_ = nullptr;
  int node_ = -1;
};

/// Gradients keyed by node, as produced by Tape::backward. Every
/// differentiable leaf has an entry (zero when the loss does not reach it).
class GradientMap {
 public:
  const Mat& at(const Tensor& t) const;
  bool contains(const Tensor& t) const;

 private:
  friend class Tape;
  std::unordered_map<int, Mat> grads_;
};

/// Computation record: ops append nodes in execution order, so the node list
/// is already topologically sorted and backward is a single reverse sweep.
/// A tape and its tensors are confined to one thread; independent tapes may
/// run concurrently.
class Tape {
 public:
  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  /// Differentiable leaf (model parameter or input being differentiated).
  Tensor param(Mat value);
  /// Non-differentiable leaf.
  Tensor constant(Mat value);

  Tensor matmul(const Tensor& a, const Tensor& b);
  Tensor add(const Tensor& a, const Tensor& b);
  Tensor sub(const Tensor& a, const Tensor& b);
  /// Elementwise product.
  Tensor mul(const Tensor& a, const Tensor& b);
  Tensor scale(const Tensor& a, double s);
  /// a[N x d] + row[1 x d], broadcast over rows (bias add).
  Tensor add_row_broadcast(const Tensor& a, const Tensor& row);
  Tensor relu(const Tensor& a);
  /// Each row divided by its Euclidean norm. Rows with norm below 1e-12
  /// raise a degeneracy error naming the row.
  Tensor row_l2_normalize(const Tensor& a);
  /// Per-row log-softmax with max-subtraction.
  Tensor log_softmax_rows(const Tensor& a);
  Tensor exp_elem(const Tensor& a);
  Tensor transpose(const Tensor& a);
  Tensor concat_columns(const std::vector<Tensor>& parts);
  /// Inverted dropout: training mode zeroes entries with probability p and
  /// scales survivors by 1/(1-p); eval mode is the exact identity.
  Tensor dropout(const Tensor& a, double p, bool training, std::mt19937_64& rng);
  /// Row i of the result is lambda[i]*a[i] + (1-lambda[i])*a[partner[i]].
  Tensor mix_rows(const Tensor& a, const std::vector<double>& lambda,
                  const std::vector<int>& partner);
  /// Sum of all entries, as a 1x1 tensor.
  Tensor sum_all(const Tensor& a);

  /// Reverse sweep from a scalar loss. Visits each recorded op at most once,
  /// in reverse order of recording.
  GradientMap backward(const Tensor& loss) const;

  int size() const { return static_cast<int>(nodes_.size()); }
  int leaf_count() const { return leaf_count_; }

 private:
  friend class Tensor;

  struct Node {
    Mat value;
    bool requires_grad = false;
    bool leaf = false;
    // Accumulates parent gradients given this node's gradient.
    std::function<void(const Mat& g, std::vector<Mat>& grads)> backward;
  };

  const Node& node(int id) const { return nodes_[id]; }
  Tensor emplace(Mat value, bool requires_grad, bool leaf);
  void check_mine(const Tensor& t, const char* op) const;
  void accumulate(std::vector<Mat>& grads, int target, const Mat& contribution) const;

  std::deque<Node> nodes_;
  int leaf_count_ = 0;
};

}  // namespace m3col
