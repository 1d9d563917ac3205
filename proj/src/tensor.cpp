#include "m3col/tensor.hpp"

#include <cmath>
#include <sstream>
#include <stdexcept>

namespace m3col {

namespace {

constexpr double kNormEps = 1e-12;

std::string shape_str(const Mat& m) {
  std::ostringstream os;
  os << m.rows() << "x" << m.cols();
  return os.str();
}

Mat& ensure(std::vector<Mat>& grads, int id, Eigen::Index rows, Eigen::Index cols) {
  Mat& g = grads[id];
  if (g.size() == 0) g.setZero(rows, cols);
  return g;
}

}  // namespace

int Tensor::rows() const { return static_cast<int>(value().rows()); }
int Tensor::cols() const { return static_cast<int>(value().cols()); }

const Mat& Tensor::value() const {
  if (!valid()) throw std::logic_error("Tensor: access to an unbound handle");
  return tape_->node(node_).value;
}

double Tensor::scalar() const {
  const Mat& v = value();
  if (v.rows() != 1 || v.cols() != 1)
    throw std::invalid_argument("Tensor::scalar: tensor is " + shape_str(v) + ", expected 1x1");
  return v(0, 0);
}

const Mat& GradientMap::at(const Tensor& t) const {
  auto it = grads_.find(t.node());
  if (it == grads_.end())
    throw std::out_of_range("GradientMap: no gradient recorded for node " + std::to_string(t.node()));
  return it->second;
}

bool GradientMap::contains(const Tensor& t) const { return grads_.count(t.node()) > 0; }

Tensor Tape::emplace(Mat value, bool requires_grad, bool leaf) {
  Node n;
  n.value = std::move(value);
  n.requires_grad = requires_grad;
  n.leaf = leaf;
  nodes_.push_back(std::move(n));
  if (leaf) ++leaf_count_;
  return Tensor(this, static_cast<int>(nodes_.size()) - 1);
}

void Tape::check_mine(const Tensor& t, const char* op) const {
  if (!t.valid() || t.tape() != this)
    throw std::invalid_argument(std::string(op) + ": tensor is not bound to this tape");
}

Tensor Tape::param(Mat value) { return emplace(std::move(value), true, true); }

Tensor Tape::constant(Mat value) { return emplace(std::move(value), false, true); }

Tensor Tape::matmul(const Tensor& a, const Tensor& b) {
  check_mine(a, "matmul");
  check_mine(b, "matmul");
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.cols() != B.rows())
    throw std::invalid_argument("matmul: inner dimensions do not match (" + shape_str(A) +
                                " vs " + shape_str(B) + ")");
  bool ga = nodes_[a.node()].requires_grad;
  bool gb = nodes_[b.node()].requires_grad;
  Tensor out = emplace(A * B, ga || gb, false);
  if (ga || gb) {
    int pa = a.node(), pb = b.node();
    nodes_[out.node()].backward = [this, pa, pb, ga, gb](const Mat& g, std::vector<Mat>& grads) {
      const Mat& A = nodes_[pa].value;
      const Mat& B = nodes_[pb].value;
      if (ga) ensure(grads, pa, A.rows(), A.cols()).noalias() += g * B.transpose();
      if (gb) ensure(grads, pb, B.rows(), B.cols()).noalias() += A.transpose() * g;
    };
  }
  return out;
}

Tensor Tape::add(const Tensor& a, const Tensor& b) {
  check_mine(a, "add");
  check_mine(b, "add");
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("add: shape mismatch (" + shape_str(A) + " vs " + shape_str(B) + ")");
  bool ga = nodes_[a.node()].requires_grad;
  bool gb = nodes_[b.node()].requires_grad;
  Tensor out = emplace(A + B, ga || gb, false);
  if (ga || gb) {
    int pa = a.node(), pb = b.node();
    nodes_[out.node()].backward = [this, pa, pb, ga, gb](const Mat& g, std::vector<Mat>& grads) {
      if (ga) ensure(grads, pa, g.rows(), g.cols()) += g;
      if (gb) ensure(grads, pb, g.rows(), g.cols()) += g;
    };
  }
  return out;
}

Tensor Tape::sub(const Tensor& a, const Tensor& b) {
  check_mine(a, "sub");
  check_mine(b, "sub");
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("sub: shape mismatch (" + shape_str(A) + " vs " + shape_str(B) + ")");
  bool ga = nodes_[a.node()].requires_grad;
  bool gb = nodes_[b.node()].requires_grad;
  Tensor out = emplace(A - B, ga || gb, false);
  if (ga || gb) {
    int pa = a.node(), pb = b.node();
    nodes_[out.node()].backward = [this, pa, pb, ga, gb](const Mat& g, std::vector<Mat>& grads) {
      if (ga) ensure(grads, pa, g.rows(), g.cols()) += g;
      if (gb) ensure(grads, pb, g.rows(), g.cols()) -= g;
    };
  }
  return out;
}

Tensor Tape::mul(const Tensor& a, const Tensor& b) {
  check_mine(a, "mul");
  check_mine(b, "mul");
  const Mat& A = a.value();
  const Mat& B = b.value();
  if (A.rows() != B.rows() || A.cols() != B.cols())
    throw std::invalid_argument("mul: shape mismatch (" + shape_str(A) + " vs " + shape_str(B) + ")");
  bool ga = nodes_[a.node()].requires_grad;
  bool gb = nodes_[b.node()].requires_grad;
  Tensor out = emplace(A.cwiseProduct(B), ga || gb, false);
  if (ga || gb) {
    int pa = a.node(), pb = b.node();
    nodes_[out.node()].backward = [this, pa, pb, ga, gb](const Mat& g, std::vector<Mat>& grads) {
      if (ga) ensure(grads, pa, g.rows(), g.cols()) += g.cwiseProduct(nodes_[pb].value);
      if (gb) ensure(grads, pb, g.rows(), g.cols()) += g.cwiseProduct(nodes_[pa].value);
    };
  }
  return out;
}

Tensor Tape::scale(const Tensor& a, double s) {
  check_mine(a, "scale");
  bool ga = nodes_[a.node()].requires_grad;
  Tensor out = emplace(a.value() * s, ga, false);
  if (ga) {
    int pa = a.node();
    nodes_[out.node()].backward = [pa, s](const Mat& g, std::vector<Mat>& grads) {
      ensure(grads, pa, g.rows(), g.cols()) += s * g;
    };
  }
  return out;
}

Tensor Tape::add_row_broadcast(const Tensor& a, const Tensor& row) {
  check_mine(a, "add_row_broadcast");
  check_mine(row, "add_row_broadcast");
  const Mat& A = a.value();
  const Mat& R = row.value();
  if (R.rows() != 1 || R.cols() != A.cols())
    throw std::invalid_argument("add_row_broadcast: shape mismatch (" + shape_str(A) + " vs " +
                                shape_str(R) + ")");
  bool ga = nodes_[a.node()].requires_grad;
  bool gr = nodes_[row.node()].requires_grad;
  Mat out = A;
  out.rowwise() += R.row(0);
  Tensor t = emplace(std::move(out), ga || gr, false);
  if (ga || gr) {
    int pa = a.node(), pr = row.node();
    nodes_[t.node()].backward = [pa, pr, ga, gr](const Mat& g, std::vector<Mat>& grads) {
      if (ga) ensure(grads, pa, g.rows(), g.cols()) += g;
      if (gr) ensure(grads, pr, 1, g.cols()) += g.colwise().sum();
    };
  }
  return t;
}

Tensor Tape::relu(const Tensor& a) {
  check_mine(a, "relu");
  bool ga = nodes_[a.node()].requires_grad;
  Tensor out = emplace(a.value().cwiseMax(0.0), ga, false);
  if (ga) {
    int pa = a.node();
    nodes_[out.node()].backward = [this, pa](const Mat& g, std::vector<Mat>& grads) {
      // subgradient at 0 is 0
      const Mat& x = nodes_[pa].value;
      ensure(grads, pa, g.rows(), g.cols()).array() += g.array() * (x.array() > 0.0).cast<double>();
    };
  }
  return out;
}

Tensor Tape::row_l2_normalize(const Tensor& a) {
  check_mine(a, "row_l2_normalize");
  const Mat& A = a.value();
  Eigen::VectorXd norms = A.rowwise().norm();
  for (Eigen::Index i = 0; i < norms.size(); ++i) {
    if (norms(i) < kNormEps)
      throw std::domain_error("row_l2_normalize: row " + std::to_string(i) +
                              " has norm below 1e-12 (degenerate embedding)");
  }
  Mat out = norms.cwiseInverse().asDiagonal() * A;
  bool ga = nodes_[a.node()].requires_grad;
  Tensor t = emplace(std::move(out), ga, false);
  if (ga) {
    int pa = a.node();
    int self = t.node();
    nodes_[self].backward = [this, pa, self, norms](const Mat& g, std::vector<Mat>& grads) {
      const Mat& y = nodes_[self].value;
      Eigen::VectorXd dots = (g.array() * y.array()).rowwise().sum();
      Mat dx = (g - dots.asDiagonal() * y);
      dx = norms.cwiseInverse().asDiagonal() * dx;
      ensure(grads, pa, g.rows(), g.cols()) += dx;
    };
  }
  return t;
}

Tensor Tape::log_softmax_rows(const Tensor& a) {
  check_mine(a, "log_softmax_rows");
  const Mat& A = a.value();
  Mat out(A.rows(), A.cols());
  for (Eigen::Index i = 0; i < A.rows(); ++i) {
    double mx = A.row(i).maxCoeff();
    Eigen::ArrayXd shifted = A.row(i).array() - mx;
    double lse = std::log(shifted.exp().sum());
    out.row(i) = shifted - lse;
  }
  bool ga = nodes_[a.node()].requires_grad;
  Tensor t = emplace(std::move(out), ga, false);
  if (ga) {
    int pa = a.node();
    int self = t.node();
    nodes_[self].backward = [this, pa, self](const Mat& g, std::vector<Mat>& grads) {
      const Mat& y = nodes_[self].value;
      Eigen::VectorXd rowsum = g.rowwise().sum();
      Mat dx = g - Mat(rowsum.asDiagonal() * Mat(y.array().exp().matrix()));
      ensure(grads, pa, g.rows(), g.cols()) += dx;
    };
  }
  return t;
}

Tensor Tape::exp_elem(const Tensor& a) {
  check_mine(a, "exp_elem");
  bool ga = nodes_[a.node()].requires_grad;
  Tensor t = emplace(a.value().array().exp().matrix(), ga, false);
  if (ga) {
    int pa = a.node();
    int self = t.node();
    nodes_[self].backward = [this, pa, self](const Mat& g, std::vector<Mat>& grads) {
      ensure(grads, pa, g.rows(), g.cols()) += g.cwiseProduct(nodes_[self].value);
    };
  }
  return t;
}

Tensor Tape::transpose(const Tensor& a) {
  check_mine(a, "transpose");
  bool ga = nodes_[a.node()].requires_grad;
  Tensor t = emplace(a.value().transpose(), ga, false);
  if (ga) {
    int pa = a.node();
    nodes_[t.node()].backward = [pa](const Mat& g, std::vector<Mat>& grads) {
      ensure(grads, pa, g.cols(), g.rows()) += g.transpose();
    };
  }
  return t;
}

Tensor Tape::concat_columns(const std::vector<Tensor>& parts) {
  if (parts.empty()) throw std::invalid_argument("concat_columns: empty part list");
  Eigen::Index rows = parts.front().value().rows();
  Eigen::Index cols = 0;
  bool any_grad = false;
  for (const Tensor& p : parts) {
    check_mine(p, "concat_columns");
    if (p.value().rows() != rows)
      throw std::invalid_argument("concat_columns: row count mismatch (" +
                                  shape_str(parts.front().value()) + " vs " + shape_str(p.value()) + ")");
    cols += p.value().cols();
    any_grad = any_grad || nodes_[p.node()].requires_grad;
  }
  Mat out(rows, cols);
  Eigen::Index off = 0;
  for (const Tensor& p : parts) {
    out.middleCols(off, p.value().cols()) = p.value();
    off += p.value().cols();
  }
  Tensor t = emplace(std::move(out), any_grad, false);
  if (any_grad) {
    struct Slice {
      int id;
      Eigen::Index offset, width;
      bool grad;
    };
    std::vector<Slice> slices;
    off = 0;
    for (const Tensor& p : parts) {
      slices.push_back({p.node(), off, p.value().cols(), nodes_[p.node()].requires_grad});
      off += p.value().cols();
    }
    nodes_[t.node()].backward = [slices](const Mat& g, std::vector<Mat>& grads) {
      for (const auto& s : slices) {
        if (!s.grad) continue;
        ensure(grads, s.id, g.rows(), s.width) += g.middleCols(s.offset, s.width);
      }
    };
  }
  return t;
}

Tensor Tape::dropout(const Tensor& a, double p, bool training, std::mt19937_64& rng) {
  check_mine(a, "dropout");
  if (!(p >= 0.0 && p < 1.0))
    throw std::invalid_argument("dropout: probability must lie in [0,1), got " + std::to_string(p));
  if (!training || p == 0.0) return a;  // exact identity

  const Mat& A = a.value();
  Mat mask(A.rows(), A.cols());
  const double keep = 1.0 - p;
  std::uniform_real_distribution<double> unif(0.0, 1.0);
  for (Eigen::Index i = 0; i < A.rows(); ++i)
    for (Eigen::Index j = 0; j < A.cols(); ++j) mask(i, j) = unif(rng) < keep ? 1.0 / keep : 0.0;

  bool ga = nodes_[a.node()].requires_grad;
  Tensor t = emplace(A.cwiseProduct(mask), ga, false);
  if (ga) {
    int pa = a.node();
    nodes_[t.node()].backward = [pa, mask](const Mat& g, std::vector<Mat>& grads) {
      ensure(grads, pa, g.rows(), g.cols()) += g.cwiseProduct(mask);
    };
  }
  return t;
}

Tensor Tape::mix_rows(const Tensor& a, const std::vector<double>& lambda,
                      const std::vector<int>& partner) {
  check_mine(a, "mix_rows");
  const Mat& A = a.value();
  const auto n = static_cast<size_t>(A.rows());
  if (lambda.size() != n || partner.size() != n)
    throw std::invalid_argument("mix_rows: plan size " + std::to_string(lambda.size()) + "/" +
                                std::to_string(partner.size()) + " does not match " +
                                std::to_string(n) + " rows");
  for (int idx : partner)
    if (idx < 0 || static_cast<size_t>(idx) >= n)
      throw std::invalid_argument("mix_rows: partner index " + std::to_string(idx) + " out of range");

  Mat out(A.rows(), A.cols());
  for (size_t i = 0; i < n; ++i)
    out.row(static_cast<Eigen::Index>(i)) =
        lambda[i] * A.row(static_cast<Eigen::Index>(i)) + (1.0 - lambda[i]) * A.row(partner[i]);

  bool ga = nodes_[a.node()].requires_grad;
  Tensor t = emplace(std::move(out), ga, false);
  if (ga) {
    int pa = a.node();
    nodes_[t.node()].backward = [pa, lambda, partner](const Mat& g, std::vector<Mat>& grads) {
      Mat& dst = ensure(grads, pa, g.rows(), g.cols());
      for (Eigen::Index i = 0; i < g.rows(); ++i) {
        dst.row(i) += lambda[static_cast<size_t>(i)] * g.row(i);
        dst.row(partner[static_cast<size_t>(i)]) += (1.0 - lambda[static_cast<size_t>(i)]) * g.row(i);
      }
    };
  }
  return t;
}

Tensor Tape::sum_all(const Tensor& a) {
  check_mine(a, "sum_all");
  Mat out(1, 1);
  out(0, 0) = a.value().sum();
  bool ga = nodes_[a.node()].requires_grad;
  Tensor t = emplace(std::move(out), ga, false);
  if (ga) {
    int pa = a.node();
    Eigen::Index r = a.value().rows(), c = a.value().cols();
    nodes_[t.node()].backward = [pa, r, c](const Mat& g, std::vector<Mat>& grads) {
      ensure(grads, pa, r, c).array() += g(0, 0);
    };
  }
  return t;
}

GradientMap Tape::backward(const Tensor& loss) const {
  check_mine(loss, "backward");
  const Mat& lv = loss.value();
  if (lv.rows() != 1 || lv.cols() != 1)
    throw std::invalid_argument("backward: loss must be a 1x1 scalar, got " + shape_str(lv));

  std::vector<Mat> grads(nodes_.size());
  grads[loss.node()] = Mat::Ones(1, 1);
  for (int i = loss.node(); i >= 0; --i) {
    if (grads[i].size() == 0) continue;
    const Node& n = nodes_[i];
    if (n.backward) n.backward(grads[i], grads);
  }

  GradientMap out;
  for (size_t i = 0; i < nodes_.size(); ++i) {
    const Node& n = nodes_[i];
    if (n.leaf && n.requires_grad) {
      if (grads[i].size() == 0)
        out.grads_[static_cast<int>(i)] = Mat::Zero(n.value.rows(), n.value.cols());
      else
        out.grads_[static_cast<int>(i)] = std::move(grads[i]);
    } else if (grads[i].size() != 0 && static_cast<int>(i) != loss.node()) {
      out.grads_[static_cast<int>(i)] = std::move(grads[i]);
    }
  }
  out.grads_[loss.node()] = Mat::Ones(1, 1);
  return out;
}

}  // namespace m3col
