#include "m3col/gradcheck.hpp"

#include <cmath>
#include <cstring>
#include <stdexcept>

namespace m3col {

namespace {

double evaluate(const ScalarFn& f, const std::vector<Mat>& params) {
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const Mat& p : params) leaves.push_back(tape.param(p));
  return f(tape, leaves).scalar();
}

}  // namespace

GradCheckReport finite_diff_gradcheck(const ScalarFn& f, const std::vector<Mat>& params, double h) {
  if (h <= 0.0) throw std::invalid_argument("finite_diff_gradcheck: step must be positive");

  const double base0 = evaluate(f, params);
  const double base1 = evaluate(f, params);
  if (std::memcmp(&base0, &base1, sizeof(double)) != 0)
    throw std::runtime_error(
        "finite_diff_gradcheck: function is not deterministic at the base point; "
        "freeze dropout masks and RNG before checking");

  // Analytic gradients from one recorded forward pass.
  Tape tape;
  std::vector<Tensor> leaves;
  leaves.reserve(params.size());
  for (const Mat& p : params) leaves.push_back(tape.param(p));
  GradientMap gmap = tape.backward(f(tape, leaves));

  GradCheckReport report;
  std::vector<Mat> work = params;
  for (size_t k = 0; k < params.size(); ++k) {
    const Mat& analytic = gmap.at(leaves[k]);
    for (Eigen::Index i = 0; i < work[k].rows(); ++i) {
      for (Eigen::Index j = 0; j < work[k].cols(); ++j) {
        const double saved = work[k](i, j);
        work[k](i, j) = saved + h;
        const double fplus = evaluate(f, work);
        work[k](i, j) = saved - h;
        const double fminus = evaluate(f, work);
        work[k](i, j) = saved;

        const double numeric = (fplus - fminus) / (2.0 * h);
        const double a = analytic(i, j);
        const double rel = std::abs(a - numeric) / std::max(1e-8, std::abs(a) + std::abs(numeric));
        if (rel > report.max_rel_error) {
          report.max_rel_error = rel;
          report.worst_param = static_cast<int>(k);
          report.worst_row = static_cast<int>(i);
          report.worst_col = static_cast<int>(j);
          report.analytic = a;
          report.numeric = numeric;
        }
      }
    }
  }
  return report;
}

}  // namespace m3col
