#include "latentiv/numkit.hpp"

#include <cmath>
#include <string>

#include "latentiv/error.hpp"

namespace latentiv::numkit {

namespace {

Matrix upper_inverse_gram(const Matrix& r) {
  // (R'R)^{-1} = R^{-1} R^{-T}
  const auto d = r.cols();
  Matrix r_inv = r.triangularView<Eigen::Upper>().solve(Matrix::Identity(d, d));
  return r_inv * r_inv.transpose();
}

}  // namespace

LeastSquaresFit fit_least_squares(const Matrix& design, const Vector& response,
                                  const LeastSquaresOptions& options) {
  const auto n = design.rows();
  const auto d = design.cols();
  if (d == 0 || response.size() != n) {
    throw Error(ErrorCode::DimensionMismatch,
                "design is " + std::to_string(n) + "x" + std::to_string(d) +
                    ", response has " + std::to_string(response.size()) + " entries");
  }
  if (!design.allFinite() || !response.allFinite()) {
    throw Error(ErrorCode::InvalidConfig, "least squares input contains non-finite values");
  }

  LeastSquaresFit fit;
  double s_max = 0.0;
  double s_min = 0.0;
  Matrix r;
  Eigen::HouseholderQR<Matrix> qr;
  if (n >= d) {
    qr.compute(design);
    r = qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
    Eigen::JacobiSVD<Matrix> svd(r);
    s_max = svd.singularValues()(0);
    s_min = svd.singularValues()(d - 1);
  }
  const bool deficient = n < d || !(s_max > 0.0) || s_min < options.rank_tolerance * s_max;

  if (!deficient) {
    Vector qty = qr.householderQ().transpose() * response;
    fit.coefficients = r.triangularView<Eigen::Upper>().solve(qty.head(d));
    fit.gram_inverse = upper_inverse_gram(r);
    return fit;
  }

  if (!options.allow_ridge) {
    throw Error(ErrorCode::RankDeficient,
                "design " + std::to_string(n) + "x" + std::to_string(d) +
                    " has singular value ratio " + std::to_string(s_max > 0 ? s_min / s_max : 0.0));
  }

  if (n < d || s_max == 0.0) {
    s_max = design.size() > 0 ? Eigen::JacobiSVD<Matrix>(design).singularValues()(0) : 0.0;
  }
  const double lambda = options.ridge_scale * std::max(s_max * s_max, 1e-300);
  Matrix augmented(n + d, d);
  augmented << design, std::sqrt(lambda) * Matrix::Identity(d, d);
  Vector target = Vector::Zero(n + d);
  target.head(n) = response;

  Eigen::HouseholderQR<Matrix> ridge_qr(augmented);
  Matrix ridge_r = ridge_qr.matrixQR().topRows(d).triangularView<Eigen::Upper>();
  Vector qty = ridge_qr.householderQ().transpose() * target;
  fit.coefficients = ridge_r.triangularView<Eigen::Upper>().solve(qty.head(d));
  fit.gram_inverse = upper_inverse_gram(ridge_r);
  fit.ridge_used = true;
  fit.ridge_lambda = lambda;
  if (!fit.coefficients.allFinite()) {
    throw Error(ErrorCode::RankDeficient, "ridge fallback produced non-finite coefficients");
  }
  return fit;
}

Vector solve_least_squares(const Matrix& design, const Vector& response,
                           const LeastSquaresOptions& options) {
  return fit_least_squares(design, response, options).coefficients;
}

}  // namespace latentiv::numkit
