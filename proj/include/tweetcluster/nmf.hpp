#pragma once

#include <Eigen/Core>
#include <cmath>
#include <vector>

#include "tweetcluster/common.hpp"
#include "tweetcluster/doc_term.hpp"
#include "tweetcluster/features.hpp"
#include "tweetcluster/reduce.hpp"

namespace tweetcluster::features {

struct NmfResult {
  FeatureMatrix w;              // N x K
  Eigen::MatrixXd h;            // K x P
  std::vector<double> objective;  // ||X - WH||_F^2 after each iteration
};

namespace detail {

// Nonnegative double SVD initialization (zero-fill variant).
inline void nndsvd_init(const DocTermMatrix& x, int k, std::uint64_t seed, Eigen::MatrixXd& w,
                        Eigen::MatrixXd& h) {
  const Eigen::Index n = x.docs();
  const Eigen::Index p = x.terms();
  w.setZero(n, k);
  h.setZero(k, p);
  const SvdResult svd = tsvd_reduce(x, k, seed);
  Eigen::MatrixXd u(n, k);
  for (int j = 0; j < k; ++j) {
    u.col(j) = svd.singular_values[j] > 0.0 ? svd.scores.values.col(j) / svd.singular_values[j]
                                            : Eigen::VectorXd::Zero(n);
  }
  const Eigen::MatrixXd& v = svd.right_vectors;

  w.col(0) = std::sqrt(svd.singular_values[0]) * u.col(0).cwiseAbs();
  h.row(0) = std::sqrt(svd.singular_values[0]) * v.col(0).cwiseAbs().transpose();
  for (int j = 1; j < k; ++j) {
    const Eigen::VectorXd up = u.col(j).cwiseMax(0.0);
    const Eigen::VectorXd un = (-u.col(j)).cwiseMax(0.0);
    const Eigen::VectorXd vp = v.col(j).cwiseMax(0.0);
    const Eigen::VectorXd vn = (-v.col(j)).cwiseMax(0.0);
    const double pos = up.norm() * vp.norm();
    const double neg = un.norm() * vn.norm();
    const Eigen::VectorXd& wu = pos >= neg ? up : un;
    const Eigen::VectorXd& hv = pos >= neg ? vp : vn;
    const double term = pos >= neg ? pos : neg;
    if (term > 0.0) {
      const double scale = std::sqrt(svd.singular_values[j] * term);
      w.col(j) = scale / wu.norm() * wu;
      h.row(j) = scale / hv.norm() * hv.transpose();
    }
  }
}

inline double frobenius_objective(const SparseRowMatrix& x, double x_sq, const Eigen::MatrixXd& w,
                                  const Eigen::MatrixXd& h) {
  // ||X - WH||^2 = ||X||^2 - 2 <X, WH> + tr((W'W)(HH'))
  double cross = 0.0;
  for (Eigen::Index i = 0; i < x.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(x, i); it; ++it) {
      cross += it.value() * w.row(it.row()).dot(h.col(it.col()));
    }
  }
  const Eigen::MatrixXd wtw = w.transpose() * w;
  const Eigen::MatrixXd hht = h * h.transpose();
  return x_sq - 2.0 * cross + wtw.cwiseProduct(hht).sum();
}

}  // namespace detail

// Frobenius NMF by multiplicative updates, no regularization:
//   W <- W .* (X H') ./ (W H H' + eps)
//   H <- H .* (W' X) ./ (W' W H + eps)
inline NmfResult nmf_fit_transform(const DocTermMatrix& x, int k, int iterations,
                                   std::uint64_t seed, const std::string& label = "nmf") {
  const Eigen::Index n = x.docs();
  const Eigen::Index p = x.terms();
  if (k < 1 || k >= std::min(n, p)) {
    throw InvalidInput("nmf_fit_transform: component count must be in [1, min(N,P))");
  }
  for (Eigen::Index i = 0; i < x.m.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(x.m, i); it; ++it) {
      if (it.value() < 0.0) throw InvalidInput("nmf_fit_transform: negative entry in input");
    }
  }
  constexpr double eps = 1e-12;
  const double x_sq = x.m.squaredNorm();

  NmfResult out;
  out.w.method_label = label;
  if (x_sq == 0.0) {
    out.w.values.setZero(n, k);
    out.h.setZero(k, p);
    out.objective.push_back(0.0);
    return out;
  }

  Eigen::MatrixXd w, h;
  detail::nndsvd_init(x, k, seed, w, h);
  for (int it = 0; it < iterations; ++it) {
    const Eigen::MatrixXd xht = x.m * h.transpose();            // N x K
    const Eigen::MatrixXd whht = w * (h * h.transpose());       // N x K
    w = w.cwiseProduct(xht.cwiseQuotient(whht.array().max(0.0).matrix() +
                                         Eigen::MatrixXd::Constant(n, k, eps)));
    const Eigen::MatrixXd wtx = w.transpose() * x.m;            // K x P
    const Eigen::MatrixXd wtwh = (w.transpose() * w) * h;       // K x P
    h = h.cwiseProduct(wtx.cwiseQuotient(wtwh.array().max(0.0).matrix() +
                                         Eigen::MatrixXd::Constant(k, p, eps)));
    out.objective.push_back(detail::frobenius_objective(x.m, x_sq, w, h));
  }
  out.w.values = std::move(w);
  out.h = std::move(h);
  return out;
}

}  // namespace tweetcluster::features
