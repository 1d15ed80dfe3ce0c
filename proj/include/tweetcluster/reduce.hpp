#pragma once

#include <Eigen/Dense>
#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>

#include "tweetcluster/common.hpp"
#include "tweetcluster/doc_term.hpp"
#include "tweetcluster/features.hpp"

namespace tweetcluster::features {

struct PcaResult {
  FeatureMatrix scores;              // N x F projections
  Eigen::MatrixXd components;        // P x F loadings, unit columns
  Eigen::VectorXd explained_variance;  // length F, decreasing
};

struct SvdResult {
  FeatureMatrix scores;          // N x F, U_F * Sigma_F
  Eigen::MatrixXd right_vectors;  // P x F
  Eigen::VectorXd singular_values;  // decreasing
};

namespace detail {

// Components are defined up to sign; pin each one by making its
// largest-magnitude loading coordinate positive (lowest index on ties).
inline void fix_signs(Eigen::MatrixXd& loadings, Eigen::MatrixXd& scores) {
  for (Eigen::Index j = 0; j < loadings.cols(); ++j) {
    Eigen::Index arg = 0;
    double best = -1.0;
    for (Eigen::Index i = 0; i < loadings.rows(); ++i) {
      const double a = std::fabs(loadings(i, j));
      if (a > best + 1e-15) {
        best = a;
        arg = i;
      }
    }
    if (loadings(arg, j) < 0.0) {
      loadings.col(j) = -loadings.col(j);
      scores.col(j) = -scores.col(j);
    }
  }
}

}  // namespace detail

// Exact PCA through the eigendecomposition of whichever Gram matrix is
// smaller (P x P covariance or N x N outer Gram).
inline PcaResult pca_reduce(const Eigen::MatrixXd& data, Eigen::Index f,
                            const std::string& label = "pca") {
  const Eigen::Index n = data.rows();
  const Eigen::Index p = data.cols();
  if (f < 1 || f >= std::min(n, p)) {
    throw InvalidInput("pca_reduce: component count must be in [1, min(N,P))");
  }
  Eigen::MatrixXd centered = data.rowwise() - data.colwise().mean();
  const double denom = static_cast<double>(n - 1);
  const double total_variance = centered.squaredNorm() / denom;
  if (!(total_variance > 0.0)) throw InvalidInput("pca_reduce: zero-variance data");

  PcaResult out;
  out.scores.method_label = label;
  if (p <= n) {
    const Eigen::MatrixXd cov = centered.transpose() * centered / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(cov);
    out.components.resize(p, f);
    out.explained_variance.resize(f);
    for (Eigen::Index j = 0; j < f; ++j) {
      out.components.col(j) = eig.eigenvectors().col(p - 1 - j);
      out.explained_variance[j] = std::max(0.0, eig.eigenvalues()[p - 1 - j]);
    }
    out.scores.values = centered * out.components;
  } else {
    const Eigen::MatrixXd gram = centered * centered.transpose() / denom;
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(gram);
    out.components.resize(p, f);
    out.explained_variance.resize(f);
    out.scores.values.resize(n, f);
    for (Eigen::Index j = 0; j < f; ++j) {
      const double lambda = std::max(0.0, eig.eigenvalues()[n - 1 - j]);
      out.explained_variance[j] = lambda;
      const Eigen::VectorXd u = eig.eigenvectors().col(n - 1 - j);
      const double sigma = std::sqrt(std::max(0.0, lambda * denom));
      out.scores.values.col(j) = u * sigma;
      out.components.col(j) =
          sigma > 0.0 ? Eigen::VectorXd(centered.transpose() * u / sigma) : Eigen::VectorXd::Zero(p);
    }
  }
  detail::fix_signs(out.components, out.scores.values);
  return out;
}

inline PcaResult pca_reduce(const DocTermMatrix& dtm, Eigen::Index f,
                            const std::string& label = "pca") {
  return pca_reduce(Eigen::MatrixXd(dtm.m), f, label);
}

namespace detail {

inline Eigen::MatrixXd thin_q(const Eigen::MatrixXd& m) {
  Eigen::HouseholderQR<Eigen::MatrixXd> qr(m);
  return qr.householderQ() * Eigen::MatrixXd::Identity(m.rows(), std::min(m.rows(), m.cols()));
}

// Randomized range finder with power iterations; MatrixLike only needs
// products with dense matrices from either side.
template <typename MatrixLike>
SvdResult truncated_svd_impl(const MatrixLike& x, Eigen::Index n, Eigen::Index p, Eigen::Index f,
                             std::uint64_t seed, int power_iterations, const std::string& label) {
  if (f < 1 || f >= std::min(n, p)) {
    throw InvalidInput("tsvd_reduce: component count must be in [1, min(N,P))");
  }
  Eigen::Index l = std::min(f + 10, std::min(n, p));
  // A sketch this wide captures the whole row space exactly; use it whenever
  // the oversampled width is already a large fraction of the matrix.
  if (2 * l >= std::min(n, p)) l = std::min(n, p);

  Rng rng(seed);
  std::normal_distribution<double> gauss(0.0, 1.0);
  Eigen::MatrixXd omega(p, l);
  for (Eigen::Index i = 0; i < p; ++i) {
    for (Eigen::Index j = 0; j < l; ++j) omega(i, j) = gauss(rng);
  }
  Eigen::MatrixXd q = thin_q(x * omega);
  for (int it = 0; it < power_iterations; ++it) {
    q = thin_q(Eigen::MatrixXd(x.transpose() * q));
    q = thin_q(Eigen::MatrixXd(x * q));
  }
  const Eigen::MatrixXd b = q.transpose() * x;  // l x p
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(b, Eigen::ComputeThinU | Eigen::ComputeThinV);

  SvdResult out;
  out.scores.method_label = label;
  out.singular_values = svd.singularValues().head(f);
  out.right_vectors = svd.matrixV().leftCols(f);
  out.scores.values = (q * svd.matrixU().leftCols(f)) * out.singular_values.asDiagonal();
  fix_signs(out.right_vectors, out.scores.values);
  return out;
}

}  // namespace detail

// Truncated SVD of the uncentered matrix; scores are U_F * Sigma_F.
inline SvdResult tsvd_reduce(const DocTermMatrix& dtm, Eigen::Index f, std::uint64_t seed = 0,
                             int power_iterations = 10, const std::string& label = "tsvd") {
  return detail::truncated_svd_impl(dtm.m, dtm.docs(), dtm.terms(), f, seed, power_iterations,
                                    label);
}

inline SvdResult tsvd_reduce(const Eigen::MatrixXd& x, Eigen::Index f, std::uint64_t seed = 0,
                             int power_iterations = 10, const std::string& label = "tsvd") {
  return detail::truncated_svd_impl(x, x.rows(), x.cols(), f, seed, power_iterations, label);
}

}  // namespace tweetcluster::features
