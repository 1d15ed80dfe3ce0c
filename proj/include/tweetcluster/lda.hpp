#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "tweetcluster/common.hpp"
#include "tweetcluster/doc_term.hpp"
#include "tweetcluster/features.hpp"
#include "tweetcluster/special_functions.hpp"

namespace tweetcluster::features {

// Online variational Bayes for latent Dirichlet allocation.
//
// The topic matrix lambda is updated from mini-batches with step size
// rho_t = (tau0 + t)^-kappa; each document's variational posterior gamma is
// fitted by iterating
//   phi_wk  ∝ exp(E[log theta_k]) * exp(E[log beta_kw])
//   gamma_k = alpha + sum_w n_w * phi_wk
// until the mean absolute change in gamma drops below gamma_tol.
struct LdaOptions {
  double alpha = 0.0;  // 0 -> 1/K
  double eta = 0.0;    // 0 -> 1/K
  double kappa = 0.7;
  double tau0 = 10.0;
  int batch_size = 256;
  int passes = 5;
  int doc_iterations = 100;
  double gamma_tol = 1e-3;
};

namespace detail {

struct SparseDoc {
  std::vector<int> word;
  std::vector<double> count;
};

inline std::vector<SparseDoc> to_docs(const SparseRowMatrix& m) {
  std::vector<SparseDoc> docs(static_cast<std::size_t>(m.rows()));
  for (Eigen::Index i = 0; i < m.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(m, i); it; ++it) {
      if (it.value() > 0.0) {
        docs[static_cast<std::size_t>(i)].word.push_back(static_cast<int>(it.col()));
        docs[static_cast<std::size_t>(i)].count.push_back(it.value());
      }
    }
  }
  return docs;
}

// exp(E[log beta]) rows for the current lambda.
inline Eigen::MatrixXd exp_dirichlet_expectation(const Eigen::MatrixXd& lambda) {
  Eigen::MatrixXd out(lambda.rows(), lambda.cols());
  for (Eigen::Index k = 0; k < lambda.rows(); ++k) {
    const double psi_total = digamma(lambda.row(k).sum());
    for (Eigen::Index w = 0; w < lambda.cols(); ++w) {
      out(k, w) = std::exp(digamma(lambda(k, w)) - psi_total);
    }
  }
  return out;
}

// Fits gamma for one document against fixed expElogbeta; returns the final
// exp(E[log theta]) alongside so the caller can accumulate topic statistics.
inline void fit_document(const SparseDoc& doc, const Eigen::MatrixXd& exp_elog_beta, double alpha,
                         int max_iterations, double tol, Eigen::VectorXd& gamma,
                         Eigen::VectorXd& exp_elog_theta, Eigen::VectorXd& phinorm) {
  const Eigen::Index k = exp_elog_beta.rows();
  gamma.setOnes(k);
  exp_elog_theta.resize(k);
  const auto n_words = static_cast<Eigen::Index>(doc.word.size());
  phinorm.resize(n_words);
  for (int it = 0; it < max_iterations; ++it) {
    const double psi_total = digamma(gamma.sum());
    for (Eigen::Index j = 0; j < k; ++j) {
      exp_elog_theta[j] = std::exp(digamma(gamma[j]) - psi_total);
    }
    for (Eigen::Index w = 0; w < n_words; ++w) {
      phinorm[w] = 1e-100;
      for (Eigen::Index j = 0; j < k; ++j) {
        phinorm[w] += exp_elog_theta[j] * exp_elog_beta(j, doc.word[static_cast<std::size_t>(w)]);
      }
    }
    double change = 0.0;
    for (Eigen::Index j = 0; j < k; ++j) {
      double s = 0.0;
      for (Eigen::Index w = 0; w < n_words; ++w) {
        s += doc.count[static_cast<std::size_t>(w)] / phinorm[w] *
             exp_elog_beta(j, doc.word[static_cast<std::size_t>(w)]);
      }
      const double next = alpha + exp_elog_theta[j] * s;
      change += std::fabs(next - gamma[j]);
      gamma[j] = next;
    }
    if (change / static_cast<double>(k) < tol) break;
  }
  const double psi_total = digamma(gamma.sum());
  for (Eigen::Index j = 0; j < k; ++j) {
    exp_elog_theta[j] = std::exp(digamma(gamma[j]) - psi_total);
  }
}

}  // namespace detail

struct LdaModel {
  Eigen::MatrixXd lambda;  // K x P
  double alpha = 0.0;
};

inline LdaModel lda_fit(const DocTermMatrix& x, int k, std::uint64_t seed,
                        const LdaOptions& options = {}) {
  const Eigen::Index n = x.docs();
  const Eigen::Index p = x.terms();
  if (k < 2) throw InvalidInput("lda_fit: need at least 2 topics");
  if (k >= p) throw InvalidInput("lda_fit: topic count must be below vocabulary size");
  const double alpha = options.alpha > 0.0 ? options.alpha : 1.0 / k;
  const double eta = options.eta > 0.0 ? options.eta : 1.0 / k;

  Rng rng(seed);
  std::gamma_distribution<double> gamma_init(100.0, 0.01);
  Eigen::MatrixXd lambda(k, p);
  for (Eigen::Index i = 0; i < k; ++i) {
    for (Eigen::Index j = 0; j < p; ++j) lambda(i, j) = gamma_init(rng);
  }

  const auto docs = detail::to_docs(x.m);
  std::vector<std::size_t> order(docs.size());
  std::iota(order.begin(), order.end(), 0);

  Eigen::VectorXd gamma, exp_elog_theta, phinorm;
  long update = 0;
  for (int pass = 0; pass < options.passes; ++pass) {
    std::shuffle(order.begin(), order.end(), rng);
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(options.batch_size)) {
      const std::size_t stop = std::min(order.size(), start + static_cast<std::size_t>(options.batch_size));
      const Eigen::MatrixXd exp_elog_beta = detail::exp_dirichlet_expectation(lambda);
      Eigen::MatrixXd sstats = Eigen::MatrixXd::Zero(k, p);
      for (std::size_t d = start; d < stop; ++d) {
        const auto& doc = docs[order[d]];
        detail::fit_document(doc, exp_elog_beta, alpha, options.doc_iterations, options.gamma_tol,
                             gamma, exp_elog_theta, phinorm);
        for (std::size_t w = 0; w < doc.word.size(); ++w) {
          const double ratio = doc.count[w] / phinorm[static_cast<Eigen::Index>(w)];
          for (int j = 0; j < k; ++j) sstats(j, doc.word[w]) += exp_elog_theta[j] * ratio;
        }
      }
      const double rho = std::pow(options.tau0 + static_cast<double>(update), -options.kappa);
      ++update;
      const double scale = static_cast<double>(n) / static_cast<double>(stop - start);
      lambda = (1.0 - rho) * lambda +
               rho * (Eigen::MatrixXd::Constant(k, p, eta) +
                      scale * sstats.cwiseProduct(exp_elog_beta));
    }
  }
  return {std::move(lambda), alpha};
}

// Per-document normalized variational means; rows are probability vectors.
inline FeatureMatrix lda_transform(const LdaModel& model, const DocTermMatrix& x,
                                   const LdaOptions& options = {},
                                   const std::string& label = "lda") {
  const auto docs = detail::to_docs(x.m);
  const Eigen::MatrixXd exp_elog_beta = detail::exp_dirichlet_expectation(model.lambda);
  FeatureMatrix out;
  out.method_label = label;
  out.values.resize(static_cast<Eigen::Index>(docs.size()), model.lambda.rows());
  Eigen::VectorXd gamma, exp_elog_theta, phinorm;
  for (std::size_t d = 0; d < docs.size(); ++d) {
    detail::fit_document(docs[d], exp_elog_beta, model.alpha, options.doc_iterations,
                         options.gamma_tol, gamma, exp_elog_theta, phinorm);
    out.values.row(static_cast<Eigen::Index>(d)) = (gamma / gamma.sum()).transpose();
  }
  return out;
}

inline FeatureMatrix lda_fit_transform(const DocTermMatrix& x, int k, std::uint64_t seed,
                                       const LdaOptions& options = {},
                                       const std::string& label = "lda") {
  return lda_transform(lda_fit(x, k, seed, options), x, options, label);
}

}  // namespace tweetcluster::features
