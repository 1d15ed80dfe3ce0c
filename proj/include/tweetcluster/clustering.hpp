#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <string>
#include <vector>

#include "tweetcluster/common.hpp"
#include "tweetcluster/features.hpp"

namespace tweetcluster::clustering {

enum class Algorithm { kmeans, ward, spectral };

inline const char* algorithm_name(Algorithm a) {
  switch (a) {
    case Algorithm::kmeans: return "kmeans";
    case Algorithm::ward: return "ward";
    case Algorithm::spectral: return "spectral";
  }
  return "?";
}

inline Algorithm algorithm_from_name(const std::string& name) {
  if (name == "kmeans") return Algorithm::kmeans;
  if (name == "ward") return Algorithm::ward;
  if (name == "spectral") return Algorithm::spectral;
  throw InvalidInput("unknown clustering algorithm: " + name);
}

struct ClusterResult {
  Eigen::VectorXi labels;
  int k = 0;
  Algorithm algorithm = Algorithm::kmeans;
  double objective = 0.0;  // WCSS for kmeans/ward, embedding WCSS for spectral
};

namespace detail {

inline Eigen::MatrixXd pairwise_sq_dists(const Eigen::MatrixXd& x, const Eigen::MatrixXd& c) {
  const Eigen::VectorXd xn = x.rowwise().squaredNorm();
  const Eigen::VectorXd cn = c.rowwise().squaredNorm();
  Eigen::MatrixXd d = -2.0 * (x * c.transpose());
  d.colwise() += xn;
  d.rowwise() += cn.transpose();
  return d.cwiseMax(0.0);
}

// One seeded Lloyd run with k-means++ initialization; appends the WCSS after
// each assignment step to trace when given.
inline double lloyd_run(const Eigen::MatrixXd& x, int k, Rng& rng, int max_iterations, double tol,
                        Eigen::VectorXi& labels, std::vector<double>* trace) {
  const Eigen::Index n = x.rows();

  // k-means++ seeding
  Eigen::MatrixXd centers(k, x.cols());
  std::uniform_int_distribution<Eigen::Index> uniform(0, n - 1);
  centers.row(0) = x.row(uniform(rng));
  Eigen::VectorXd closest =
      (x.rowwise() - centers.row(0)).rowwise().squaredNorm();
  for (int j = 1; j < k; ++j) {
    const double total = closest.sum();
    Eigen::Index pick = 0;
    if (total > 0.0) {
      std::uniform_real_distribution<double> u(0.0, total);
      double target = u(rng);
      for (Eigen::Index i = 0; i < n; ++i) {
        target -= closest[i];
        if (target <= 0.0) {
          pick = i;
          break;
        }
      }
    } else {
      pick = uniform(rng);
    }
    centers.row(j) = x.row(pick);
    closest = closest.cwiseMin((x.rowwise() - centers.row(j)).rowwise().squaredNorm());
  }

  labels.resize(n);
  double wcss = 0.0;
  for (int it = 0; it < max_iterations; ++it) {
    const Eigen::MatrixXd d = pairwise_sq_dists(x, centers);
    wcss = 0.0;
    for (Eigen::Index i = 0; i < n; ++i) {
      Eigen::Index arg = 0;
      const double best = d.row(i).minCoeff(&arg);
      labels[i] = static_cast<int>(arg);
      wcss += best;
    }
    if (trace) trace->push_back(wcss);

    Eigen::MatrixXd next = Eigen::MatrixXd::Zero(k, x.cols());
    Eigen::VectorXi sizes = Eigen::VectorXi::Zero(k);
    for (Eigen::Index i = 0; i < n; ++i) {
      next.row(labels[i]) += x.row(i);
      ++sizes[labels[i]];
    }
    for (int j = 0; j < k; ++j) {
      if (sizes[j] > 0) {
        next.row(j) /= sizes[j];
      } else {
        // revive an empty cluster at the point farthest from its centroid
        Eigen::Index far = 0;
        double far_d = -1.0;
        for (Eigen::Index i = 0; i < n; ++i) {
          const double dist = (x.row(i) - centers.row(labels[i])).squaredNorm();
          if (dist > far_d && sizes[labels[i]] > 1) {
            far_d = dist;
            far = i;
          }
        }
        next.row(j) = x.row(far);
        --sizes[labels[far]];
        labels[far] = j;
        sizes[j] = 1;
      }
    }
    const double shift = (next - centers).rowwise().norm().maxCoeff();
    centers = next;
    if (shift < tol) break;
  }

  // final assignment against the settled centers
  const Eigen::MatrixXd d = pairwise_sq_dists(x, centers);
  wcss = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    Eigen::Index arg = 0;
    wcss += d.row(i).minCoeff(&arg);
    labels[i] = static_cast<int>(arg);
  }
  if (trace) trace->push_back(wcss);
  return wcss;
}

// Clusters must all be populated in a returned result; steal a point from
// the largest cluster for any label that ended up unused.
inline void enforce_nonempty(const Eigen::MatrixXd& x, int k, Eigen::VectorXi& labels) {
  Eigen::VectorXi sizes = Eigen::VectorXi::Zero(k);
  for (Eigen::Index i = 0; i < labels.size(); ++i) ++sizes[labels[i]];
  for (int j = 0; j < k; ++j) {
    if (sizes[j] == 0) {
      int donor = 0;
      sizes.maxCoeff(&donor);
      for (Eigen::Index i = 0; i < labels.size(); ++i) {
        if (labels[i] == donor) {
          labels[i] = j;
          --sizes[donor];
          ++sizes[j];
          break;
        }
      }
    }
  }
}

}  // namespace detail

struct KMeansOptions {
  int max_iterations = 300;
  double tol = 1e-4;
  int restarts = 10;
};

inline ClusterResult kmeans(const features::FeatureMatrix& x, int k, std::uint64_t seed,
                            const KMeansOptions& options = {},
                            std::vector<double>* wcss_trace = nullptr) {
  const Eigen::Index n = x.rows();
  if (k < 2) throw InvalidInput("kmeans: need k >= 2");
  if (k >= n) throw InvalidInput("kmeans: need more points than clusters");

  Rng rng(seed);
  double best = std::numeric_limits<double>::infinity();
  Eigen::VectorXi best_labels;
  for (int r = 0; r < options.restarts; ++r) {
    Eigen::VectorXi labels;
    std::vector<double> trace;
    const double wcss = detail::lloyd_run(x.values, k, rng, options.max_iterations, options.tol,
                                          labels, wcss_trace ? &trace : nullptr);
    if (wcss < best) {
      best = wcss;
      best_labels = labels;
      if (wcss_trace) *wcss_trace = trace;
    }
  }
  detail::enforce_nonempty(x.values, k, best_labels);
  return {std::move(best_labels), k, Algorithm::kmeans, best};
}

struct WardMerge {
  int a = 0, b = 0;  // cluster representatives joined at this step
  double cost = 0.0;  // increase in total within-cluster sum of squares
};

namespace detail {

// Greedy agglomeration on the Ward merge-cost matrix maintained with the
// Lance-Williams recurrence; nearest-neighbour caching keeps the usual case
// near O(N^2). Ties break on (smaller index, larger index).
struct WardState {
  Eigen::MatrixXd cost;      // merge costs between active clusters
  std::vector<int> size;
  std::vector<char> active;
  std::vector<int> nearest;  // cached argmin per active row

  void refresh_nearest(int i) {
    const auto n = static_cast<int>(size.size());
    nearest[i] = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int j = 0; j < n; ++j) {
      if (j == i || !active[j]) continue;
      const double c = cost(std::min(i, j), std::max(i, j));
      if (c < best) {
        best = c;
        nearest[i] = j;
      }
    }
  }
};

}  // namespace detail

inline ClusterResult ward(const features::FeatureMatrix& x, int k,
                          std::vector<WardMerge>* merges_out = nullptr) {
  const auto n = static_cast<int>(x.rows());
  if (k < 2) throw InvalidInput("ward: need k >= 2");
  if (k >= n) throw InvalidInput("ward: need more points than clusters");

  detail::WardState st;
  st.cost.resize(n, n);
  st.size.assign(static_cast<std::size_t>(n), 1);
  st.active.assign(static_cast<std::size_t>(n), 1);
  st.nearest.assign(static_cast<std::size_t>(n), -1);
  for (int i = 0; i < n; ++i) {
    for (int j = i + 1; j < n; ++j) {
      st.cost(i, j) = 0.5 * (x.values.row(i) - x.values.row(j)).squaredNorm();
    }
  }
  for (int i = 0; i < n; ++i) st.refresh_nearest(i);

  std::vector<int> parent(static_cast<std::size_t>(n));
  for (int i = 0; i < n; ++i) parent[static_cast<std::size_t>(i)] = i;
  const std::function<int(int)> find = [&](int v) {
    while (parent[static_cast<std::size_t>(v)] != v) {
      parent[static_cast<std::size_t>(v)] = parent[static_cast<std::size_t>(parent[static_cast<std::size_t>(v)])];
      v = parent[static_cast<std::size_t>(v)];
    }
    return v;
  };

  double total_cost = 0.0;
  std::vector<WardMerge> merges;
  for (int step = 0; step < n - k; ++step) {
    // global minimum over cached nearest neighbours
    int a = -1, b = -1;
    double best = std::numeric_limits<double>::infinity();
    for (int i = 0; i < n; ++i) {
      if (!st.active[i] || st.nearest[i] < 0) continue;
      const int j = st.nearest[i];
      const double c = st.cost(std::min(i, j), std::max(i, j));
      const int lo = std::min(i, j), hi = std::max(i, j);
      if (c < best || (c == best && (lo < a || (lo == a && hi < b)))) {
        best = c;
        a = lo;
        b = hi;
      }
    }

    const int na = st.size[static_cast<std::size_t>(a)];
    const int nb = st.size[static_cast<std::size_t>(b)];
    merges.push_back({a, b, best});
    total_cost += best;

    // merged cluster lives in slot a
    for (int m = 0; m < n; ++m) {
      if (!st.active[m] || m == a || m == b) continue;
      const int nm = st.size[static_cast<std::size_t>(m)];
      const double dam = st.cost(std::min(a, m), std::max(a, m));
      const double dbm = st.cost(std::min(b, m), std::max(b, m));
      const double updated = ((na + nm) * dam + (nb + nm) * dbm - nm * best) /
                             static_cast<double>(na + nb + nm);
      st.cost(std::min(a, m), std::max(a, m)) = updated;
    }
    st.active[static_cast<std::size_t>(b)] = 0;
    st.size[static_cast<std::size_t>(a)] = na + nb;
    parent[static_cast<std::size_t>(b)] = a;

    st.refresh_nearest(a);
    for (int m = 0; m < n; ++m) {
      if (!st.active[m] || m == a) continue;
      if (st.nearest[m] == a || st.nearest[m] == b) st.refresh_nearest(m);
    }
  }

  // label clusters 0..k-1 in order of smallest member index
  std::vector<int> label_of(static_cast<std::size_t>(n), -1);
  int next = 0;
  Eigen::VectorXi labels(n);
  for (int i = 0; i < n; ++i) {
    const int root = find(i);
    if (label_of[static_cast<std::size_t>(root)] < 0) label_of[static_cast<std::size_t>(root)] = next++;
    labels[i] = label_of[static_cast<std::size_t>(root)];
  }
  if (merges_out) *merges_out = std::move(merges);
  return {std::move(labels), k, Algorithm::ward, total_cost};
}

struct SpectralOptions {
  KMeansOptions kmeans;
};

// Gaussian-kernel affinity, symmetric normalized Laplacian, k-means on the
// row-normalized bottom-K eigenvector embedding.
inline ClusterResult spectral(const features::FeatureMatrix& x, int k, double gamma,
                              std::uint64_t seed, const SpectralOptions& options = {}) {
  const Eigen::Index n = x.rows();
  if (k < 2) throw InvalidInput("spectral: need k >= 2");
  if (k > n) throw InvalidInput("spectral: need at least as many points as clusters");
  if (!(gamma > 0.0)) throw InvalidInput("spectral: gamma must be positive");
  if (k == n) {
    Eigen::VectorXi labels(n);
    for (Eigen::Index i = 0; i < n; ++i) labels[i] = static_cast<int>(i);
    return {std::move(labels), k, Algorithm::spectral, 0.0};
  }

  Eigen::MatrixXd affinity = detail::pairwise_sq_dists(x.values, x.values);
  affinity = (-gamma * affinity).array().exp();
  affinity.diagonal().setZero();

  const Eigen::VectorXd degree = affinity.rowwise().sum();
  for (Eigen::Index i = 0; i < n; ++i) {
    if (!(degree[i] > 0.0)) {
      throw InvalidInput("spectral: point " + std::to_string(i) +
                         " has zero affinity to every other point");
    }
  }
  const Eigen::VectorXd inv_sqrt = degree.array().rsqrt();
  Eigen::MatrixXd laplacian = -(inv_sqrt * inv_sqrt.transpose()).cwiseProduct(affinity);
  laplacian.diagonal().array() += 1.0;

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(laplacian);
  Eigen::MatrixXd embed = eig.eigenvectors().leftCols(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const double norm = embed.row(i).norm();
    if (norm > 0.0) embed.row(i) /= norm;
  }

  features::FeatureMatrix fm{std::move(embed), "spectral-embedding"};
  ClusterResult result = kmeans(fm, k, seed, options.kmeans);
  result.algorithm = Algorithm::spectral;
  return result;
}

inline void write_labels_csv(const ClusterResult& result, const std::filesystem::path& path) {
  atomic_write_file(path, [&](std::ostream& os) {
    os << "row_index,label\n";
    for (Eigen::Index i = 0; i < result.labels.size(); ++i) {
      os << i << ',' << result.labels[i] << '\n';
    }
  });
}

inline Eigen::VectorXi read_labels_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open labels file: " + path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<int> labels;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    long row = 0, label = 0;
    if (std::sscanf(line.c_str(), "%ld,%ld", &row, &label) != 2) {
      throw IoError("bad label line in " + path.string());
    }
    labels.push_back(static_cast<int>(label));
  }
  Eigen::VectorXi out(static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) out[static_cast<Eigen::Index>(i)] = labels[i];
  return out;
}

}  // namespace tweetcluster::clustering
