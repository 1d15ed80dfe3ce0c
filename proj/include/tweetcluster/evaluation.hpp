#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <future>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#include "json.hpp"
#include "tweetcluster/clustering.hpp"
#include "tweetcluster/common.hpp"
#include "tweetcluster/features.hpp"
#include "tweetcluster/reduce.hpp"
#include "tweetcluster/special_functions.hpp"

namespace tweetcluster::evaluation {

struct CHReport {
  double score = 0.0;
  int k = 0;
  Eigen::Index n = 0;
};

// Variance ratio criterion: between-cluster dispersion over within-cluster
// dispersion, scaled by (N-K)/(K-1).
inline CHReport ch_score(const features::FeatureMatrix& x, const Eigen::VectorXi& labels, int k) {
  const Eigen::Index n = x.rows();
  if (k < 2) throw InvalidInput("ch_score: need k >= 2");
  if (n <= k) throw InvalidInput("ch_score: need more points than clusters");
  if (labels.size() != n) throw InvalidInput("ch_score: label/point count mismatch");

  Eigen::MatrixXd centroids = Eigen::MatrixXd::Zero(k, x.cols());
  Eigen::VectorXd sizes = Eigen::VectorXd::Zero(k);
  for (Eigen::Index i = 0; i < n; ++i) {
    const int c = labels[i];
    if (c < 0 || c >= k) throw InvalidInput("ch_score: label out of range");
    centroids.row(c) += x.values.row(i);
    sizes[c] += 1.0;
  }
  for (int c = 0; c < k; ++c) {
    if (sizes[c] == 0.0) throw InvalidInput("ch_score: empty cluster " + std::to_string(c));
    centroids.row(c) /= sizes[c];
  }
  const Eigen::RowVectorXd global = x.values.colwise().mean();

  double between = 0.0;
  for (int c = 0; c < k; ++c) {
    between += sizes[c] * (centroids.row(c) - global).squaredNorm();
  }
  double within = 0.0;
  for (Eigen::Index i = 0; i < n; ++i) {
    within += (x.values.row(i) - centroids.row(labels[i])).squaredNorm();
  }
  if (within <= 0.0) throw InvalidInput("ch_score: degenerate clustering (zero within dispersion)");

  CHReport report;
  report.k = k;
  report.n = n;
  report.score = (static_cast<double>(n - k) / static_cast<double>(k - 1)) * (between / within);
  return report;
}

inline CHReport ch_score(const features::FeatureMatrix& x, const clustering::ClusterResult& r) {
  return ch_score(x, r.labels, r.k);
}

struct HotellingResult {
  double t2 = 0.0;
  double f_stat = 0.0;
  double p_value = 1.0;
};

// Two-sample Hotelling T^2 on mean vectors with pooled covariance; the F
// approximation uses T^2 * (nA+nB-p-1) / (p (nA+nB-2)).
inline HotellingResult hotelling_t2(const features::FeatureMatrix& a,
                                    const features::FeatureMatrix& b,
                                    bool allow_pseudoinverse = false) {
  if (a.cols() != b.cols()) throw InvalidInput("hotelling_t2: feature count mismatch");
  const double na = static_cast<double>(a.rows());
  const double nb = static_cast<double>(b.rows());
  const Eigen::Index p = a.cols();
  if (a.rows() < 2 || b.rows() < 2) throw InvalidInput("hotelling_t2: need >= 2 rows per sample");

  const Eigen::RowVectorXd mean_a = a.values.colwise().mean();
  const Eigen::RowVectorXd mean_b = b.values.colwise().mean();
  const Eigen::MatrixXd ca = a.values.rowwise() - mean_a;
  const Eigen::MatrixXd cb = b.values.rowwise() - mean_b;
  const Eigen::MatrixXd pooled =
      (ca.transpose() * ca + cb.transpose() * cb) / (na + nb - 2.0);
  const Eigen::VectorXd diff = (mean_a - mean_b).transpose();

  const bool force_pinv = na + nb - 2.0 <= static_cast<double>(p);
  Eigen::VectorXd solved;
  Eigen::LDLT<Eigen::MatrixXd> ldlt;
  bool ok = false;
  if (!force_pinv) {
    ldlt.compute(pooled);
    if (ldlt.info() == Eigen::Success && ldlt.isPositive() &&
        ldlt.vectorD().minCoeff() > 1e-13 * std::max(1.0, ldlt.vectorD().maxCoeff())) {
      solved = ldlt.solve(diff);
      ok = true;
    }
  }
  if (!ok) {
    if (!allow_pseudoinverse && !force_pinv) {
      throw InvalidInput("hotelling_t2: singular pooled covariance (pass allow_pseudoinverse)");
    }
    Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> eig(pooled);
    const double cutoff = 1e-12 * std::max(1.0, eig.eigenvalues().maxCoeff());
    Eigen::VectorXd inv = Eigen::VectorXd::Zero(p);
    for (Eigen::Index i = 0; i < p; ++i) {
      if (eig.eigenvalues()[i] > cutoff) inv[i] = 1.0 / eig.eigenvalues()[i];
    }
    solved = eig.eigenvectors() * inv.asDiagonal() * eig.eigenvectors().transpose() * diff;
  }

  HotellingResult out;
  out.t2 = na * nb / (na + nb) * diff.dot(solved);
  const double dof2 = na + nb - static_cast<double>(p) - 1.0;
  if (dof2 > 0.0) {
    out.f_stat = out.t2 * dof2 / (static_cast<double>(p) * (na + nb - 2.0));
    out.p_value = f_distribution_tail(static_cast<double>(p), dof2, out.f_stat);
  } else {
    out.f_stat = std::numeric_limits<double>::quiet_NaN();
    out.p_value = std::numeric_limits<double>::quiet_NaN();
  }
  return out;
}

struct BenchmarkRow {
  std::string representation;
  Eigen::Index feature_count = 0;
  clustering::Algorithm algorithm = clustering::Algorithm::kmeans;
  int k = 0;
  std::uint64_t seed = 0;
  double ch_score = 0.0;
};

struct BenchmarkReport {
  std::vector<BenchmarkRow> rows;

  double mean_score(const std::string& representation) const {
    double sum = 0.0;
    std::size_t count = 0;
    for (const auto& row : rows) {
      if (row.representation == representation) {
        sum += row.ch_score;
        ++count;
      }
    }
    if (count == 0) throw InvalidInput("no benchmark rows for representation: " + representation);
    return sum / static_cast<double>(count);
  }
};

struct BenchmarkOptions {
  std::vector<int> ks{10, 20, 50};
  std::vector<clustering::Algorithm> algorithms{
      clustering::Algorithm::kmeans, clustering::Algorithm::ward, clustering::Algorithm::spectral};
  std::vector<std::uint64_t> seeds{0};
  double gamma = 0.0;        // 0 -> 1/F
  int spectral_max_n = 20000;  // dense affinity cap; larger inputs are subsampled
  int jobs = 1;
};

namespace detail {

inline features::FeatureMatrix subsample_rows(const features::FeatureMatrix& x, Eigen::Index cap,
                                              std::uint64_t seed) {
  if (x.rows() <= cap) return x;
  std::vector<Eigen::Index> idx(static_cast<std::size_t>(x.rows()));
  std::iota(idx.begin(), idx.end(), 0);
  Rng rng(seed);
  std::shuffle(idx.begin(), idx.end(), rng);
  idx.resize(static_cast<std::size_t>(cap));
  std::sort(idx.begin(), idx.end());
  features::FeatureMatrix out;
  out.method_label = x.method_label;
  out.values.resize(cap, x.cols());
  for (Eigen::Index i = 0; i < cap; ++i) out.values.row(i) = x.values.row(idx[static_cast<std::size_t>(i)]);
  return out;
}

}  // namespace detail

// Full representation x algorithm x K x seed grid of CH scores. Cells are
// independent; `jobs` bounds how many run concurrently.
inline BenchmarkReport run_benchmark(
    const std::vector<std::pair<std::string, const features::FeatureMatrix*>>& representations,
    const BenchmarkOptions& options = {}) {
  if (representations.empty()) throw InvalidInput("run_benchmark: no representations");
  const Eigen::Index n = representations.front().second->rows();
  for (const auto& [name, fm] : representations) {
    if (fm->rows() != n) {
      throw InvalidInput("run_benchmark: representation '" + name + "' has " +
                         std::to_string(fm->rows()) + " rows, expected " + std::to_string(n));
    }
  }

  struct Cell {
    std::size_t rep;
    clustering::Algorithm algorithm;
    int k;
    std::uint64_t seed;
  };
  std::vector<Cell> cells;
  for (std::size_t r = 0; r < representations.size(); ++r) {
    for (const auto algorithm : options.algorithms) {
      for (const int k : options.ks) {
        for (const auto seed : options.seeds) {
          cells.push_back({r, algorithm, k, seed});
        }
      }
    }
  }

  BenchmarkReport report;
  report.rows.resize(cells.size());
  const auto run_cell = [&](std::size_t c) {
    const Cell& cell = cells[c];
    const auto& [name, fm] = representations[cell.rep];
    const double gamma = options.gamma > 0.0 ? options.gamma : 1.0 / static_cast<double>(fm->cols());
    CHReport ch;
    switch (cell.algorithm) {
      case clustering::Algorithm::kmeans:
        ch = ch_score(*fm, clustering::kmeans(*fm, cell.k, cell.seed));
        break;
      case clustering::Algorithm::ward:
        ch = ch_score(*fm, clustering::ward(*fm, cell.k));
        break;
      case clustering::Algorithm::spectral: {
        const features::FeatureMatrix sub =
            detail::subsample_rows(*fm, options.spectral_max_n, cell.seed);
        ch = ch_score(sub, clustering::spectral(sub, cell.k, gamma, cell.seed));
        break;
      }
    }
    report.rows[c] = {name, fm->cols(), cell.algorithm, cell.k, cell.seed, ch.score};
  };

  const int jobs = std::max(1, options.jobs);
  if (jobs == 1) {
    for (std::size_t c = 0; c < cells.size(); ++c) run_cell(c);
  } else {
    std::atomic<std::size_t> cursor{0};
    std::vector<std::future<void>> workers;
    for (int j = 0; j < jobs; ++j) {
      workers.push_back(std::async(std::launch::async, [&]() {
        for (std::size_t c = cursor.fetch_add(1); c < cells.size(); c = cursor.fetch_add(1)) {
          run_cell(c);
        }
      }));
    }
    for (auto& w : workers) w.get();
  }
  return report;
}

inline void write_benchmark_csv(const BenchmarkReport& report, const std::filesystem::path& path) {
  atomic_write_file(path, [&](std::ostream& os) {
    os << "representation,features,algorithm,k,seed,ch_score\n";
    for (const auto& row : report.rows) {
      os << row.representation << ',' << row.feature_count << ','
         << clustering::algorithm_name(row.algorithm) << ',' << row.k << ',' << row.seed << ','
         << detail::format_double(row.ch_score) << '\n';
    }
  });
}

inline BenchmarkReport read_benchmark_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open benchmark csv: " + path.string());
  std::string line;
  std::getline(in, line);
  BenchmarkReport report;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    BenchmarkRow row;
    std::size_t pos = 0;
    auto next_field = [&]() {
      const std::size_t comma = line.find(',', pos);
      std::string field = line.substr(pos, comma - pos);
      pos = comma == std::string::npos ? line.size() : comma + 1;
      return field;
    };
    row.representation = next_field();
    row.feature_count = std::stol(next_field());
    row.algorithm = clustering::algorithm_from_name(next_field());
    row.k = std::stoi(next_field());
    row.seed = std::stoull(next_field());
    row.ch_score = std::stod(next_field());
    report.rows.push_back(std::move(row));
  }
  return report;
}

// Companion metadata; the timestamp field is informational and excluded from
// reproducibility comparisons.
inline void write_benchmark_metadata(const BenchmarkReport& report, const std::string& config_text,
                                     const std::filesystem::path& path) {
  std::uint64_t hash = 1469598103934665603ull;  // FNV-1a
  for (const unsigned char c : config_text) {
    hash ^= c;
    hash *= 1099511628211ull;
  }
  char hash_hex[20];
  std::snprintf(hash_hex, sizeof hash_hex, "%016llx", static_cast<unsigned long long>(hash));

  nlohmann::json j;
  j["config_hash"] = hash_hex;
  j["config"] = config_text;
  j["rows"] = report.rows.size();
  j["timestamp"] = static_cast<long long>(std::time(nullptr));
  atomic_write_file(path, [&](std::ostream& os) { os << j.dump(2) << '\n'; });
}

// 2D PCA projection of the features, one dot per row, colored by label.
inline void write_scatter_svg(const features::FeatureMatrix& x, const Eigen::VectorXi& labels,
                              const std::filesystem::path& path) {
  if (x.rows() != labels.size()) throw InvalidInput("write_scatter_svg: label count mismatch");
  Eigen::MatrixXd proj;
  if (x.cols() > 2) {
    proj = features::pca_reduce(x.values, 2).scores.values;
  } else {
    proj = x.values;
  }
  const double x_min = proj.col(0).minCoeff(), x_max = proj.col(0).maxCoeff();
  const double y_min = proj.col(1).minCoeff(), y_max = proj.col(1).maxCoeff();
  const double x_span = std::max(1e-12, x_max - x_min);
  const double y_span = std::max(1e-12, y_max - y_min);
  constexpr int size = 640;
  constexpr int margin = 20;
  static const char* palette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                  "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf",
                                  "#aec7e8", "#ffbb78"};
  atomic_write_file(path, [&](std::ostream& os) {
    os << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << size << "\" height=\"" << size
       << "\">\n<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n";
    for (Eigen::Index i = 0; i < proj.rows(); ++i) {
      const double px = margin + (proj(i, 0) - x_min) / x_span * (size - 2 * margin);
      const double py = size - margin - (proj(i, 1) - y_min) / y_span * (size - 2 * margin);
      const char* color = palette[static_cast<std::size_t>(labels[i]) % 12];
      char buf[160];
      std::snprintf(buf, sizeof buf,
                    "<circle cx=\"%.2f\" cy=\"%.2f\" r=\"2\" fill=\"%s\" fill-opacity=\"0.6\"/>\n",
                    px, py, color);
      os << buf;
    }
    os << "</svg>\n";
  });
}

}  // namespace tweetcluster::evaluation
