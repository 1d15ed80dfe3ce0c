#pragma once

#include <Eigen/SparseCore>
#include <algorithm>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <unordered_map>
#include <vector>

#include "tweetcluster/common.hpp"
#include "tweetcluster/corpus.hpp"

namespace tweetcluster::features {

enum class Weighting { counts, tfidf };

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

// Sparse N x P document-term matrix with its vocabulary.
struct DocTermMatrix {
  SparseRowMatrix m;
  std::vector<std::string> vocab;
  Weighting weighting = Weighting::counts;

  Eigen::Index docs() const { return m.rows(); }
  Eigen::Index terms() const { return m.cols(); }
  std::size_t nonzeros() const { return static_cast<std::size_t>(m.nonZeros()); }
  double sparsity() const {
    const double total = static_cast<double>(m.rows()) * static_cast<double>(m.cols());
    return total == 0.0 ? 0.0 : 1.0 - static_cast<double>(m.nonZeros()) / total;
  }
};

// Vocabulary = tokens with document frequency >= min_df, lexicographic order;
// entry (i, j) counts occurrences of vocab[j] in tweet i.
inline DocTermMatrix build_bow(const std::vector<corpus::Tweet>& tweets, std::size_t min_df = 2) {
  if (tweets.empty()) throw InvalidInput("build_bow: empty corpus");
  std::map<std::string, std::size_t> df;
  {
    std::unordered_map<std::string, std::size_t> seen_at;  // token -> last doc index + 1
    seen_at.reserve(1024);
    for (std::size_t d = 0; d < tweets.size(); ++d) {
      for (const auto& tok : tweets[d].tokens) {
        auto& mark = seen_at[tok];
        if (mark != d + 1) {
          mark = d + 1;
          ++df[tok];
        }
      }
    }
  }
  DocTermMatrix out;
  std::unordered_map<std::string, std::uint32_t> col_of;
  for (const auto& [tok, freq] : df) {
    if (freq >= min_df) {
      col_of.emplace(tok, static_cast<std::uint32_t>(out.vocab.size()));
      out.vocab.push_back(tok);
    }
  }
  if (out.vocab.empty()) throw InvalidInput("build_bow: empty vocabulary (min_df too high?)");

  std::vector<Eigen::Triplet<double>> triplets;
  std::unordered_map<std::uint32_t, std::uint32_t> counts;
  for (std::size_t d = 0; d < tweets.size(); ++d) {
    counts.clear();
    for (const auto& tok : tweets[d].tokens) {
      const auto it = col_of.find(tok);
      if (it != col_of.end()) ++counts[it->second];
    }
    for (const auto& [col, n] : counts) {
      triplets.emplace_back(static_cast<int>(d), static_cast<int>(col), static_cast<double>(n));
    }
  }
  out.m.resize(static_cast<Eigen::Index>(tweets.size()), static_cast<Eigen::Index>(out.vocab.size()));
  out.m.setFromTriplets(triplets.begin(), triplets.end());
  out.m.makeCompressed();
  out.weighting = Weighting::counts;
  return out;
}

// value(i,j) = tf(i,j) * (ln((1+N)/(1+df_j)) + 1), rows then scaled to unit
// L2 norm; all-zero rows stay zero.
inline DocTermMatrix build_tfidf(const DocTermMatrix& bow) {
  if (bow.weighting != Weighting::counts) throw InvalidInput("build_tfidf: input must be counts");
  const Eigen::Index n_docs = bow.docs();
  Eigen::VectorXd df = Eigen::VectorXd::Zero(bow.terms());
  for (Eigen::Index i = 0; i < bow.m.outerSize(); ++i) {
    for (SparseRowMatrix::InnerIterator it(bow.m, i); it; ++it) {
      if (it.value() != 0.0) df[it.col()] += 1.0;
    }
  }
  Eigen::VectorXd idf(bow.terms());
  for (Eigen::Index j = 0; j < bow.terms(); ++j) {
    idf[j] = std::log((1.0 + static_cast<double>(n_docs)) / (1.0 + df[j])) + 1.0;
  }
  DocTermMatrix out;
  out.vocab = bow.vocab;
  out.weighting = Weighting::tfidf;
  out.m = bow.m;
  for (Eigen::Index i = 0; i < out.m.outerSize(); ++i) {
    double sq = 0.0;
    for (SparseRowMatrix::InnerIterator it(out.m, i); it; ++it) {
      it.valueRef() *= idf[it.col()];
      sq += it.value() * it.value();
    }
    if (sq > 0.0) {
      const double inv = 1.0 / std::sqrt(sq);
      for (SparseRowMatrix::InnerIterator it(out.m, i); it; ++it) it.valueRef() *= inv;
    }
  }
  return out;
}

// Sparse artifact: vocab sidecar plus "row,col,value" triplets.
inline void write_doc_term(const DocTermMatrix& dtm, const std::filesystem::path& triplets_path,
                           const std::filesystem::path& vocab_path) {
  atomic_write_file(vocab_path, [&](std::ostream& os) {
    for (const auto& tok : dtm.vocab) os << tok << '\n';
  });
  atomic_write_file(triplets_path, [&](std::ostream& os) {
    os << "row,col,value\n";
    for (Eigen::Index i = 0; i < dtm.m.outerSize(); ++i) {
      for (SparseRowMatrix::InnerIterator it(dtm.m, i); it; ++it) {
        os << it.row() << ',' << it.col() << ',' << detail::format_double(it.value()) << '\n';
      }
    }
  });
}

inline DocTermMatrix read_doc_term(const std::filesystem::path& triplets_path,
                                   const std::filesystem::path& vocab_path,
                                   Weighting weighting) {
  DocTermMatrix out;
  out.weighting = weighting;
  {
    std::ifstream in(vocab_path);
    if (!in) throw IoError("cannot open vocab file: " + vocab_path.string());
    std::string line;
    while (std::getline(in, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      if (!line.empty()) out.vocab.push_back(line);
    }
  }
  std::ifstream in(triplets_path);
  if (!in) throw IoError("cannot open triplets file: " + triplets_path.string());
  std::string line;
  std::getline(in, line);  // header
  std::vector<Eigen::Triplet<double>> triplets;
  Eigen::Index max_row = -1;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    long row = 0, col = 0;
    double value = 0.0;
    if (std::sscanf(line.c_str(), "%ld,%ld,%lf", &row, &col, &value) != 3) {
      throw IoError("bad triplet line in " + triplets_path.string());
    }
    triplets.emplace_back(static_cast<int>(row), static_cast<int>(col), value);
    max_row = std::max<Eigen::Index>(max_row, row);
  }
  out.m.resize(max_row + 1, static_cast<Eigen::Index>(out.vocab.size()));
  out.m.setFromTriplets(triplets.begin(), triplets.end());
  out.m.makeCompressed();
  return out;
}

}  // namespace tweetcluster::features
