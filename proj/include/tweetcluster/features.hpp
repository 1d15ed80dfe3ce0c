#pragma once

#include <Eigen/Core>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "tweetcluster/common.hpp"

namespace tweetcluster::features {

// Dense N x F representation matrix, one row per tweet.
struct FeatureMatrix {
  Eigen::MatrixXd values;
  std::string method_label;

  Eigen::Index rows() const { return values.rows(); }
  Eigen::Index cols() const { return values.cols(); }
};

inline void validate_finite(const FeatureMatrix& fm) {
  if (!fm.values.allFinite()) {
    throw InvalidInput("feature matrix '" + fm.method_label + "' contains NaN/Inf");
  }
}

inline void write_features_csv(const FeatureMatrix& fm, const std::filesystem::path& path) {
  validate_finite(fm);
  atomic_write_file(path, [&](std::ostream& os) {
    for (Eigen::Index j = 0; j < fm.cols(); ++j) {
      os << (j ? "," : "") << 'f' << j;
    }
    os << '\n';
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
      for (Eigen::Index j = 0; j < fm.cols(); ++j) {
        if (j) os << ',';
        os << detail::format_double(fm.values(i, j));
      }
      os << '\n';
    }
  });
}

inline FeatureMatrix read_features_csv(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open feature csv: " + path.string());
  std::string line;
  if (!std::getline(in, line)) throw IoError("empty feature csv: " + path.string());
  std::vector<std::vector<double>> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<double> row;
    const char* p = line.data();
    const char* end = p + line.size();
    while (p < end) {
      double v = 0.0;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) throw IoError("bad value in " + path.string());
      row.push_back(v);
      p = res.ptr;
      if (p < end && *p == ',') ++p;
    }
    if (!rows.empty() && row.size() != rows.front().size()) {
      throw IoError("ragged feature csv: " + path.string());
    }
    rows.push_back(std::move(row));
  }
  FeatureMatrix fm;
  fm.method_label = path.stem().string();
  fm.values.resize(static_cast<Eigen::Index>(rows.size()),
                   rows.empty() ? 0 : static_cast<Eigen::Index>(rows.front().size()));
  for (std::size_t i = 0; i < rows.size(); ++i) {
    for (std::size_t j = 0; j < rows[i].size(); ++j) {
      fm.values(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = rows[i][j];
    }
  }
  return fm;
}

// Same layout as the tensor cache, magic "FEAT", rows fixed to 1.
inline void write_features_binary(const FeatureMatrix& fm, const std::filesystem::path& path) {
  validate_finite(fm);
  atomic_write_file(path, [&](std::ostream& os) {
    os.write("FEAT", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(fm.rows()));
    detail::put_u32(os, 1);
    detail::put_u32(os, static_cast<std::uint32_t>(fm.cols()));
    for (Eigen::Index i = 0; i < fm.rows(); ++i) {
      for (Eigen::Index j = 0; j < fm.cols(); ++j) {
        detail::put_f32(os, static_cast<float>(fm.values(i, j)));
      }
    }
  });
}

inline FeatureMatrix read_features_binary(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open feature file: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != "FEAT") {
    throw IoError("bad feature file magic in " + path.string());
  }
  const std::uint32_t count = detail::get_u32(in);
  const std::uint32_t rows = detail::get_u32(in);
  const std::uint32_t dim = detail::get_u32(in);
  if (rows != 1) throw IoError("unexpected row count in " + path.string());
  FeatureMatrix fm;
  fm.method_label = path.stem().string();
  fm.values.resize(count, dim);
  for (std::uint32_t i = 0; i < count; ++i) {
    for (std::uint32_t j = 0; j < dim; ++j) fm.values(i, j) = detail::get_f32(in);
  }
  if (!in) throw IoError("truncated feature file: " + path.string());
  return fm;
}

}  // namespace tweetcluster::features
