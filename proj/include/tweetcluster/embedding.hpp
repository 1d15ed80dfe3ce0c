#pragma once

#include <Eigen/Core>
#include <charconv>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <string>
#include <unordered_map>
#include <vector>

#include "tweetcluster/common.hpp"
#include "tweetcluster/corpus.hpp"

namespace tweetcluster::embedding {

enum class OovPolicy {
  zeros,           // unknown token -> zero row
  subword_lookup,  // reserved for tables whose vectors were composed from
                   // subwords offline; lookup misses still fall back to zeros
};

inline constexpr int kMaxSequenceLength = 32;

struct EmbeddingTable {
  std::string name;
  int dim = 0;
  std::unordered_map<std::string, std::uint32_t> index;
  std::vector<float> storage;  // index * dim
  OovPolicy oov_policy = OovPolicy::zeros;

  const float* lookup(const std::string& token) const {
    const auto it = index.find(token);
    return it == index.end() ? nullptr : storage.data() + static_cast<std::size_t>(it->second) * dim;
  }
  std::size_t size() const { return index.size(); }
};

// Zero-padded word-vector matrix for one tweet; rows at and beyond used_rows
// are exactly zero.
struct TweetTensor {
  Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> values;  // 32 x D
  int used_rows = 0;
};

namespace detail {

inline bool parse_header(const std::string& line, std::size_t& count, int& dim) {
  std::size_t a = 0, b = 0;
  const char* p = line.data();
  const char* end = p + line.size();
  auto r1 = std::from_chars(p, end, a);
  if (r1.ec != std::errc() || r1.ptr == end || *r1.ptr != ' ') return false;
  auto r2 = std::from_chars(r1.ptr + 1, end, b);
  if (r2.ec != std::errc()) return false;
  for (const char* q = r2.ptr; q != end; ++q) {
    if (!corpus::detail::is_space(*q)) return false;
  }
  count = a;
  dim = static_cast<int>(b);
  return true;
}

}  // namespace detail

// Text vector file: optional "count dim" header, then one "token v1 ... vD"
// line per word. Duplicate tokens keep their first occurrence.
inline EmbeddingTable load_table(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open embedding file: " + path.string());
  EmbeddingTable table;
  table.name = path.stem().string();

  std::string line;
  std::size_t line_no = 0;
  bool first = true;
  std::vector<float> row;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (first) {
      first = false;
      std::size_t declared_count = 0;
      int declared_dim = 0;
      if (detail::parse_header(line, declared_count, declared_dim)) continue;
    }
    const char* p = line.data();
    const char* end = p + line.size();
    while (p != end && corpus::detail::is_space(*p)) ++p;
    const char* tok_end = p;
    while (tok_end != end && !corpus::detail::is_space(*tok_end)) ++tok_end;
    if (p == tok_end) continue;
    std::string token(p, tok_end);
    row.clear();
    p = tok_end;
    while (p != end) {
      while (p != end && corpus::detail::is_space(*p)) ++p;
      if (p == end) break;
      float v = 0.0f;
      const auto res = std::from_chars(p, end, v);
      if (res.ec != std::errc()) {
        throw IoError(path.string() + ":" + std::to_string(line_no) + ": bad number");
      }
      row.push_back(v);
      p = res.ptr;
    }
    if (row.empty()) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": token without vector");
    }
    if (table.dim == 0) {
      table.dim = static_cast<int>(row.size());
    } else if (static_cast<int>(row.size()) != table.dim) {
      throw IoError(path.string() + ":" + std::to_string(line_no) + ": expected " +
                    std::to_string(table.dim) + " values, got " + std::to_string(row.size()));
    }
    if (table.index.contains(token)) continue;
    table.index.emplace(std::move(token), static_cast<std::uint32_t>(table.index.size()));
    table.storage.insert(table.storage.end(), row.begin(), row.end());
  }
  if (table.dim == 0) throw IoError("empty embedding file: " + path.string());
  return table;
}

// Row i holds the vector of token i; unknown tokens map to zero rows; tokens
// past the 32nd are truncated.
inline TweetTensor embed_tweet(const std::vector<std::string>& tokens, const EmbeddingTable& table) {
  if (table.dim <= 0) throw InvalidInput("embed_tweet: table not loaded");
  TweetTensor out;
  out.values.setZero(kMaxSequenceLength, table.dim);
  out.used_rows = static_cast<int>(std::min<std::size_t>(tokens.size(), kMaxSequenceLength));
  for (int i = 0; i < out.used_rows; ++i) {
    if (const float* v = table.lookup(tokens[static_cast<std::size_t>(i)])) {
      out.values.row(i) = Eigen::Map<const Eigen::RowVectorXf>(v, table.dim);
    }
  }
  return out;
}

inline std::vector<TweetTensor> tensorize_corpus(const std::vector<corpus::Tweet>& tweets,
                                                 const EmbeddingTable& table) {
  if (tweets.empty()) throw InvalidInput("tensorize_corpus: empty corpus");
  std::vector<TweetTensor> out;
  out.reserve(tweets.size());
  for (const auto& t : tweets) out.push_back(embed_tweet(t.tokens, table));
  return out;
}

// Binary tensor cache: {magic, u32 count, u32 rows, u32 dim} then row-major
// little-endian f32. Magic "TWTE" for tweet tensors.
inline void write_tensor_cache(const std::vector<TweetTensor>& tensors,
                               const std::filesystem::path& path) {
  if (tensors.empty()) throw InvalidInput("write_tensor_cache: nothing to write");
  const int rows = static_cast<int>(tensors.front().values.rows());
  const int dim = static_cast<int>(tensors.front().values.cols());
  atomic_write_file(path, [&](std::ostream& os) {
    os.write("TWTE", 4);
    detail::put_u32(os, static_cast<std::uint32_t>(tensors.size()));
    detail::put_u32(os, static_cast<std::uint32_t>(rows));
    detail::put_u32(os, static_cast<std::uint32_t>(dim));
    for (const auto& t : tensors) {
      for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < dim; ++c) detail::put_f32(os, t.values(r, c));
      }
    }
  });
}

inline std::vector<TweetTensor> read_tensor_cache(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open tensor cache: " + path.string());
  char magic[4];
  in.read(magic, 4);
  if (!in || std::string_view(magic, 4) != "TWTE") {
    throw IoError("bad tensor cache magic in " + path.string());
  }
  const std::uint32_t count = detail::get_u32(in);
  const std::uint32_t rows = detail::get_u32(in);
  const std::uint32_t dim = detail::get_u32(in);
  std::vector<TweetTensor> tensors(count);
  for (auto& t : tensors) {
    t.values.resize(rows, dim);
    for (std::uint32_t r = 0; r < rows; ++r) {
      for (std::uint32_t c = 0; c < dim; ++c) t.values(r, c) = detail::get_f32(in);
    }
    t.used_rows = 0;
    for (int r = static_cast<int>(rows); r-- > 0;) {
      if (t.values.row(r).cwiseAbs().maxCoeff() != 0.0f) {
        t.used_rows = r + 1;
        break;
      }
    }
  }
  if (!in) throw IoError("truncated tensor cache: " + path.string());
  return tensors;
}

}  // namespace tweetcluster::embedding
