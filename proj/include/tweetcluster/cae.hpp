#pragma once

#include <Eigen/Core>
#include <algorithm>
#include <array>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <limits>
#include <numeric>
#include <string>
#include <vector>

#ifdef _OPENMP
#include <omp.h>
#endif

#include "tweetcluster/common.hpp"
#include "tweetcluster/embedding.hpp"
#include "tweetcluster/features.hpp"

// Convolutional autoencoder over zero-padded word-vector matrices.
//
// Encoder: three [conv 3x3 / ReLU / max-pool] blocks whose pooling factors
// shrink the input down to a single-channel bottleneck map; its flattened
// activations are the learned representation. Decoder mirrors the encoder
// with [conv / ReLU / nearest-neighbour upsample] blocks and a final linear
// conv back to one channel. Optionally the bottleneck is L2-normalized in
// the forward pass (exact Jacobian in the backward pass), which pins every
// nonzero representation to the unit sphere during training.
//
// Everything is hand-rolled: convolutions run as im2col + GEMM, pooling
// keeps argmax indices for gradient routing, optimization is Adam on MSE.

namespace tweetcluster::cae {

template <typename Scalar>
using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
template <typename Scalar>
using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
using ArgMatrix = Eigen::Matrix<int, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct CAEConfig {
  int input_rows = 32;
  int input_cols = 300;
  std::array<int, 3> encoder_filters{64, 32, 1};
  std::array<std::array<int, 2>, 3> pool_sizes{{{2, 5}, {2, 5}, {2, 2}}};
  double learning_rate = 1e-5;
  int batch_size = 32;
  int max_epochs = 50;
  double validation_fraction = 0.2;
  bool l2_constrained = false;
  std::uint64_t seed = 0;

  // Pooling layouts for the two stock embedding widths.
  static CAEConfig for_dim(int d) {
    CAEConfig cfg;
    cfg.input_cols = d;
    if (d == 768) {
      cfg.pool_sizes = {{{2, 8}, {2, 8}, {2, 2}}};
    }
    cfg.validate();
    return cfg;
  }

  std::array<int, 3> decoder_filters() const {
    return {encoder_filters[2], encoder_filters[1], encoder_filters[0]};
  }

  int bottleneck_rows() const {
    return input_rows / (pool_sizes[0][0] * pool_sizes[1][0] * pool_sizes[2][0]);
  }
  int bottleneck_cols() const {
    return input_cols / (pool_sizes[0][1] * pool_sizes[1][1] * pool_sizes[2][1]);
  }
  int representation_dim() const {
    return encoder_filters[2] * bottleneck_rows() * bottleneck_cols();
  }

  void validate() const {
    int row_factor = 1, col_factor = 1;
    for (const auto& [pr, pc] : pool_sizes) {
      if (pr < 1 || pc < 1) throw InvalidInput("cae: pooling factors must be >= 1");
      row_factor *= pr;
      col_factor *= pc;
    }
    if (input_rows % row_factor != 0 || input_cols % col_factor != 0) {
      throw InvalidInput("cae: input dims must be divisible by the pooling factors");
    }
    for (const int f : encoder_filters) {
      if (f < 1) throw InvalidInput("cae: filter counts must be >= 1");
    }
    if (!(validation_fraction > 0.0 && validation_fraction < 1.0)) {
      throw InvalidInput("cae: validation_fraction must be in (0, 1)");
    }
    if (batch_size < 1 || max_epochs < 1) throw InvalidInput("cae: bad batch/epoch settings");
  }
};

// (channels, rows, cols) after each encoder block, bottleneck last.
inline std::vector<std::array<int, 3>> encoder_shape_flow(const CAEConfig& config) {
  std::vector<std::array<int, 3>> flow;
  int h = config.input_rows, w = config.input_cols;
  flow.push_back({1, h, w});
  for (int i = 0; i < 3; ++i) {
    h /= config.pool_sizes[static_cast<std::size_t>(i)][0];
    w /= config.pool_sizes[static_cast<std::size_t>(i)][1];
    flow.push_back({config.encoder_filters[static_cast<std::size_t>(i)], h, w});
  }
  return flow;
}

template <typename Scalar>
struct ConvParams {
  Matrix<Scalar> w;  // out x (in * 9), row o holds the o-th 3x3xin kernel
  Vector<Scalar> b;

  int in_channels() const { return static_cast<int>(w.cols()) / 9; }
  int out_channels() const { return static_cast<int>(w.rows()); }

  void setZero(int out, int in) {
    w.setZero(out, in * 9);
    b.setZero(out);
  }
};

template <typename Scalar>
using LayerGrads = std::array<ConvParams<Scalar>, 7>;

namespace detail {

// Unfolds a zero-padded ch x h x w map into (ch*9) x (h*w) patch columns.
template <typename Scalar>
void im2col_3x3(const Matrix<Scalar>& in, int h, int w, Matrix<Scalar>& col) {
  const int ch = static_cast<int>(in.rows());
  col.resize(ch * 9, h * w);
  for (int c = 0; c < ch; ++c) {
    const Scalar* src = in.data() + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = kx - 1;
        Scalar* dst = col.data() + static_cast<std::ptrdiff_t>(c * 9 + ky * 3 + kx) * h * w;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          Scalar* drow = dst + static_cast<std::ptrdiff_t>(y) * w;
          const int sy = y + dy;
          if (sy < 0 || sy >= h) {
            std::fill(drow, drow + w, Scalar(0));
            continue;
          }
          const Scalar* srow = src + static_cast<std::ptrdiff_t>(sy) * w;
          if (x0 > 0) std::fill(drow, drow + x0, Scalar(0));
          if (x1 > x0) std::copy(srow + x0 + dx, srow + x1 + dx, drow + x0);
          if (x1 < w) std::fill(drow + x1, drow + w, Scalar(0));
        }
      }
    }
  }
}

// Adjoint of im2col_3x3: scatter-adds patch-column gradients back onto the
// input map. din must be pre-zeroed to ch x (h*w).
template <typename Scalar>
void col2im_3x3_add(const Matrix<Scalar>& dcol, int h, int w, Matrix<Scalar>& din) {
  const int ch = static_cast<int>(din.rows());
  for (int c = 0; c < ch; ++c) {
    Scalar* dst = din.data() + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int ky = 0; ky < 3; ++ky) {
      const int dy = ky - 1;
      for (int kx = 0; kx < 3; ++kx) {
        const int dx = kx - 1;
        const Scalar* src = dcol.data() + static_cast<std::ptrdiff_t>(c * 9 + ky * 3 + kx) * h * w;
        const int x0 = std::max(0, -dx);
        const int x1 = std::min(w, w - dx);
        for (int y = 0; y < h; ++y) {
          const int sy = y + dy;
          if (sy < 0 || sy >= h) continue;
          Scalar* drow = dst + static_cast<std::ptrdiff_t>(sy) * w + dx;
          const Scalar* srow = src + static_cast<std::ptrdiff_t>(y) * w;
          for (int x = x0; x < x1; ++x) drow[x] += srow[x];
        }
      }
    }
  }
}

template <typename Scalar>
void maxpool_forward(const Matrix<Scalar>& in, int h, int w, int pr, int pc, Matrix<Scalar>& out,
                     ArgMatrix& arg) {
  const int ch = static_cast<int>(in.rows());
  const int h2 = h / pr, w2 = w / pc;
  out.resize(ch, h2 * w2);
  arg.resize(ch, h2 * w2);
  for (int c = 0; c < ch; ++c) {
    const Scalar* src = in.data() + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int y2 = 0; y2 < h2; ++y2) {
      for (int x2 = 0; x2 < w2; ++x2) {
        int best_idx = y2 * pr * w + x2 * pc;
        Scalar best = src[best_idx];
        for (int i = 0; i < pr; ++i) {
          const int row = (y2 * pr + i) * w + x2 * pc;
          for (int j = 0; j < pc; ++j) {
            if (src[row + j] > best) {
              best = src[row + j];
              best_idx = row + j;
            }
          }
        }
        out(c, y2 * w2 + x2) = best;
        arg(c, y2 * w2 + x2) = best_idx;
      }
    }
  }
}

template <typename Scalar>
void maxpool_backward(const Matrix<Scalar>& g_out, const ArgMatrix& arg, Matrix<Scalar>& g_in) {
  g_in.setZero();
  for (Eigen::Index c = 0; c < g_out.rows(); ++c) {
    for (Eigen::Index i = 0; i < g_out.cols(); ++i) {
      g_in(c, arg(c, i)) += g_out(c, i);
    }
  }
}

template <typename Scalar>
void upsample_forward(const Matrix<Scalar>& in, int h, int w, int pr, int pc, Matrix<Scalar>& out) {
  const int ch = static_cast<int>(in.rows());
  const int h2 = h * pr, w2 = w * pc;
  out.resize(ch, h2 * w2);
  for (int c = 0; c < ch; ++c) {
    const Scalar* src = in.data() + static_cast<std::ptrdiff_t>(c) * h * w;
    Scalar* dst = out.data() + static_cast<std::ptrdiff_t>(c) * h2 * w2;
    for (int y = 0; y < h; ++y) {
      Scalar* first_row = dst + static_cast<std::ptrdiff_t>(y) * pr * w2;
      for (int x = 0; x < w; ++x) {
        std::fill(first_row + x * pc, first_row + (x + 1) * pc, src[y * w + x]);
      }
      for (int i = 1; i < pr; ++i) {
        std::copy(first_row, first_row + w2, first_row + static_cast<std::ptrdiff_t>(i) * w2);
      }
    }
  }
}

template <typename Scalar>
void upsample_backward(const Matrix<Scalar>& g_out, int h, int w, int pr, int pc,
                       Matrix<Scalar>& g_in) {
  const int ch = static_cast<int>(g_out.rows());
  const int w2 = w * pc;
  g_in.resize(ch, h * w);
  for (int c = 0; c < ch; ++c) {
    const Scalar* src = g_out.data() + static_cast<std::ptrdiff_t>(c) * (h * pr) * w2;
    Scalar* dst = g_in.data() + static_cast<std::ptrdiff_t>(c) * h * w;
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        Scalar sum = 0;
        for (int i = 0; i < pr; ++i) {
          const Scalar* row = src + (static_cast<std::ptrdiff_t>(y) * pr + i) * w2 + x * pc;
          for (int j = 0; j < pc; ++j) sum += row[j];
        }
        dst[y * w + x] = sum;
      }
    }
  }
}

}  // namespace detail

// Free-standing layer ops on a channels x rows x cols tensor, stored as a
// (channels) x (rows*cols) row-major matrix.
template <typename Scalar>
struct Tensor {
  int channels = 0, rows = 0, cols = 0;
  Matrix<Scalar> data;

  static Tensor zero(int ch, int r, int c) {
    Tensor t;
    t.channels = ch;
    t.rows = r;
    t.cols = c;
    t.data.setZero(ch, r * c);
    return t;
  }
  Scalar& at(int c, int y, int x) { return data(c, y * cols + x); }
  Scalar at(int c, int y, int x) const { return data(c, y * cols + x); }
};

// Same-size 3x3 cross-correlation with zero padding one; activation is the
// caller's business.
template <typename Scalar>
Tensor<Scalar> conv2d(const Tensor<Scalar>& input, const ConvParams<Scalar>& params) {
  if (params.in_channels() != input.channels) {
    throw InvalidInput("conv2d: layer expects " + std::to_string(params.in_channels()) +
                       " input channels, got " + std::to_string(input.channels));
  }
  Matrix<Scalar> col;
  detail::im2col_3x3(input.data, input.rows, input.cols, col);
  Tensor<Scalar> out;
  out.channels = params.out_channels();
  out.rows = input.rows;
  out.cols = input.cols;
  out.data.noalias() = params.w * col;
  out.data.colwise() += params.b;
  return out;
}

template <typename Scalar>
std::pair<Tensor<Scalar>, ArgMatrix> maxpool2d(const Tensor<Scalar>& input, int pr, int pc) {
  if (input.rows % pr != 0 || input.cols % pc != 0) {
    throw InvalidInput("maxpool2d: dims not divisible by pooling factors");
  }
  Tensor<Scalar> out;
  out.channels = input.channels;
  out.rows = input.rows / pr;
  out.cols = input.cols / pc;
  ArgMatrix arg;
  detail::maxpool_forward(input.data, input.rows, input.cols, pr, pc, out.data, arg);
  return {std::move(out), std::move(arg)};
}

template <typename Scalar>
Tensor<Scalar> upsample2d(const Tensor<Scalar>& input, int pr, int pc) {
  Tensor<Scalar> out;
  out.channels = input.channels;
  out.rows = input.rows * pr;
  out.cols = input.cols * pc;
  detail::upsample_forward(input.data, input.rows, input.cols, pr, pc, out.data);
  return out;
}

template <typename Scalar>
double mse_loss(const Matrix<Scalar>& output, const Matrix<Scalar>& target) {
  if (output.rows() != target.rows() || output.cols() != target.cols()) {
    throw InvalidInput("mse_loss: shape mismatch");
  }
  return (output - target).template cast<double>().squaredNorm() /
         static_cast<double>(output.size());
}

template <typename Scalar>
double mse_loss(const Tensor<Scalar>& output, const Tensor<Scalar>& target) {
  return mse_loss(output.data, target.data);
}

inline constexpr double kNormEpsilon = 1e-12;

template <typename Scalar>
struct Model {
  CAEConfig config;
  std::array<ConvParams<Scalar>, 7> layers;  // enc0..2, dec0..2, output

  // Adam state
  std::array<ConvParams<Scalar>, 7> adam_m;
  std::array<ConvParams<Scalar>, 7> adam_v;
  long adam_step_count = 0;

  std::array<std::pair<int, int>, 7> layer_io() const {
    const auto dec = config.decoder_filters();
    return {{{1, config.encoder_filters[0]},
             {config.encoder_filters[0], config.encoder_filters[1]},
             {config.encoder_filters[1], config.encoder_filters[2]},
             {config.encoder_filters[2], dec[0]},
             {dec[0], dec[1]},
             {dec[1], dec[2]},
             {dec[2], 1}}};
  }
};

// Glorot-uniform weights, zero biases; the draw order is fixed so a seed
// pins the full parameter vector.
template <typename Scalar>
Model<Scalar> init_model(const CAEConfig& config) {
  config.validate();
  Model<Scalar> model;
  model.config = config;
  Rng rng(config.seed);
  const auto io = model.layer_io();
  for (std::size_t l = 0; l < 7; ++l) {
    const auto [in, out] = io[l];
    const double limit = std::sqrt(6.0 / (9.0 * in + 9.0 * out));
    std::uniform_real_distribution<double> uniform(-limit, limit);
    model.layers[l].w.resize(out, in * 9);
    for (Eigen::Index i = 0; i < model.layers[l].w.rows(); ++i) {
      for (Eigen::Index j = 0; j < model.layers[l].w.cols(); ++j) {
        model.layers[l].w(i, j) = static_cast<Scalar>(uniform(rng));
      }
    }
    model.layers[l].b.setZero(out);
    model.adam_m[l].setZero(out, in);
    model.adam_v[l].setZero(out, in);
  }
  return model;
}

namespace detail {

// Per-sample scratch: activations, patch buffers and gradients for one
// forward/backward pass. Reused across samples; all buffers are sized on
// first use and keep their capacity.
template <typename Scalar>
struct Workspace {
  Matrix<Scalar> input;  // 1 x (rows*cols)

  std::array<Matrix<Scalar>, 3> enc_col;
  std::array<Matrix<Scalar>, 3> enc_act;   // post-ReLU conv output
  std::array<Matrix<Scalar>, 3> enc_pool;  // pooled map
  std::array<ArgMatrix, 3> enc_arg;

  Vector<Scalar> u;       // raw bottleneck
  Vector<Scalar> u_hat;   // normalized (or copied) bottleneck
  double u_norm = 0.0;

  Matrix<Scalar> bottleneck_map;  // u_hat viewed as channels x (h*w)
  std::array<Matrix<Scalar>, 3> dec_col;
  std::array<Matrix<Scalar>, 3> dec_act;
  std::array<Matrix<Scalar>, 3> dec_up;
  Matrix<Scalar> out_col;
  Matrix<Scalar> output;

  // backward scratch
  Matrix<Scalar> g_a, g_b, g_col;
};

template <typename Scalar>
struct Dims {
  // spatial dims entering each encoder conv / leaving each pool
  std::array<std::pair<int, int>, 3> enc_in, enc_out;
  // spatial dims entering each decoder conv / leaving each upsample
  std::array<std::pair<int, int>, 3> dec_in, dec_out;
  std::array<std::pair<int, int>, 3> up_factor;

  explicit Dims(const CAEConfig& cfg) {
    int h = cfg.input_rows, w = cfg.input_cols;
    for (int i = 0; i < 3; ++i) {
      enc_in[static_cast<std::size_t>(i)] = {h, w};
      h /= cfg.pool_sizes[static_cast<std::size_t>(i)][0];
      w /= cfg.pool_sizes[static_cast<std::size_t>(i)][1];
      enc_out[static_cast<std::size_t>(i)] = {h, w};
    }
    for (int j = 0; j < 3; ++j) {
      const auto& pool = cfg.pool_sizes[static_cast<std::size_t>(2 - j)];
      up_factor[static_cast<std::size_t>(j)] = {pool[0], pool[1]};
      dec_in[static_cast<std::size_t>(j)] = {h, w};
      h *= pool[0];
      w *= pool[1];
      dec_out[static_cast<std::size_t>(j)] = {h, w};
    }
  }
};

template <typename Scalar>
void relu_inplace(Matrix<Scalar>& m) {
  m = m.cwiseMax(Scalar(0));
}

// Forward pass; fills the workspace so a backward pass can follow. Returns
// the reconstruction MSE, or 0.0 when stopping at the bottleneck.
template <typename Scalar>
double forward_pass(const Model<Scalar>& model,
                    const Eigen::Ref<const Eigen::Matrix<float, Eigen::Dynamic, Eigen::Dynamic,
                                                         Eigen::RowMajor>>& input,
                    Workspace<Scalar>& ws, bool encode_only = false) {
  const CAEConfig& cfg = model.config;
  if (static_cast<int>(input.rows()) != cfg.input_rows ||
      static_cast<int>(input.cols()) != cfg.input_cols) {
    throw InvalidInput("cae: input is " + std::to_string(input.rows()) + "x" +
                       std::to_string(input.cols()) + ", model expects " +
                       std::to_string(cfg.input_rows) + "x" + std::to_string(cfg.input_cols));
  }
  const Dims<Scalar> dims(cfg);

  ws.input.resize(1, cfg.input_rows * cfg.input_cols);
  Eigen::Map<const Eigen::Matrix<float, Eigen::Dynamic, 1>> flat(input.data(), input.size());
  for (Eigen::Index i = 0; i < flat.size(); ++i) ws.input(0, i) = static_cast<Scalar>(flat[i]);

  const Matrix<Scalar>* current = &ws.input;
  for (std::size_t i = 0; i < 3; ++i) {
    const auto [h, w] = dims.enc_in[i];
    im2col_3x3(*current, h, w, ws.enc_col[i]);
    ws.enc_act[i].noalias() = model.layers[i].w * ws.enc_col[i];
    ws.enc_act[i].colwise() += model.layers[i].b;
    relu_inplace(ws.enc_act[i]);
    maxpool_forward(ws.enc_act[i], h, w, cfg.pool_sizes[i][0], cfg.pool_sizes[i][1],
                    ws.enc_pool[i], ws.enc_arg[i]);
    current = &ws.enc_pool[i];
  }

  const Eigen::Index m = current->size();
  ws.u = Eigen::Map<const Vector<Scalar>>(current->data(), m);
  if (cfg.l2_constrained) {
    ws.u_norm = std::sqrt(ws.u.template cast<double>().squaredNorm());
    ws.u_hat = ws.u / static_cast<Scalar>(ws.u_norm + kNormEpsilon);
  } else {
    ws.u_norm = 0.0;
    ws.u_hat = ws.u;
  }
  if (encode_only) return 0.0;

  const int bottleneck_ch = cfg.encoder_filters[2];
  ws.bottleneck_map =
      Eigen::Map<const Matrix<Scalar>>(ws.u_hat.data(), bottleneck_ch, m / bottleneck_ch);
  const Matrix<Scalar>* d_current = &ws.bottleneck_map;
  for (std::size_t j = 0; j < 3; ++j) {
    const auto [h, w] = dims.dec_in[j];
    im2col_3x3(*d_current, h, w, ws.dec_col[j]);
    ws.dec_act[j].noalias() = model.layers[3 + j].w * ws.dec_col[j];
    ws.dec_act[j].colwise() += model.layers[3 + j].b;
    relu_inplace(ws.dec_act[j]);
    upsample_forward(ws.dec_act[j], h, w, dims.up_factor[j].first, dims.up_factor[j].second,
                     ws.dec_up[j]);
    d_current = &ws.dec_up[j];
  }

  im2col_3x3(*d_current, cfg.input_rows, cfg.input_cols, ws.out_col);
  ws.output.noalias() = model.layers[6].w * ws.out_col;
  ws.output.colwise() += model.layers[6].b;

  return mse_loss(ws.output, ws.input);
}

// Backward pass over a filled workspace; accumulates parameter gradients
// (caller zeroes `grads` when starting a fresh accumulation).
template <typename Scalar>
void backward_pass(const Model<Scalar>& model, Workspace<Scalar>& ws, LayerGrads<Scalar>& grads) {
  const CAEConfig& cfg = model.config;
  const Dims<Scalar> dims(cfg);

  // d(mean squared error)/d(output)
  ws.g_a = (ws.output - ws.input) * Scalar(2.0 / static_cast<double>(ws.output.size()));

  // output conv
  grads[6].w.noalias() += ws.g_a * ws.out_col.transpose();
  grads[6].b.noalias() += ws.g_a.rowwise().sum();
  ws.g_col.noalias() = model.layers[6].w.transpose() * ws.g_a;
  ws.g_b.setZero(model.layers[6].in_channels(), cfg.input_rows * cfg.input_cols);
  col2im_3x3_add(ws.g_col, cfg.input_rows, cfg.input_cols, ws.g_b);

  // decoder blocks, last to first
  for (int j = 2; j >= 0; --j) {
    const auto ju = static_cast<std::size_t>(j);
    const auto [h, w] = dims.dec_in[ju];
    upsample_backward(ws.g_b, h, w, dims.up_factor[ju].first, dims.up_factor[ju].second, ws.g_a);
    ws.g_a = ws.g_a.cwiseProduct(
        (ws.dec_act[ju].array() > Scalar(0)).template cast<Scalar>().matrix());
    grads[3 + ju].w.noalias() += ws.g_a * ws.dec_col[ju].transpose();
    grads[3 + ju].b.noalias() += ws.g_a.rowwise().sum();
    ws.g_col.noalias() = model.layers[3 + ju].w.transpose() * ws.g_a;
    ws.g_b.setZero(model.layers[3 + ju].in_channels(), h * w);
    col2im_3x3_add(ws.g_col, h, w, ws.g_b);
  }

  // bottleneck normalization Jacobian: (I - u_hat u_hat^T) / ||u||, written
  // against the epsilon-guarded forward expression
  Eigen::Map<Vector<Scalar>> g_u(ws.g_b.data(), ws.g_b.size());
  if (cfg.l2_constrained) {
    if (ws.u_norm > 0.0) {
      const Scalar inv = Scalar(1.0 / (ws.u_norm + kNormEpsilon));
      const Scalar proj = ws.u.dot(g_u) /
                          static_cast<Scalar>(ws.u_norm * (ws.u_norm + kNormEpsilon) *
                                              (ws.u_norm + kNormEpsilon));
      g_u = g_u * inv - ws.u * proj;
    } else {
      g_u.setZero();
    }
  }

  // encoder blocks, last to first
  Matrix<Scalar> g_pool =
      Eigen::Map<const Matrix<Scalar>>(ws.g_b.data(), cfg.encoder_filters[2],
                                       ws.g_b.size() / cfg.encoder_filters[2]);
  for (int i = 2; i >= 0; --i) {
    const auto iu = static_cast<std::size_t>(i);
    const auto [h, w] = dims.enc_in[iu];
    ws.g_a.setZero(ws.enc_act[iu].rows(), ws.enc_act[iu].cols());
    maxpool_backward(g_pool, ws.enc_arg[iu], ws.g_a);
    ws.g_a = ws.g_a.cwiseProduct(
        (ws.enc_act[iu].array() > Scalar(0)).template cast<Scalar>().matrix());
    grads[iu].w.noalias() += ws.g_a * ws.enc_col[iu].transpose();
    grads[iu].b.noalias() += ws.g_a.rowwise().sum();
    if (i > 0) {
      ws.g_col.noalias() = model.layers[iu].w.transpose() * ws.g_a;
      ws.g_b.setZero(model.layers[iu].in_channels(), h * w);
      col2im_3x3_add(ws.g_col, h, w, ws.g_b);
      g_pool = ws.g_b;
    }
  }
}

template <typename Scalar>
void zero_grads(const Model<Scalar>& model, LayerGrads<Scalar>& grads) {
  const auto io = model.layer_io();
  for (std::size_t l = 0; l < 7; ++l) grads[l].setZero(io[l].second, io[l].first);
}

template <typename Scalar>
void scale_grads(LayerGrads<Scalar>& grads, Scalar factor) {
  for (auto& g : grads) {
    g.w *= factor;
    g.b *= factor;
  }
}

template <typename Scalar>
void add_grads(LayerGrads<Scalar>& into, const LayerGrads<Scalar>& from) {
  for (std::size_t l = 0; l < 7; ++l) {
    into[l].w += from[l].w;
    into[l].b += from[l].b;
  }
}

template <typename Scalar>
bool grads_finite(const LayerGrads<Scalar>& grads) {
  for (const auto& g : grads) {
    if (!g.w.allFinite() || !g.b.allFinite()) return false;
  }
  return true;
}

}  // namespace detail

// One Adam update (beta1 0.9, beta2 0.999, eps 1e-8, bias-corrected).
template <typename Scalar>
void adam_step(Model<Scalar>& model, const detail::LayerGrads<Scalar>& grads,
               double learning_rate) {
  if (!detail::grads_finite(grads)) {
    throw std::runtime_error("cae: NaN/Inf gradient at adam step " +
                             std::to_string(model.adam_step_count + 1) + "; training aborted");
  }
  constexpr double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;
  ++model.adam_step_count;
  const double c1 = 1.0 - std::pow(beta1, static_cast<double>(model.adam_step_count));
  const double c2 = 1.0 - std::pow(beta2, static_cast<double>(model.adam_step_count));
  for (std::size_t l = 0; l < 7; ++l) {
    auto& m = model.adam_m[l];
    auto& v = model.adam_v[l];
    m.w = beta1 * m.w + (1.0 - beta1) * grads[l].w;
    m.b = beta1 * m.b + (1.0 - beta1) * grads[l].b;
    v.w = beta2 * v.w + (1.0 - beta2) * grads[l].w.cwiseProduct(grads[l].w);
    v.b = beta2 * v.b + (1.0 - beta2) * grads[l].b.cwiseProduct(grads[l].b);
    model.layers[l].w -=
        (learning_rate / c1) *
        m.w.cwiseQuotient(((v.w / c2).cwiseSqrt().array() + eps).matrix());
    model.layers[l].b -=
        (learning_rate / c1) *
        m.b.cwiseQuotient(((v.b / c2).cwiseSqrt().array() + eps).matrix());
  }
}

// Encoder output for one tweet as a double vector (length 24 in the stock
// configurations). Unit norm when the model is constrained and the raw
// bottleneck is nonzero.
template <typename Scalar>
Eigen::VectorXd encode(const Model<Scalar>& model, const embedding::TweetTensor& input) {
  detail::Workspace<Scalar> ws;
  detail::forward_pass(model, input.values, ws, /*encode_only=*/true);
  return ws.u_hat.template cast<double>();
}

// Reconstruction from a bottleneck map (decoder + output conv only).
template <typename Scalar>
Tensor<Scalar> decode(const Model<Scalar>& model, const Tensor<Scalar>& rep) {
  const CAEConfig& cfg = model.config;
  if (rep.channels != cfg.encoder_filters[2] || rep.rows != cfg.bottleneck_rows() ||
      rep.cols != cfg.bottleneck_cols()) {
    throw InvalidInput("decode: representation shape mismatch");
  }
  const detail::Dims<Scalar> dims(cfg);
  Tensor<Scalar> t = rep;
  for (std::size_t j = 0; j < 3; ++j) {
    Tensor<Scalar> conv = conv2d(t, model.layers[3 + j]);
    conv.data = conv.data.cwiseMax(Scalar(0));
    t = upsample2d(conv, dims.up_factor[j].first, dims.up_factor[j].second);
  }
  return conv2d(t, model.layers[6]);
}

// Loss of the full reconstruction pipeline for one input; the finite
// difference reference in the gradient checks drives exactly this.
template <typename Scalar>
double reconstruction_loss(const Model<Scalar>& model, const embedding::TweetTensor& input) {
  detail::Workspace<Scalar> ws;
  return detail::forward_pass(model, input.values, ws);
}

template <typename Scalar>
double loss_and_gradients(const Model<Scalar>& model, const embedding::TweetTensor& input,
                          detail::LayerGrads<Scalar>& grads) {
  detail::Workspace<Scalar> ws;
  detail::zero_grads(model, grads);
  const double loss = detail::forward_pass(model, input.values, ws);
  detail::backward_pass(model, ws, grads);
  return loss;
}

struct LearningCurve {
  std::vector<double> train_loss;
  std::vector<double> val_loss;
  int best_epoch = 0;  // 1-based epoch with the lowest validation loss
};

template <typename Scalar>
struct TrainResult {
  Model<Scalar> model;  // parameters restored to the best validation epoch
  LearningCurve curve;
};

// Mini-batch Adam on the reconstruction MSE with a seeded 80/20 split.
// Per-sample gradients are reduced in sample order, so a seed fixes the
// learning curve bit for bit regardless of thread count.
template <typename Scalar>
TrainResult<Scalar> train(const CAEConfig& config,
                          const std::vector<embedding::TweetTensor>& corpus) {
  config.validate();
  const auto n = static_cast<Eigen::Index>(corpus.size());
  const double keep = 1.0 - config.validation_fraction;
  if (static_cast<double>(n) < static_cast<double>(config.batch_size) / keep) {
    throw InvalidInput("cae train: corpus too small for the batch size and validation split");
  }

  Rng rng(config.seed);
  std::vector<std::size_t> order(corpus.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng);
  const auto n_val = static_cast<std::size_t>(
      std::llround(config.validation_fraction * static_cast<double>(n)));
  std::vector<std::size_t> val_idx(order.end() - static_cast<std::ptrdiff_t>(n_val), order.end());
  std::vector<std::size_t> train_idx(order.begin(),
                                     order.end() - static_cast<std::ptrdiff_t>(n_val));
  if (train_idx.size() < static_cast<std::size_t>(config.batch_size)) {
    throw InvalidInput("cae train: corpus too small for the batch size and validation split");
  }

  Model<Scalar> model = init_model<Scalar>(config);

#ifdef _OPENMP
  const int n_threads = std::max(1, std::min(omp_get_max_threads(), config.batch_size));
#else
  const int n_threads = 1;
#endif
  std::vector<detail::Workspace<Scalar>> workspaces(static_cast<std::size_t>(n_threads));
  std::vector<detail::LayerGrads<Scalar>> sample_grads(
      static_cast<std::size_t>(config.batch_size));
  std::vector<double> sample_loss(static_cast<std::size_t>(config.batch_size));
  detail::LayerGrads<Scalar> batch_grads;

  TrainResult<Scalar> result;
  double best_val = std::numeric_limits<double>::infinity();
  std::array<ConvParams<Scalar>, 7> best_params = model.layers;

  for (int epoch = 1; epoch <= config.max_epochs; ++epoch) {
    std::shuffle(train_idx.begin(), train_idx.end(), rng);
    double epoch_loss = 0.0;
    for (std::size_t start = 0; start < train_idx.size();
         start += static_cast<std::size_t>(config.batch_size)) {
      const std::size_t stop =
          std::min(train_idx.size(), start + static_cast<std::size_t>(config.batch_size));
      const auto batch_n = static_cast<int>(stop - start);
#pragma omp parallel for schedule(static) num_threads(n_threads)
      for (int s = 0; s < batch_n; ++s) {
#ifdef _OPENMP
        auto& ws = workspaces[static_cast<std::size_t>(omp_get_thread_num())];
#else
        auto& ws = workspaces[0];
#endif
        const auto& sample = corpus[train_idx[start + static_cast<std::size_t>(s)]];
        detail::zero_grads(model, sample_grads[static_cast<std::size_t>(s)]);
        sample_loss[static_cast<std::size_t>(s)] = detail::forward_pass(model, sample.values, ws);
        detail::backward_pass(model, ws, sample_grads[static_cast<std::size_t>(s)]);
      }
      detail::zero_grads(model, batch_grads);
      for (int s = 0; s < batch_n; ++s) {
        detail::add_grads(batch_grads, sample_grads[static_cast<std::size_t>(s)]);
        epoch_loss += sample_loss[static_cast<std::size_t>(s)];
      }
      detail::scale_grads(batch_grads, Scalar(1.0 / batch_n));
      adam_step(model, batch_grads, config.learning_rate);
    }
    epoch_loss /= static_cast<double>(train_idx.size());

    std::vector<double> val_losses(val_idx.size());
#pragma omp parallel for schedule(static) num_threads(n_threads)
    for (std::ptrdiff_t s = 0; s < static_cast<std::ptrdiff_t>(val_idx.size()); ++s) {
#ifdef _OPENMP
      auto& ws = workspaces[static_cast<std::size_t>(omp_get_thread_num())];
#else
      auto& ws = workspaces[0];
#endif
      val_losses[static_cast<std::size_t>(s)] =
          detail::forward_pass(model, corpus[val_idx[static_cast<std::size_t>(s)]].values, ws);
    }
    double val_loss = 0.0;
    for (const double l : val_losses) val_loss += l;
    val_loss /= static_cast<double>(val_losses.size());

    result.curve.train_loss.push_back(epoch_loss);
    result.curve.val_loss.push_back(val_loss);
    if (val_loss < best_val) {
      best_val = val_loss;
      result.curve.best_epoch = epoch;
      best_params = model.layers;
    }
  }

  model.layers = best_params;
  result.model = std::move(model);
  return result;
}

// N x representation_dim matrix of encoder outputs, row order preserved.
template <typename Scalar>
features::FeatureMatrix featurize(const Model<Scalar>& model,
                                  const std::vector<embedding::TweetTensor>& corpus,
                                  const std::string& label = "cae") {
  if (corpus.empty()) throw InvalidInput("featurize: empty corpus");
  features::FeatureMatrix fm;
  fm.method_label = label;
  fm.values.resize(static_cast<Eigen::Index>(corpus.size()), model.config.representation_dim());
#ifdef _OPENMP
  const int n_threads = omp_get_max_threads();
#else
  const int n_threads = 1;
#endif
  std::vector<detail::Workspace<Scalar>> workspaces(static_cast<std::size_t>(n_threads));
#pragma omp parallel for schedule(static) num_threads(n_threads)
  for (std::ptrdiff_t i = 0; i < static_cast<std::ptrdiff_t>(corpus.size()); ++i) {
#ifdef _OPENMP
    auto& ws = workspaces[static_cast<std::size_t>(omp_get_thread_num())];
#else
    auto& ws = workspaces[0];
#endif
    detail::forward_pass(model, corpus[static_cast<std::size_t>(i)].values, ws,
                         /*encode_only=*/true);
    fm.values.row(static_cast<Eigen::Index>(i)) = ws.u_hat.template cast<double>().transpose();
  }
  return fm;
}

namespace detail {

inline void write_config(std::ostream& os, const CAEConfig& c) {
  namespace td = tweetcluster::detail;
  td::put_u32(os, static_cast<std::uint32_t>(c.input_rows));
  td::put_u32(os, static_cast<std::uint32_t>(c.input_cols));
  for (const int f : c.encoder_filters) td::put_u32(os, static_cast<std::uint32_t>(f));
  for (const auto& [pr, pc] : c.pool_sizes) {
    td::put_u32(os, static_cast<std::uint32_t>(pr));
    td::put_u32(os, static_cast<std::uint32_t>(pc));
  }
  td::put_f64(os, c.learning_rate);
  td::put_u32(os, static_cast<std::uint32_t>(c.batch_size));
  td::put_u32(os, static_cast<std::uint32_t>(c.max_epochs));
  td::put_f64(os, c.validation_fraction);
  td::put_u32(os, c.l2_constrained ? 1 : 0);
  td::put_u32(os, static_cast<std::uint32_t>(c.seed & 0xffffffffu));
  td::put_u32(os, static_cast<std::uint32_t>(c.seed >> 32));
}

inline CAEConfig read_config(std::istream& is) {
  namespace td = tweetcluster::detail;
  CAEConfig c;
  c.input_rows = static_cast<int>(td::get_u32(is));
  c.input_cols = static_cast<int>(td::get_u32(is));
  for (int& f : c.encoder_filters) f = static_cast<int>(td::get_u32(is));
  for (auto& pool : c.pool_sizes) {
    pool[0] = static_cast<int>(td::get_u32(is));
    pool[1] = static_cast<int>(td::get_u32(is));
  }
  c.learning_rate = td::get_f64(is);
  c.batch_size = static_cast<int>(td::get_u32(is));
  c.max_epochs = static_cast<int>(td::get_u32(is));
  c.validation_fraction = td::get_f64(is);
  c.l2_constrained = td::get_u32(is) != 0;
  const std::uint64_t lo = td::get_u32(is);
  const std::uint64_t hi = td::get_u32(is);
  c.seed = lo | (hi << 32);
  return c;
}

}  // namespace detail

// Checkpoint layout: "CAE1", config fields, then per-layer weights and
// biases as little-endian f64 in declaration order.
template <typename Scalar>
void save_checkpoint(const Model<Scalar>& model, const std::filesystem::path& path) {
  atomic_write_file(path, [&](std::ostream& os) {
    os.write("CAE1", 4);
    detail::write_config(os, model.config);
    for (const auto& layer : model.layers) {
      for (Eigen::Index i = 0; i < layer.w.rows(); ++i) {
        for (Eigen::Index j = 0; j < layer.w.cols(); ++j) {
          tweetcluster::detail::put_f64(os, static_cast<double>(layer.w(i, j)));
        }
      }
      for (Eigen::Index i = 0; i < layer.b.size(); ++i) {
        tweetcluster::detail::put_f64(os, static_cast<double>(layer.b[i]));
      }
    }
  });
}

template <typename Scalar>
Model<Scalar> load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError("cannot open checkpoint: " + path.string());
  char magic[4];
  is.read(magic, 4);
  if (!is || std::string_view(magic, 4) != "CAE1") {
    throw IoError("bad checkpoint magic in " + path.string());
  }
  const CAEConfig config = detail::read_config(is);
  Model<Scalar> model = init_model<Scalar>(config);
  for (auto& layer : model.layers) {
    for (Eigen::Index i = 0; i < layer.w.rows(); ++i) {
      for (Eigen::Index j = 0; j < layer.w.cols(); ++j) {
        layer.w(i, j) = static_cast<Scalar>(tweetcluster::detail::get_f64(is));
      }
    }
    for (Eigen::Index i = 0; i < layer.b.size(); ++i) {
      layer.b[i] = static_cast<Scalar>(tweetcluster::detail::get_f64(is));
    }
  }
  if (!is) throw IoError("truncated checkpoint: " + path.string());
  return model;
}

inline void write_learning_curve_csv(const LearningCurve& curve,
                                     const std::filesystem::path& path) {
  atomic_write_file(path, [&](std::ostream& os) {
    os << "epoch,train_loss,val_loss\n";
    for (std::size_t e = 0; e < curve.train_loss.size(); ++e) {
      os << (e + 1) << ',' << tweetcluster::detail::format_double(curve.train_loss[e]) << ','
         << tweetcluster::detail::format_double(curve.val_loss[e]) << '\n';
    }
  });
}

}  // namespace tweetcluster::cae
