// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/geometry.hpp"
#include "foldpc/grid.hpp"
#include "foldpc/parallel.hpp"

// Folding network f = f_d o f_e.
//
// Encoder: pointwise affine layers with ReLU, then a coordinatewise max over
// points producing the codeword. Decoder: two folding layers; each one
// concatenates the codeword to every input point, runs pointwise layers with
// LeakyReLU and ends in a linear width-3 layer. "Pointwise" means one affine
// map shared by all points.

namespace foldpc {

inline constexpr double kLeakySlope = 0.2;

struct ModelDims {
  std::vector<std::size_t> encoder_widths{128, 128, 128, 128};
  std::vector<std::size_t> folding_widths{64, 64};  // hidden widths of each folding layer

  std::size_t codeword_size() const { return encoder_widths.back(); }

  friend bool operator==(const ModelDims&, const ModelDims&) = default;
};

/// Parameter block of one pointwise layer inside FoldingModel::params.
/// Weights are stored input-major: weight(i, o) = params[weight_offset + i * out + o].
struct DenseLayout {
  std::size_t in = 0;
  std::size_t out = 0;
  std::size_t weight_offset = 0;
  std::size_t bias_offset = 0;
};

struct ModelLayout {
  std::vector<DenseLayout> encoder;
  std::vector<DenseLayout> fold_first;
  std::vector<DenseLayout> fold_second;
  std::size_t parameter_count = 0;
};

inline ModelLayout make_layout(const ModelDims& dims) {
  require(!dims.encoder_widths.empty(), "encoder needs at least one layer");
  ModelLayout layout;
  std::size_t offset = 0;
  auto add = [&](std::vector<DenseLayout>& into, std::size_t in, std::size_t out) {
    require(in > 0 && out > 0, "layer widths must be positive");
    DenseLayout d{in, out, offset, offset + in * out};
    offset += in * out + out;
    into.push_back(d);
  };
  std::size_t in = 3;
  for (std::size_t w : dims.encoder_widths) {
    add(layout.encoder, in, w);
    in = w;
  }
  for (auto* fl : {&layout.fold_first, &layout.fold_second}) {
    std::size_t width = 3 + dims.codeword_size();
    for (std::size_t w : dims.folding_widths) {
      add(*fl, width, w);
      width = w;
    }
    add(*fl, width, 3);
  }
  layout.parameter_count = offset;
  return layout;
}

struct FoldingModel {
  ModelDims dims;
  ModelLayout layout;
  std::vector<double> params;
  std::uint64_t seed = 0;
};

using Codeword = std::vector<double>;
using Reconstruction = std::vector<Vec3>;

/// Uniform in [0,1) from the top 53 bits; platform independent unlike
/// std::uniform_real_distribution.
inline double unit_uniform(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

/// Weights and biases ~ U(-1/sqrt(fan_in), 1/sqrt(fan_in)), drawn layer by
/// layer in parameter order.
inline FoldingModel init_model(std::uint64_t seed, const ModelDims& dims = {}) {
  FoldingModel m;
  m.dims = dims;
  m.layout = make_layout(dims);
  m.seed = seed;
  m.params.resize(m.layout.parameter_count);
  std::mt19937_64 rng(seed);
  for (const auto* group : {&m.layout.encoder, &m.layout.fold_first, &m.layout.fold_second}) {
    for (const DenseLayout& d : *group) {
      const double bound = 1.0 / std::sqrt(static_cast<double>(d.in));
      for (std::size_t k = 0; k < d.in * d.out + d.out; ++k)
        m.params[d.weight_offset + k] = bound * (2.0 * unit_uniform(rng) - 1.0);
    }
  }
  return m;
}

namespace nn {

inline double relu(double x) { return x > 0.0 ? x : 0.0; }
inline double leaky(double x) { return x > 0.0 ? x : kLeakySlope * x; }
inline double leaky_slope(double pre) { return pre > 0.0 ? 1.0 : kLeakySlope; }

/// out[p, :] = bias + sum_i in[p, i] * W[i, :] for `rows` points. Points are
/// processed four at a time to reuse each weight row; every output element
/// still accumulates over i in ascending order.
inline void dense_forward(std::span<const double> params, const DenseLayout& d, const double* __restrict in,
                          std::size_t rows, double* __restrict out) {
  const double* __restrict w = params.data() + d.weight_offset;
  const double* __restrict b = params.data() + d.bias_offset;
  const std::size_t n_in = d.in;
  const std::size_t n_out = d.out;
  for (std::size_t p = 0; p < rows; ++p) {
    for (std::size_t k = 0; k < n_out; ++k) out[p * n_out + k] = b[k];
  }
  std::size_t p = 0;
  for (; p + 4 <= rows; p += 4) {
    double* __restrict o0 = out + p * n_out;
    double* __restrict o1 = o0 + n_out;
    double* __restrict o2 = o1 + n_out;
    double* __restrict o3 = o2 + n_out;
    const double* x = in + p * n_in;
    for (std::size_t i = 0; i < n_in; ++i) {
      const double x0 = x[i];
      const double x1 = x[n_in + i];
      const double x2 = x[2 * n_in + i];
      const double x3 = x[3 * n_in + i];
      const double* __restrict wi = w + i * n_out;
      for (std::size_t k = 0; k < n_out; ++k) {
        const double wk = wi[k];
        o0[k] += x0 * wk;
        o1[k] += x1 * wk;
        o2[k] += x2 * wk;
        o3[k] += x3 * wk;
      }
    }
  }
  for (; p < rows; ++p) {
    double* __restrict o = out + p * n_out;
    const double* x = in + p * n_in;
    for (std::size_t i = 0; i < n_in; ++i) {
      const double xi = x[i];
      const double* __restrict wi = w + i * n_out;
      for (std::size_t k = 0; k < n_out; ++k) o[k] += xi * wi[k];
    }
  }
}

/// Shared contribution of the codeword rows of a folding layer's first
/// affine map: bias + sum_j y[j] * W[3 + j, :].
inline std::vector<double> codeword_term(std::span<const double> params, const DenseLayout& d,
                                         std::span<const double> y) {
  const double* w = params.data() + d.weight_offset;
  std::vector<double> c(params.begin() + static_cast<std::ptrdiff_t>(d.bias_offset),
                        params.begin() + static_cast<std::ptrdiff_t>(d.bias_offset + d.out));
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double* wj = w + (3 + j) * d.out;
    for (std::size_t k = 0; k < d.out; ++k) c[k] += y[j] * wj[k];
  }
  return c;
}

/// Activations of one folding layer for a block of points, kept for backprop.
/// Matrices are row-major with one row per point.
struct FoldTrace {
  std::vector<std::vector<double>> pre;  // pre-activations of hidden layers
  std::vector<std::vector<double>> act;  // activations of hidden layers
};

/// One folding layer applied to `rows` points `u` (rows x 3); writes rows x 3
/// to `out`. `shared` is codeword_term() of the first affine map.
inline void fold_layer(std::span<const double> params, const std::vector<DenseLayout>& layers,
                       std::span<const double> shared, const double* u, std::size_t rows, double* out,
                       FoldTrace& trace) {
  const DenseLayout& first = layers.front();
  const double* w = params.data() + first.weight_offset;
  trace.pre.resize(layers.size() - 1);
  trace.act.resize(layers.size() - 1);
  std::vector<double> cur(rows * first.out);
  for (std::size_t p = 0; p < rows; ++p) {
    double* o = cur.data() + p * first.out;
    for (std::size_t k = 0; k < first.out; ++k) o[k] = shared[k];
    for (std::size_t a = 0; a < 3; ++a) {
      const double ua = u[3 * p + a];
      const double* wa = w + a * first.out;
      for (std::size_t k = 0; k < first.out; ++k) o[k] += ua * wa[k];
    }
  }
  for (std::size_t l = 0; l + 1 < layers.size(); ++l) {
    if (l > 0) {
      trace.pre[l].resize(rows * layers[l].out);
      dense_forward(params, layers[l], trace.act[l - 1].data(), rows, trace.pre[l].data());
    } else {
      trace.pre[0] = std::move(cur);
    }
    trace.act[l] = trace.pre[l];
    for (double& v : trace.act[l]) v = leaky(v);
  }
  if (layers.size() == 1) {
    std::copy(cur.begin(), cur.end(), out);
    return;
  }
  dense_forward(params, layers.back(), trace.act.back().data(), rows, out);
}

}  // namespace nn

/// Per-point encoder features for a contiguous block of points.
inline std::vector<double> encoder_features(const FoldingModel& model, std::span<const Vec3> points) {
  const auto& layers = model.layout.encoder;
  std::vector<double> cur(points.size() * 3);
  for (std::size_t p = 0; p < points.size(); ++p) {
    cur[3 * p] = points[p].x;
    cur[3 * p + 1] = points[p].y;
    cur[3 * p + 2] = points[p].z;
  }
  std::vector<double> next;
  for (const DenseLayout& d : layers) {
    next.resize(points.size() * d.out);
    nn::dense_forward(model.params, d, cur.data(), points.size(), next.data());
    for (double& v : next) v = nn::relu(v);
    cur.swap(next);
  }
  return cur;
}

struct EncodedCloud {
  Codeword codeword;
  std::vector<std::size_t> argmax;  // lowest point index attaining each channel's max
};

inline EncodedCloud encode_cloud_with_argmax(const FoldingModel& model, std::span<const Vec3> points,
                                             const Execution& exec = {}) {
  require(!points.empty(), "cannot encode an empty cloud");
  const std::size_t width = model.dims.codeword_size();
  const std::size_t chunks = chunk_count(points.size());
  std::vector<EncodedCloud> partial(chunks);
  parallel_chunks(points.size(), exec, [&](std::size_t c, std::size_t begin, std::size_t end) {
    const std::vector<double> f = encoder_features(model, points.subspan(begin, end - begin));
    EncodedCloud& e = partial[c];
    e.codeword.assign(f.begin(), f.begin() + static_cast<std::ptrdiff_t>(width));
    e.argmax.assign(width, begin);
    for (std::size_t p = 1; p < end - begin; ++p) {
      for (std::size_t k = 0; k < width; ++k) {
        if (f[p * width + k] > e.codeword[k]) {
          e.codeword[k] = f[p * width + k];
          e.argmax[k] = begin + p;
        }
      }
    }
  });
  EncodedCloud out = std::move(partial[0]);
  for (std::size_t c = 1; c < chunks; ++c) {
    for (std::size_t k = 0; k < width; ++k) {
      if (partial[c].codeword[k] > out.codeword[k]) {
        out.codeword[k] = partial[c].codeword[k];
        out.argmax[k] = partial[c].argmax[k];
      }
    }
  }
  for (double v : out.codeword) {
    if (!std::isfinite(v)) fail(ErrorKind::numeric, "non-finite encoder activation");
  }
  return out;
}

/// y = f_e(X): coordinatewise max of the pointwise encoder output.
inline Codeword encode_cloud(const FoldingModel& model, std::span<const Vec3> points, const Execution& exec = {}) {
  return encode_cloud_with_argmax(model, points, exec).codeword;
}

inline std::vector<double> flatten(std::span<const Vec3> points) {
  std::vector<double> out(points.size() * 3);
  for (std::size_t p = 0; p < points.size(); ++p) {
    out[3 * p] = points[p].x;
    out[3 * p + 1] = points[p].y;
    out[3 * p + 2] = points[p].z;
  }
  return out;
}

/// X~ = FL(FL(G, y), y); index-aligned with the grid.
inline Reconstruction fold(const FoldingModel& model, const Grid& grid, std::span<const double> y,
                           const Execution& exec = {}) {
  require(y.size() == model.dims.codeword_size(), "codeword size mismatch");
  for (double v : y) require(std::isfinite(v), "codeword must be finite");
  const auto shared_first = nn::codeword_term(model.params, model.layout.fold_first.front(), y);
  const auto shared_second = nn::codeword_term(model.params, model.layout.fold_second.front(), y);
  const std::vector<double> lattice = flatten(grid.points);
  Reconstruction out(grid.points.size());
  parallel_chunks(grid.points.size(), exec, [&](std::size_t, std::size_t begin, std::size_t end) {
    const std::size_t rows = end - begin;
    nn::FoldTrace trace;
    std::vector<double> mid(rows * 3), last(rows * 3);
    nn::fold_layer(model.params, model.layout.fold_first, shared_first, lattice.data() + 3 * begin, rows, mid.data(),
                   trace);
    nn::fold_layer(model.params, model.layout.fold_second, shared_second, mid.data(), rows, last.data(), trace);
    for (std::size_t p = 0; p < rows; ++p) out[begin + p] = {last[3 * p], last[3 * p + 1], last[3 * p + 2]};
  });
  for (const Vec3& p : out) {
    if (!is_finite(p)) fail(ErrorKind::numeric, "non-finite folded point");
  }
  return out;
}

}  // namespace foldpc
