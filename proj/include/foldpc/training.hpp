// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "foldpc/error.hpp"
#include "foldpc/folding_model.hpp"
#include "foldpc/grid.hpp"
#include "foldpc/loss.hpp"
#include "foldpc/parallel.hpp"
#include "foldpc/spatial_index.hpp"

namespace foldpc {

struct TrainConfig {
  std::uint32_t iterations = 5000;
  double learning_rate = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  std::uint64_t seed = 0;

  friend bool operator==(const TrainConfig&, const TrainConfig&) = default;
};

struct LossAndGrad {
  LossReport loss;
  std::vector<double> gradient;  // same layout as FoldingModel::params
};

namespace detail {

/// Backprop of one folding layer over a block of `rows` points. `delta`
/// holds dL/d(output) (rows x 3) and is consumed. Accumulates into `grad`
/// (indexed relative to `base`) and writes dL/d(input points) to `d_in`.
/// The codeword rows of the first affine map are skipped; they are filled in
/// from the first layer's bias gradient once all points are summed.
inline void fold_layer_backward(std::span<const double> params, const std::vector<DenseLayout>& layers,
                                const nn::FoldTrace& trace, const double* u, std::size_t rows,
                                std::vector<double> delta, double* grad, std::size_t base, double* d_in) {
  const std::size_t hidden = layers.size() - 1;
  std::vector<double> prev;
  for (std::size_t l = layers.size(); l-- > 0;) {
    const DenseLayout& d = layers[l];
    const std::size_t n_out = d.out;
    if (l < hidden) {
      const std::vector<double>& pre = trace.pre[l];
      for (std::size_t k = 0; k < rows * n_out; ++k) delta[k] *= nn::leaky_slope(pre[k]);
    }
    double* __restrict gb = grad + (d.bias_offset - base);
    for (std::size_t p = 0; p < rows; ++p) {
      const double* dp = delta.data() + p * n_out;
      for (std::size_t k = 0; k < n_out; ++k) gb[k] += dp[k];
    }
    const double* __restrict w = params.data() + d.weight_offset;
    double* __restrict gw = grad + (d.weight_offset - base);
    const std::size_t n_in = l == 0 ? 3 : d.in;
    const double* input = l == 0 ? u : trace.act[l - 1].data();
    double* target = d_in;
    if (l > 0) {
      prev.assign(rows * n_in, 0.0);
      target = prev.data();
    }
    for (std::size_t p = 0; p < rows; ++p) {
      const double* __restrict dp = delta.data() + p * n_out;
      const double* __restrict xp = input + p * (l == 0 ? 3 : n_in);
      for (std::size_t i = 0; i < n_in; ++i) {
        const double xi = xp[i];
        const double* __restrict wi = w + i * n_out;
        double* __restrict gi = gw + i * n_out;
        double s = 0.0;
        for (std::size_t k = 0; k < n_out; ++k) {
          gi[k] += xi * dp[k];
          s += wi[k] * dp[k];
        }
        target[p * n_in + i] = s;
      }
    }
    if (l > 0) delta.swap(prev);
  }
}

/// Completes codeword-row gradients of a folding layer and adds its dL/dy.
inline void codeword_rows(std::span<const double> params, const DenseLayout& first, std::span<const double> y,
                          std::vector<double>& grad, std::vector<double>& d_y) {
  const double* w = params.data() + first.weight_offset;
  const double* gb = grad.data() + first.bias_offset;
  for (std::size_t j = 0; j < y.size(); ++j) {
    const double* wj = w + (3 + j) * first.out;
    double* gj = grad.data() + first.weight_offset + (3 + j) * first.out;
    double s = 0.0;
    for (std::size_t k = 0; k < first.out; ++k) {
      gj[k] = y[j] * gb[k];
      s += wj[k] * gb[k];
    }
    d_y[j] += s;
  }
}

inline void encoder_backward(const FoldingModel& model, std::span<const Vec3> cloud, const EncodedCloud& enc,
                             std::span<const double> d_y, std::vector<double>& grad) {
  const auto& layers = model.layout.encoder;
  const std::size_t width = model.dims.codeword_size();
  std::vector<std::size_t> points(enc.argmax);
  std::sort(points.begin(), points.end());
  points.erase(std::unique(points.begin(), points.end()), points.end());

  std::vector<std::vector<double>> inputs(layers.size());
  std::vector<std::vector<double>> pre(layers.size());
  std::vector<double> delta, prev;
  for (std::size_t p : points) {
    std::vector<double> cur{cloud[p].x, cloud[p].y, cloud[p].z};
    for (std::size_t l = 0; l < layers.size(); ++l) {
      inputs[l] = cur;
      pre[l].resize(layers[l].out);
      nn::dense_forward(model.params, layers[l], cur.data(), 1, pre[l].data());
      cur = pre[l];
      for (double& v : cur) v = nn::relu(v);
    }
    delta.assign(width, 0.0);
    for (std::size_t k = 0; k < width; ++k) {
      if (enc.argmax[k] == p) delta[k] = d_y[k];
    }
    for (std::size_t l = layers.size(); l-- > 0;) {
      const DenseLayout& d = layers[l];
      for (std::size_t k = 0; k < d.out; ++k) {
        if (!(pre[l][k] > 0.0)) delta[k] = 0.0;
      }
      for (std::size_t k = 0; k < d.out; ++k) grad[d.bias_offset + k] += delta[k];
      const double* w = model.params.data() + d.weight_offset;
      double* gw = grad.data() + d.weight_offset;
      prev.assign(d.in, 0.0);
      for (std::size_t i = 0; i < d.in; ++i) {
        const double xi = inputs[l][i];
        double s = 0.0;
        for (std::size_t k = 0; k < d.out; ++k) {
          gw[i * d.out + k] += xi * delta[k];
          s += w[i * d.out + k] * delta[k];
        }
        prev[i] = s;
      }
      delta.swap(prev);
    }
  }
}

}  // namespace detail

/// L = chamfer + repulsion of the model's fold of `grid` onto `cloud`, with
/// the exact gradient for the current nearest-neighbour pairings.
inline LossAndGrad loss_and_grad(const FoldingModel& model, std::span<const Vec3> cloud,
                                 const SpatialIndex& cloud_index, const Grid& grid, const Execution& exec = {}) {
  require(!cloud.empty(), "loss needs a nonempty cloud");
  require(grid.size() >= 1 && grid.points.size() == grid.size(), "loss needs a nonempty grid");

  const EncodedCloud enc = encode_cloud_with_argmax(model, cloud, exec);
  const auto& fl1 = model.layout.fold_first;
  const auto& fl2 = model.layout.fold_second;
  const std::vector<double> shared1 = nn::codeword_term(model.params, fl1.front(), enc.codeword);
  const std::vector<double> shared2 = nn::codeword_term(model.params, fl2.front(), enc.codeword);
  const std::vector<double> lattice = flatten(grid.points);

  struct ChunkState {
    nn::FoldTrace first, second;
    std::vector<double> mid, last;
  };
  std::vector<ChunkState> states(chunk_count(grid.size()));
  Reconstruction recon(grid.size());
  parallel_chunks(grid.size(), exec, [&](std::size_t c, std::size_t begin, std::size_t end) {
    const std::size_t rows = end - begin;
    ChunkState& st = states[c];
    st.mid.resize(rows * 3);
    st.last.resize(rows * 3);
    nn::fold_layer(model.params, fl1, shared1, lattice.data() + 3 * begin, rows, st.mid.data(), st.first);
    nn::fold_layer(model.params, fl2, shared2, st.mid.data(), rows, st.last.data(), st.second);
    for (std::size_t p = 0; p < rows; ++p) recon[begin + p] = {st.last[3 * p], st.last[3 * p + 1], st.last[3 * p + 2]};
  });
  for (const Vec3& p : recon) {
    if (!is_finite(p)) fail(ErrorKind::numeric, "non-finite folded point");
  }
  const Correspondences corr = correspond(cloud, cloud_index, recon, exec);

  LossAndGrad out;
  out.loss.chamfer = chamfer_from(corr);
  out.loss.repulsion = repulsion_from(corr);
  out.loss.total = out.loss.chamfer + out.loss.repulsion;
  if (!std::isfinite(out.loss.total)) fail(ErrorKind::numeric, "non-finite loss");

  const std::vector<Vec3> d_recon = loss_gradient_wrt_recon(cloud, recon, corr);
  const std::size_t base = fl1.front().weight_offset;
  const std::size_t decoder_size = model.layout.parameter_count - base;
  std::vector<std::vector<double>> partial(states.size());
  parallel_chunks(grid.size(), exec, [&](std::size_t c, std::size_t begin, std::size_t end) {
    const std::size_t rows = end - begin;
    std::vector<double>& acc = partial[c];
    acc.assign(decoder_size, 0.0);
    ChunkState& st = states[c];
    std::vector<double> d_last(rows * 3), d_mid(rows * 3), d_first(rows * 3);
    for (std::size_t p = 0; p < rows; ++p) {
      d_last[3 * p] = d_recon[begin + p].x;
      d_last[3 * p + 1] = d_recon[begin + p].y;
      d_last[3 * p + 2] = d_recon[begin + p].z;
    }
    detail::fold_layer_backward(model.params, fl2, st.second, st.mid.data(), rows, std::move(d_last), acc.data(),
                                base, d_mid.data());
    detail::fold_layer_backward(model.params, fl1, st.first, lattice.data() + 3 * begin, rows, std::move(d_mid),
                                acc.data(), base, d_first.data());
  });

  out.gradient.assign(model.layout.parameter_count, 0.0);
  for (const auto& acc : partial) {
    for (std::size_t k = 0; k < decoder_size; ++k) out.gradient[base + k] += acc[k];
  }
  std::vector<double> d_y(model.dims.codeword_size(), 0.0);
  detail::codeword_rows(model.params, fl1.front(), enc.codeword, out.gradient, d_y);
  detail::codeword_rows(model.params, fl2.front(), enc.codeword, out.gradient, d_y);
  detail::encoder_backward(model, cloud, enc, d_y, out.gradient);

  for (double g : out.gradient) {
    if (!std::isfinite(g)) fail(ErrorKind::numeric, "non-finite gradient");
  }
  return out;
}

inline LossAndGrad loss_and_grad(const FoldingModel& model, std::span<const Vec3> cloud, const Grid& grid,
                                 const Execution& exec = {}) {
  const SpatialIndex index(cloud);
  return loss_and_grad(model, cloud, index, grid, exec);
}

/// Loss only (no gradient), same pairing rules.
inline LossReport evaluate_loss(std::span<const Vec3> cloud, std::span<const Vec3> recon, const Execution& exec = {}) {
  const SpatialIndex index(cloud);
  const Correspondences corr = correspond(cloud, index, recon, exec);
  LossReport r;
  r.chamfer = chamfer_from(corr);
  r.repulsion = repulsion_from(corr);
  r.total = r.chamfer + r.repulsion;
  return r;
}

class Adam {
 public:
  Adam(std::size_t size, const TrainConfig& config) : config_(config), m_(size, 0.0), v_(size, 0.0) {}

  void step(std::vector<double>& params, std::span<const double> grad) {
    ++t_;
    const double c1 = 1.0 - std::pow(config_.beta1, static_cast<double>(t_));
    const double c2 = 1.0 - std::pow(config_.beta2, static_cast<double>(t_));
    for (std::size_t k = 0; k < params.size(); ++k) {
      m_[k] = config_.beta1 * m_[k] + (1.0 - config_.beta1) * grad[k];
      v_[k] = config_.beta2 * v_[k] + (1.0 - config_.beta2) * grad[k] * grad[k];
      const double m_hat = m_[k] / c1;
      const double v_hat = v_[k] / c2;
      params[k] -= config_.learning_rate * m_hat / (std::sqrt(v_hat) + config_.epsilon);
    }
  }

 private:
  TrainConfig config_;
  std::vector<double> m_;
  std::vector<double> v_;
  std::uint64_t t_ = 0;
};

struct TrainResult {
  FoldingModel model;
  Grid grid;
  Codeword codeword;
  Reconstruction reconstruction;
  LossReport initial_loss;  // loss of the untrained model
  LossReport final_loss;    // loss of the returned reconstruction
};

using TrainObserver = std::function<void(std::uint32_t iteration, const LossReport&)>;

/// Full-batch Adam overfitting of the folding network to one cloud.
/// Bit-deterministic in (cloud, config, dims); independent of exec.threads.
inline TrainResult train(std::span<const Vec3> cloud, const TrainConfig& config, const Execution& exec = {},
                         const ModelDims& dims = {}, const TrainObserver& observer = {}) {
  require(!cloud.empty(), "cannot train on an empty cloud");
  require(config.learning_rate > 0.0 && config.beta1 >= 0.0 && config.beta1 < 1.0 && config.beta2 >= 0.0 &&
              config.beta2 < 1.0 && config.epsilon > 0.0,
          "invalid optimizer settings");
  TrainResult r;
  r.model = init_model(config.seed, dims);
  r.grid = make_grid(cloud.size());
  const SpatialIndex cloud_index(cloud);
  Adam adam(r.model.params.size(), config);

  for (std::uint32_t it = 0; it < config.iterations; ++it) {
    LossAndGrad lg;
    try {
      lg = loss_and_grad(r.model, cloud, cloud_index, r.grid, exec);
    } catch (const Error& e) {
      fail(ErrorKind::numeric, "training diverged at iteration " + std::to_string(it) + ": " + e.what());
    }
    if (it == 0) r.initial_loss = lg.loss;
    if (observer) observer(it, lg.loss);
    adam.step(r.model.params, lg.gradient);
  }

  try {
    r.codeword = encode_cloud(r.model, cloud, exec);
    r.reconstruction = fold(r.model, r.grid, r.codeword, exec);
  } catch (const Error& e) {
    fail(ErrorKind::numeric, "training diverged at iteration " + std::to_string(config.iterations) + ": " + e.what());
  }
  r.final_loss = evaluate_loss(cloud, r.reconstruction, exec);
  if (config.iterations == 0) r.initial_loss = r.final_loss;
  return r;
}

}  // namespace foldpc
