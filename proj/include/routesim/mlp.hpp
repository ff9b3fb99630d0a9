// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cmath>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <vector>

#include "routesim/rng.hpp"

namespace routesim {

// Dense rectifier network with all parameters in one flat vector
// (layer-ordered, weights row-major then biases), which keeps gradient
// checks, the optimizer, and serialization trivial.
class Mlp {
 public:
  explicit Mlp(std::vector<int> dims) : dims_(std::move(dims)) {
    if (dims_.size() < 2) throw std::invalid_argument("mlp: need >= 2 dims");
    std::size_t total = 0;
    offsets_.push_back(0);
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      total += static_cast<std::size_t>(dims_[l]) *
                   static_cast<std::size_t>(dims_[l + 1]) +
               static_cast<std::size_t>(dims_[l + 1]);
      offsets_.push_back(total);
    }
    params_.assign(total, 0.0);
  }

  static Mlp random(std::vector<int> dims, Rng& rng) {
    Mlp net(std::move(dims));
    for (std::size_t l = 0; l + 1 < net.dims_.size(); ++l) {
      double scale = std::sqrt(2.0 / static_cast<double>(net.dims_[l]));
      std::size_t wn = static_cast<std::size_t>(net.dims_[l]) *
                       static_cast<std::size_t>(net.dims_[l + 1]);
      double* w = net.params_.data() + net.offsets_[l];
      for (std::size_t i = 0; i < wn; ++i) {
        w[i] = (2.0 * rng.uniform() - 1.0) * scale;
      }
      // biases stay zero
    }
    return net;
  }

  const std::vector<int>& dims() const { return dims_; }
  int input_dim() const { return dims_.front(); }
  int output_dim() const { return dims_.back(); }
  std::size_t param_count() const { return params_.size(); }
  std::vector<double>& params() { return params_; }
  const std::vector<double>& params() const { return params_; }

  std::vector<double> forward(std::span<const double> x) const {
    if (static_cast<int>(x.size()) != input_dim()) {
      throw std::invalid_argument("mlp: input dimension mismatch");
    }
    std::vector<double> cur(x.begin(), x.end());
    std::vector<double> next;
    for (std::size_t l = 0; l + 1 < dims_.size(); ++l) {
      affine(l, cur, next);
      if (l + 2 < dims_.size()) {
        for (double& v : next) v = v > 0.0 ? v : 0.0;
      }
      cur.swap(next);
    }
    return cur;
  }

  struct Sample {
    const std::vector<double>* state;
    int action;
    double target;
  };

  // Mean Huber(delta=1) loss between Q(state)[action] and target, with the
  // exact gradient accumulated into `grad` (resized and zeroed here).
  double loss_and_gradient(std::span<const Sample> batch,
                           std::vector<double>& grad) const {
    if (batch.empty()) throw std::invalid_argument("mlp: empty batch");
    grad.assign(params_.size(), 0.0);
    double loss = 0.0;
    double inv_b = 1.0 / static_cast<double>(batch.size());
    std::size_t layers = dims_.size() - 1;
    std::vector<std::vector<double>> act(layers + 1);
    for (const Sample& s : batch) {
      if (static_cast<int>(s.state->size()) != input_dim()) {
        throw std::invalid_argument("mlp: input dimension mismatch");
      }
      act[0] = *s.state;
      for (std::size_t l = 0; l < layers; ++l) {
        affine(l, act[l], act[l + 1]);
        if (l + 1 < layers) {
          for (double& v : act[l + 1]) v = v > 0.0 ? v : 0.0;
        }
      }
      double e = act[layers][static_cast<std::size_t>(s.action)] - s.target;
      double ae = std::abs(e);
      loss += (ae <= 1.0 ? 0.5 * e * e : ae - 0.5) * inv_b;

      // Only the chosen output contributes; delta flows back from it.
      std::vector<double> delta(static_cast<std::size_t>(dims_.back()), 0.0);
      delta[static_cast<std::size_t>(s.action)] =
          std::clamp(e, -1.0, 1.0) * inv_b;
      for (std::size_t l = layers; l-- > 0;) {
        int in = dims_[l];
        int out = dims_[l + 1];
        const double* w = params_.data() + offsets_[l];
        double* gw = grad.data() + offsets_[l];
        double* gb = gw + static_cast<std::size_t>(in) * out;
        std::vector<double> prev_delta(static_cast<std::size_t>(in), 0.0);
        for (int o = 0; o < out; ++o) {
          double d = delta[static_cast<std::size_t>(o)];
          if (d == 0.0) continue;
          gb[o] += d;
          const double* wrow = w + static_cast<std::size_t>(o) * in;
          double* gwrow = gw + static_cast<std::size_t>(o) * in;
          const double* a = act[l].data();
          for (int i = 0; i < in; ++i) {
            gwrow[i] += d * a[i];
            prev_delta[static_cast<std::size_t>(i)] += d * wrow[i];
          }
        }
        if (l > 0) {
          // ReLU mask uses the post-activation values (zero iff clamped).
          for (int i = 0; i < in; ++i) {
            if (act[l][static_cast<std::size_t>(i)] <= 0.0) {
              prev_delta[static_cast<std::size_t>(i)] = 0.0;
            }
          }
        }
        delta.swap(prev_delta);
      }
    }
    return loss;
  }

 private:
  void affine(std::size_t l, const std::vector<double>& in,
              std::vector<double>& out) const {
    int ni = dims_[l];
    int no = dims_[l + 1];
    const double* w = params_.data() + offsets_[l];
    const double* b = w + static_cast<std::size_t>(ni) * no;
    out.assign(static_cast<std::size_t>(no), 0.0);
    for (int o = 0; o < no; ++o) {
      const double* wrow = w + static_cast<std::size_t>(o) * ni;
      double acc = b[o];
      for (int i = 0; i < ni; ++i) acc += wrow[i] * in[static_cast<std::size_t>(i)];
      out[static_cast<std::size_t>(o)] = acc;
    }
  }

  std::vector<int> dims_;
  std::vector<std::size_t> offsets_;
  std::vector<double> params_;
};

class AdamOptimizer {
 public:
  explicit AdamOptimizer(std::size_t n, double lr = 1e-3)
      : lr_(lr), m_(n, 0.0), v_(n, 0.0) {}

  void step(std::vector<double>& params, const std::vector<double>& grad) {
    if (params.size() != m_.size() || grad.size() != m_.size()) {
      throw std::invalid_argument("adam: size mismatch");
    }
    ++t_;
    double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t i = 0; i < params.size(); ++i) {
      m_[i] = beta1_ * m_[i] + (1.0 - beta1_) * grad[i];
      v_[i] = beta2_ * v_[i] + (1.0 - beta2_) * grad[i] * grad[i];
      double mhat = m_[i] / bc1;
      double vhat = v_[i] / bc2;
      params[i] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
    }
  }

  double learning_rate() const { return lr_; }

 private:
  double lr_;
  double beta1_ = 0.9;
  double beta2_ = 0.999;
  double eps_ = 1e-8;
  long long t_ = 0;
  std::vector<double> m_, v_;
};

}  // namespace routesim
