// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "una/autodiff.hpp"

namespace una::nn {

// Named parameter collection owned by a network. Registration order is the
// serialization order.
class ParamSet {
 public:
  ad::Value create(const std::string& name, Tensor init) {
    for (const auto& [n, v] : items_)
      if (n == name) throw ConfigError("duplicate parameter name: " + name);
    auto v = ad::param(std::move(init));
    items_.emplace_back(name, v);
    return v;
  }

  const std::vector<std::pair<std::string, ad::Value>>& items() const { return items_; }

  std::vector<ad::Value> values() const {
    std::vector<ad::Value> out;
    out.reserve(items_.size());
    for (const auto& [n, v] : items_) out.push_back(v);
    return out;
  }

  ad::Value find(const std::string& name) const {
    for (const auto& [n, v] : items_)
      if (n == name) return v;
    return nullptr;
  }

  int64_t total_size() const {
    int64_t n = 0;
    for (const auto& [name, v] : items_) n += v->val.numel();
    return n;
  }

  void set_requires_grad(bool enabled) {
    for (auto& [n, v] : items_) v->requires_grad = enabled;
  }

  void zero_grad() {
    for (auto& [n, v] : items_) {
      v->grad_alloc = false;
      v->grad = Tensor();
    }
  }

 private:
  std::vector<std::pair<std::string, ad::Value>> items_;
};

inline Tensor normal_init(std::vector<int64_t> shape, Rng& rng, double stddev = 0.02) {
  Tensor t(std::move(shape));
  for (auto& v : t.vec()) v = rng.normal(0.0, stddev);
  return t;
}

inline Tensor zeros_init(std::vector<int64_t> shape) { return Tensor(std::move(shape)); }

inline Tensor ones_init(std::vector<int64_t> shape) { return Tensor::full(std::move(shape), 1.0); }

// Adam with bias correction. Moment buffers are exposed for checkpointing.
class Adam {
 public:
  Adam(std::vector<ad::Value> params, double lr, double beta1 = 0.9, double beta2 = 0.999,
       double eps = 1e-8)
      : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), eps_(eps) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const auto& p : params_) {
      m_.emplace_back(p->val.shape());
      v_.emplace_back(p->val.shape());
    }
  }

  void zero_grad() {
    for (auto& p : params_) {
      p->grad_alloc = false;
      p->grad = Tensor();
    }
  }

  // Scales gradients so their global L2 norm is at most max_norm; returns the
  // pre-clip norm. max_norm <= 0 disables clipping.
  double clip_global_norm(double max_norm) {
    double sq = 0.0;
    for (const auto& p : params_) {
      if (!p->grad_alloc) continue;
      for (double g : p->grad.vec()) sq += g * g;
    }
    const double norm = std::sqrt(sq);
    if (max_norm > 0.0 && norm > max_norm) {
      const double s = max_norm / (norm + 1e-12);
      for (auto& p : params_) {
        if (!p->grad_alloc) continue;
        for (auto& g : p->grad.vec()) g *= s;
      }
    }
    return norm;
  }

  void step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (size_t i = 0; i < params_.size(); ++i) {
      auto& p = params_[i];
      const int64_t n = p->val.numel();
      double* m = m_[i].data();
      double* v = v_[i].data();
      double* x = p->val.data();
      const double* g = p->grad_alloc ? p->grad.data() : nullptr;
      for (int64_t j = 0; j < n; ++j) {
        const double gj = g ? g[j] : 0.0;
        m[j] = beta1_ * m[j] + (1.0 - beta1_) * gj;
        v[j] = beta2_ * v[j] + (1.0 - beta2_) * gj * gj;
        const double mhat = m[j] / bc1;
        const double vhat = v[j] / bc2;
        x[j] -= lr_ * mhat / (std::sqrt(vhat) + eps_);
      }
    }
  }

  int64_t step_count() const { return t_; }
  void set_step_count(int64_t t) { t_ = t; }
  std::vector<Tensor>& moments_m() { return m_; }
  std::vector<Tensor>& moments_v() { return v_; }
  const std::vector<Tensor>& moments_m() const { return m_; }
  const std::vector<Tensor>& moments_v() const { return v_; }
  double learning_rate() const { return lr_; }

 private:
  std::vector<ad::Value> params_;
  std::vector<Tensor> m_, v_;
  double lr_, beta1_, beta2_, eps_;
  int64_t t_ = 0;
};

// Dropout helper: multiplies by a freshly sampled inverted-scale mask during
// training, identity otherwise.
inline ad::Value dropout(const ad::Value& x, double rate, bool training, Rng& rng) {
  if (!training || rate <= 0.0) return x;
  if (rate >= 1.0) throw InvalidConfig("dropout rate must be < 1");
  Tensor mask(x->val.shape());
  const double keep = 1.0 - rate;
  for (auto& v : mask.vec()) v = rng.uniform() < keep ? 1.0 / keep : 0.0;
  return ad::mul(x, ad::constant(std::move(mask)));
}

}  // namespace una::nn
