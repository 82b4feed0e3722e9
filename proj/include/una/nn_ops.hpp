// Copyright 2026 una-toolkit authors
// License: Apache 2.0 (http://www.apache.org/licenses/LICENSE-2.0)

#pragma once

#include <cmath>
#include <utility>
#include <vector>

#include "una/autodiff.hpp"

// Convolution and normalization primitives on single-item activations
// (channels-first, no batch axis; batching is a loop over items with shared
// parameter nodes). 2-D convolutions go through im2col + GEMM; the col buffer
// is cached for the weight/input gradients.
namespace una::ad {

namespace convdet {

inline int64_t conv_out(int64_t in, int64_t k, int64_t s, int64_t p, int64_t dil = 1) {
  const int64_t eff = dil * (k - 1) + 1;
  const int64_t out = (in + 2 * p - eff) / s + 1;
  if (out < 1) throw ShapeError("convolution output would be empty");
  return out;
}

inline Tensor im2col2d(const Tensor& x, int64_t kh, int64_t kw, int64_t s, int64_t p, int64_t oh,
                       int64_t ow) {
  const int64_t C = x.dim(0), H = x.dim(1), W = x.dim(2);
  Tensor cols({C * kh * kw, oh * ow});
  double* pc = cols.data();
  const double* px = x.data();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        double* row = pc + ((c * kh + i) * kw + j) * oh * ow;
        for (int64_t a = 0; a < oh; ++a) {
          const int64_t ih = a * s - p + i;
          if (ih < 0 || ih >= H) {
            for (int64_t b = 0; b < ow; ++b) row[a * ow + b] = 0.0;
            continue;
          }
          const double* src = px + (c * H + ih) * W;
          for (int64_t b = 0; b < ow; ++b) {
            const int64_t iw = b * s - p + j;
            row[a * ow + b] = (iw >= 0 && iw < W) ? src[iw] : 0.0;
          }
        }
      }
  return cols;
}

inline void col2im2d_add(const Tensor& cols, Tensor& dx, int64_t kh, int64_t kw, int64_t s,
                         int64_t p, int64_t oh, int64_t ow) {
  const int64_t C = dx.dim(0), H = dx.dim(1), W = dx.dim(2);
  const double* pc = cols.data();
  double* px = dx.data();
  for (int64_t c = 0; c < C; ++c)
    for (int64_t i = 0; i < kh; ++i)
      for (int64_t j = 0; j < kw; ++j) {
        const double* row = pc + ((c * kh + i) * kw + j) * oh * ow;
        for (int64_t a = 0; a < oh; ++a) {
          const int64_t ih = a * s - p + i;
          if (ih < 0 || ih >= H) continue;
          double* dst = px + (c * H + ih) * W;
          for (int64_t b = 0; b < ow; ++b) {
            const int64_t iw = b * s - p + j;
            if (iw >= 0 && iw < W) dst[iw] += row[a * ow + b];
          }
        }
      }
}

}  // namespace convdet

// x: [C, H, W], w: [OC, C, kh, kw], b: [OC] or null.
inline Value conv2d(const Value& x, const Value& w, const Value& b, int64_t stride, int64_t pad) {
  if (x->val.rank() != 3 || w->val.rank() != 4 || x->val.dim(0) != w->val.dim(1))
    throw ShapeError("conv2d shape mismatch: x " + x->val.shape_str() + ", w " + w->val.shape_str());
  const int64_t C = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
  const int64_t OC = w->val.dim(0), kh = w->val.dim(2), kw = w->val.dim(3);
  const int64_t oh = convdet::conv_out(H, kh, stride, pad);
  const int64_t ow = convdet::conv_out(W, kw, stride, pad);

  Tensor cols = convdet::im2col2d(x->val, kh, kw, stride, pad, oh, ow);
  Tensor out({OC, oh, ow});
  {
    ECMap Wm(w->val.data(), OC, C * kh * kw);
    ECMap Cm(cols.data(), C * kh * kw, oh * ow);
    EMap Y(out.data(), OC, oh * ow);
    Y.noalias() = Wm * Cm;
  }
  if (b) {
    if (b->val.numel() != OC) throw ShapeError("conv2d bias size mismatch");
    for (int64_t oc = 0; oc < OC; ++oc) {
      double* row = out.data() + oc * oh * ow;
      for (int64_t i = 0; i < oh * ow; ++i) row[i] += b->val[oc];
    }
  }

  std::vector<Value> parents = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b ? b.get() : nullptr;
  const bool keep_cols = grad_mode() && (x->requires_grad || w->requires_grad);
  return detail::make(std::move(out), std::move(parents),
                      [px, pw, pb, cols = keep_cols ? std::move(cols) : Tensor(), C, H, W, OC, kh,
                       kw, stride, pad, oh, ow](Node& self) {
    ECMap G(self.grad.data(), OC, oh * ow);
    if (pb && pb->requires_grad) {
      double* db = pb->ensure_grad().data();
      for (int64_t oc = 0; oc < OC; ++oc) db[oc] += G.row(oc).sum();
    }
    if (pw->requires_grad) {
      ECMap Cm(cols.data(), C * kh * kw, oh * ow);
      EMap dW(pw->ensure_grad().data(), OC, C * kh * kw);
      dW.noalias() += G * Cm.transpose();
    }
    if (px->requires_grad) {
      Tensor dcols({C * kh * kw, oh * ow});
      ECMap Wm(pw->val.data(), OC, C * kh * kw);
      EMap dC(dcols.data(), C * kh * kw, oh * ow);
      dC.noalias() = Wm.transpose() * G;
      convdet::col2im2d_add(dcols, px->ensure_grad(), kh, kw, stride, pad, oh, ow);
    }
  });
}

// Transposed 2-D convolution. x: [IC, H, W], w: [IC, OC, kh, kw]. The output
// spatial size is passed explicitly; it must lie within the stride ambiguity
// range [(H-1)s - 2p + kh, same + s - 1].
inline Value conv_transpose2d(const Value& x, const Value& w, const Value& b, int64_t stride,
                              int64_t pad, int64_t out_h, int64_t out_w) {
  if (x->val.rank() != 3 || w->val.rank() != 4 || x->val.dim(0) != w->val.dim(0))
    throw ShapeError("conv_transpose2d shape mismatch");
  const int64_t IC = x->val.dim(0), H = x->val.dim(1), W = x->val.dim(2);
  const int64_t OC = w->val.dim(1), kh = w->val.dim(2), kw = w->val.dim(3);
  auto check_range = [&](int64_t out, int64_t in, int64_t k) {
    const int64_t lo = (in - 1) * stride - 2 * pad + k;
    if (out < lo || out > lo + stride - 1)
      throw ShapeError("conv_transpose2d output size outside valid range");
  };
  check_range(out_h, H, kh);
  check_range(out_w, W, kw);

  Tensor colsY({IC == 0 ? 0 : OC * kh * kw, H * W});
  {
    ECMap Wm(w->val.data(), IC, OC * kh * kw);
    ECMap Xm(x->val.data(), IC, H * W);
    EMap Cm(colsY.data(), OC * kh * kw, H * W);
    Cm.noalias() = Wm.transpose() * Xm;
  }
  Tensor out({OC, out_h, out_w});
  if (b) {
    if (b->val.numel() != OC) throw ShapeError("conv_transpose2d bias size mismatch");
    for (int64_t oc = 0; oc < OC; ++oc) {
      double* row = out.data() + oc * out_h * out_w;
      for (int64_t i = 0; i < out_h * out_w; ++i) row[i] = b->val[oc];
    }
  }
  {
    const double* pc = colsY.data();
    double* py = out.data();
    for (int64_t oc = 0; oc < OC; ++oc)
      for (int64_t i = 0; i < kh; ++i)
        for (int64_t j = 0; j < kw; ++j) {
          const double* row = pc + ((oc * kh + i) * kw + j) * H * W;
          for (int64_t h = 0; h < H; ++h) {
            const int64_t th = h * stride - pad + i;
            if (th < 0 || th >= out_h) continue;
            double* dst = py + (oc * out_h + th) * out_w;
            for (int64_t v = 0; v < W; ++v) {
              const int64_t tw = v * stride - pad + j;
              if (tw >= 0 && tw < out_w) dst[tw] += row[h * W + v];
            }
          }
        }
  }

  std::vector<Value> parents = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b ? b.get() : nullptr;
  return detail::make(std::move(out), std::move(parents),
                      [px, pw, pb, IC, OC, H, W, kh, kw, stride, pad, out_h, out_w](Node& self) {
    if (pb && pb->requires_grad) {
      double* db = pb->ensure_grad().data();
      for (int64_t oc = 0; oc < OC; ++oc) {
        const double* row = self.grad.data() + oc * out_h * out_w;
        double acc = 0.0;
        for (int64_t i = 0; i < out_h * out_w; ++i) acc += row[i];
        db[oc] += acc;
      }
    }
    if (!pw->requires_grad && !px->requires_grad) return;
    // Gather the output gradient into col layout (adjoint of the scatter).
    Tensor dcols({OC * kh * kw, H * W});
    {
      double* pc = dcols.data();
      const double* pg = self.grad.data();
      for (int64_t oc = 0; oc < OC; ++oc)
        for (int64_t i = 0; i < kh; ++i)
          for (int64_t j = 0; j < kw; ++j) {
            double* row = pc + ((oc * kh + i) * kw + j) * H * W;
            for (int64_t h = 0; h < H; ++h) {
              const int64_t th = h * stride - pad + i;
              const double* src = (th >= 0 && th < out_h) ? pg + (oc * out_h + th) * out_w : nullptr;
              for (int64_t v = 0; v < W; ++v) {
                const int64_t tw = v * stride - pad + j;
                row[h * W + v] = (src && tw >= 0 && tw < out_w) ? src[tw] : 0.0;
              }
            }
          }
    }
    ECMap dC(dcols.data(), OC * kh * kw, H * W);
    if (pw->requires_grad) {
      ECMap Xm(px->val.data(), IC, H * W);
      EMap dW(pw->ensure_grad().data(), IC, OC * kh * kw);
      dW.noalias() += Xm * dC.transpose();
    }
    if (px->requires_grad) {
      ECMap Wm(pw->val.data(), IC, OC * kh * kw);
      EMap dX(px->ensure_grad().data(), IC, H * W);
      dX.noalias() += Wm * dC;
    }
  });
}

// x: [C, T], w: [OC, C, k], b: [OC] or null.
inline Value conv1d(const Value& x, const Value& w, const Value& b, int64_t stride, int64_t pad,
                    int64_t dilation = 1) {
  if (x->val.rank() != 2 || w->val.rank() != 3 || x->val.dim(0) != w->val.dim(1))
    throw ShapeError("conv1d shape mismatch");
  const int64_t C = x->val.dim(0), T = x->val.dim(1);
  const int64_t OC = w->val.dim(0), k = w->val.dim(2);
  const int64_t ot = convdet::conv_out(T, k, stride, pad, dilation);

  Tensor cols({C * k, ot});
  {
    double* pc = cols.data();
    const double* px = x->val.data();
    for (int64_t c = 0; c < C; ++c)
      for (int64_t i = 0; i < k; ++i) {
        double* row = pc + (c * k + i) * ot;
        for (int64_t t = 0; t < ot; ++t) {
          const int64_t it = t * stride - pad + i * dilation;
          row[t] = (it >= 0 && it < T) ? px[c * T + it] : 0.0;
        }
      }
  }
  Tensor out({OC, ot});
  {
    ECMap Wm(w->val.data(), OC, C * k);
    ECMap Cm(cols.data(), C * k, ot);
    EMap Y(out.data(), OC, ot);
    Y.noalias() = Wm * Cm;
  }
  if (b) {
    if (b->val.numel() != OC) throw ShapeError("conv1d bias size mismatch");
    for (int64_t oc = 0; oc < OC; ++oc)
      for (int64_t t = 0; t < ot; ++t) out.at(oc, t) += b->val[oc];
  }

  std::vector<Value> parents = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b ? b.get() : nullptr;
  const bool keep_cols = grad_mode() && (x->requires_grad || w->requires_grad);
  return detail::make(std::move(out), std::move(parents),
                      [px, pw, pb, cols = keep_cols ? std::move(cols) : Tensor(), C, T, OC, k,
                       stride, pad, dilation, ot](Node& self) {
    ECMap G(self.grad.data(), OC, ot);
    if (pb && pb->requires_grad) {
      double* db = pb->ensure_grad().data();
      for (int64_t oc = 0; oc < OC; ++oc) db[oc] += G.row(oc).sum();
    }
    if (pw->requires_grad) {
      ECMap Cm(cols.data(), C * k, ot);
      EMap dW(pw->ensure_grad().data(), OC, C * k);
      dW.noalias() += G * Cm.transpose();
    }
    if (px->requires_grad) {
      Tensor dcols({C * k, ot});
      ECMap Wm(pw->val.data(), OC, C * k);
      EMap dC(dcols.data(), C * k, ot);
      dC.noalias() = Wm.transpose() * G;
      double* dx = px->ensure_grad().data();
      const double* pc = dcols.data();
      for (int64_t c = 0; c < C; ++c)
        for (int64_t i = 0; i < k; ++i) {
          const double* row = pc + (c * k + i) * ot;
          for (int64_t t = 0; t < ot; ++t) {
            const int64_t it = t * stride - pad + i * dilation;
            if (it >= 0 && it < T) dx[c * T + it] += row[t];
          }
        }
    }
  });
}

// Depthwise 1-D convolution (one filter per channel), stride 1.
// x: [C, T], w: [C, k], b: [C] or null.
inline Value conv1d_depthwise(const Value& x, const Value& w, const Value& b, int64_t pad,
                              int64_t dilation) {
  if (x->val.rank() != 2 || w->val.rank() != 2 || x->val.dim(0) != w->val.dim(0))
    throw ShapeError("conv1d_depthwise shape mismatch");
  const int64_t C = x->val.dim(0), T = x->val.dim(1), k = w->val.dim(1);
  const int64_t ot = convdet::conv_out(T, k, 1, pad, dilation);

  Tensor out({C, ot});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t t = 0; t < ot; ++t) {
      double acc = b ? b->val[c] : 0.0;
      for (int64_t i = 0; i < k; ++i) {
        const int64_t it = t - pad + i * dilation;
        if (it >= 0 && it < T) acc += x->val.at(c, it) * w->val.at(c, i);
      }
      out.at(c, t) = acc;
    }

  std::vector<Value> parents = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b ? b.get() : nullptr;
  return detail::make(std::move(out), std::move(parents),
                      [px, pw, pb, C, T, k, pad, dilation, ot](Node& self) {
    for (int64_t c = 0; c < C; ++c) {
      double db_acc = 0.0;
      for (int64_t t = 0; t < ot; ++t) {
        const double g = self.grad.at(c, t);
        db_acc += g;
        for (int64_t i = 0; i < k; ++i) {
          const int64_t it = t - pad + i * dilation;
          if (it < 0 || it >= T) continue;
          if (pw->requires_grad) pw->ensure_grad().at(c, i) += g * px->val.at(c, it);
          if (px->requires_grad) px->ensure_grad().at(c, it) += g * pw->val.at(c, i);
        }
      }
      if (pb && pb->requires_grad) pb->ensure_grad()[c] += db_acc;
    }
  });
}

// Transposed 1-D convolution. x: [IC, T], w: [IC, OC, k].
inline Value conv_transpose1d(const Value& x, const Value& w, const Value& b, int64_t stride,
                              int64_t pad, int64_t out_t) {
  if (x->val.rank() != 2 || w->val.rank() != 3 || x->val.dim(0) != w->val.dim(0))
    throw ShapeError("conv_transpose1d shape mismatch");
  const int64_t IC = x->val.dim(0), T = x->val.dim(1);
  const int64_t OC = w->val.dim(1), k = w->val.dim(2);
  const int64_t lo = (T - 1) * stride - 2 * pad + k;
  if (out_t < lo || out_t > lo + stride - 1)
    throw ShapeError("conv_transpose1d output size outside valid range");

  Tensor out({OC, out_t});
  if (b) {
    if (b->val.numel() != OC) throw ShapeError("conv_transpose1d bias size mismatch");
    for (int64_t oc = 0; oc < OC; ++oc)
      for (int64_t t = 0; t < out_t; ++t) out.at(oc, t) = b->val[oc];
  }
  for (int64_t ic = 0; ic < IC; ++ic)
    for (int64_t oc = 0; oc < OC; ++oc)
      for (int64_t i = 0; i < k; ++i) {
        const double wv = w->val.at(ic, oc, i);
        for (int64_t t = 0; t < T; ++t) {
          const int64_t to = t * stride - pad + i;
          if (to >= 0 && to < out_t) out.at(oc, to) += x->val.at(ic, t) * wv;
        }
      }

  std::vector<Value> parents = b ? std::vector<Value>{x, w, b} : std::vector<Value>{x, w};
  Node* px = x.get();
  Node* pw = w.get();
  Node* pb = b ? b.get() : nullptr;
  return detail::make(std::move(out), std::move(parents),
                      [px, pw, pb, IC, OC, T, k, stride, pad, out_t](Node& self) {
    if (pb && pb->requires_grad) {
      double* db = pb->ensure_grad().data();
      for (int64_t oc = 0; oc < OC; ++oc) {
        double acc = 0.0;
        for (int64_t t = 0; t < out_t; ++t) acc += self.grad.at(oc, t);
        db[oc] += acc;
      }
    }
    for (int64_t ic = 0; ic < IC; ++ic)
      for (int64_t oc = 0; oc < OC; ++oc)
        for (int64_t i = 0; i < k; ++i) {
          double dw_acc = 0.0;
          for (int64_t t = 0; t < T; ++t) {
            const int64_t to = t * stride - pad + i;
            if (to < 0 || to >= out_t) continue;
            const double g = self.grad.at(oc, to);
            dw_acc += g * px->val.at(ic, t);
            if (px->requires_grad) px->ensure_grad().at(ic, t) += g * pw->val.at(ic, oc, i);
          }
          if (pw->requires_grad) pw->ensure_grad().at(ic, oc, i) += dw_acc;
        }
  });
}

// Per-channel normalization over the spatial extent with learned affine:
// x: [C, H, W], gain/bias: [C].
inline Value instance_norm2d(const Value& x, const Value& gain, const Value& bias,
                             double eps = 1e-5) {
  if (x->val.rank() != 3 || gain->val.numel() != x->val.dim(0) ||
      bias->val.numel() != x->val.dim(0))
    throw ShapeError("instance_norm2d shape mismatch");
  const int64_t C = x->val.dim(0), HW = x->val.dim(1) * x->val.dim(2);
  Tensor out(x->val.shape());
  Tensor xhat(x->val.shape());
  std::vector<double> inv_std(static_cast<size_t>(C));
  for (int64_t c = 0; c < C; ++c) {
    const double* px = x->val.data() + c * HW;
    double mu = 0.0;
    for (int64_t i = 0; i < HW; ++i) mu += px[i];
    mu /= static_cast<double>(HW);
    double var = 0.0;
    for (int64_t i = 0; i < HW; ++i) var += (px[i] - mu) * (px[i] - mu);
    var /= static_cast<double>(HW);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(c)] = is;
    double* ph = xhat.data() + c * HW;
    double* po = out.data() + c * HW;
    const double g = gain->val[c], b = bias->val[c];
    for (int64_t i = 0; i < HW; ++i) {
      ph[i] = (px[i] - mu) * is;
      po[i] = g * ph[i] + b;
    }
  }
  Node* px = x.get();
  Node* pg = gain.get();
  Node* pb = bias.get();
  return detail::make(std::move(out), {x, gain, bias},
                      [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), C,
                       HW](Node& self) {
    for (int64_t c = 0; c < C; ++c) {
      const double* g = self.grad.data() + c * HW;
      const double* xh = xhat.data() + c * HW;
      double sum_g = 0.0, sum_gx = 0.0;
      for (int64_t i = 0; i < HW; ++i) {
        sum_g += g[i];
        sum_gx += g[i] * xh[i];
      }
      if (pg->requires_grad) pg->ensure_grad()[c] += sum_gx;
      if (pb->requires_grad) pb->ensure_grad()[c] += sum_g;
      if (px->requires_grad) {
        double* dx = px->ensure_grad().data() + c * HW;
        const double gamma = pg->val[c];
        const double is = inv_std[static_cast<size_t>(c)];
        const double mg = sum_g / static_cast<double>(HW);
        const double mgx = sum_gx / static_cast<double>(HW);
        for (int64_t i = 0; i < HW; ++i) dx[i] += gamma * is * (g[i] - mg - xh[i] * mgx);
      }
    }
  });
}

// Per-frame normalization over channels with per-channel affine:
// x: [C, T], gain/bias: [C]. Statistics couple channels only, never time, so
// convolutional receptive fields stay exact.
inline Value frame_norm1d(const Value& x, const Value& gain, const Value& bias, double eps = 1e-5) {
  if (x->val.rank() != 2 || gain->val.numel() != x->val.dim(0) ||
      bias->val.numel() != x->val.dim(0))
    throw ShapeError("frame_norm1d shape mismatch");
  const int64_t C = x->val.dim(0), T = x->val.dim(1);
  Tensor out(x->val.shape());
  Tensor xhat(x->val.shape());
  std::vector<double> inv_std(static_cast<size_t>(T));
  for (int64_t t = 0; t < T; ++t) {
    double mu = 0.0;
    for (int64_t c = 0; c < C; ++c) mu += x->val.at(c, t);
    mu /= static_cast<double>(C);
    double var = 0.0;
    for (int64_t c = 0; c < C; ++c) var += (x->val.at(c, t) - mu) * (x->val.at(c, t) - mu);
    var /= static_cast<double>(C);
    const double is = 1.0 / std::sqrt(var + eps);
    inv_std[static_cast<size_t>(t)] = is;
    for (int64_t c = 0; c < C; ++c) {
      xhat.at(c, t) = (x->val.at(c, t) - mu) * is;
      out.at(c, t) = gain->val[c] * xhat.at(c, t) + bias->val[c];
    }
  }
  Node* px = x.get();
  Node* pg = gain.get();
  Node* pb = bias.get();
  return detail::make(std::move(out), {x, gain, bias},
                      [px, pg, pb, xhat = std::move(xhat), inv_std = std::move(inv_std), C,
                       T](Node& self) {
    for (int64_t t = 0; t < T; ++t) {
      double sum_g = 0.0, sum_gx = 0.0;
      for (int64_t c = 0; c < C; ++c) {
        const double gc = self.grad.at(c, t) * pg->val[c];
        sum_g += gc;
        sum_gx += gc * xhat.at(c, t);
      }
      const double is = inv_std[static_cast<size_t>(t)];
      const double mg = sum_g / static_cast<double>(C);
      const double mgx = sum_gx / static_cast<double>(C);
      for (int64_t c = 0; c < C; ++c) {
        const double g = self.grad.at(c, t);
        if (px->requires_grad)
          px->ensure_grad().at(c, t) += is * (g * pg->val[c] - mg - xhat.at(c, t) * mgx);
        if (pg->requires_grad) pg->ensure_grad()[c] += g * xhat.at(c, t);
        if (pb->requires_grad) pb->ensure_grad()[c] += g;
      }
    }
  });
}

}  // namespace una::ad
