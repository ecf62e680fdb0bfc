#include "lexseg/nn.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <limits>

namespace lexseg::nn {

using MatRM = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using MapRM = Eigen::Map<MatRM>;
using CMapRM = Eigen::Map<const MatRM>;

namespace {

int conv_out_dim(int in, int k, int stride, int pad, int dil) {
  int eff = (k - 1) * dil + 1;
  return (in + 2 * pad - eff) / stride + 1;
}

// x[n] -> cols [C*kh*kw, Ho*Wo]
void im2col(const Tensor& x, int n, int kh, int kw, const ConvSpec& s, int ho, int wo,
            std::vector<double>& cols) {
  const int c = x.dim(1), h = x.dim(2), w = x.dim(3);
  cols.assign(static_cast<std::size_t>(c) * kh * kw * ho * wo, 0.0);
  const double* xp = x.data() + static_cast<std::size_t>(n) * c * h * w;
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++row) {
        double* out = cols.data() + row * ho * wo;
        const double* plane = xp + static_cast<std::size_t>(ci) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * s.stride - s.pad + ky * s.dilation;
          if (iy < 0 || iy >= h) {
            out += wo;
            continue;
          }
          int ix0 = -s.pad + kx * s.dilation;
          for (int ox = 0; ox < wo; ++ox, ++out) {
            int ix = ix0 + ox * s.stride;
            if (ix >= 0 && ix < w) *out = plane[static_cast<std::size_t>(iy) * w + ix];
          }
        }
      }
    }
  }
}

// Adjoint of im2col: scatter cols back into an input-shaped gradient.
void col2im(const std::vector<double>& cols, int n, int kh, int kw, const ConvSpec& s, int ho,
            int wo, Tensor& gx) {
  const int c = gx.dim(1), h = gx.dim(2), w = gx.dim(3);
  double* xp = gx.data() + static_cast<std::size_t>(n) * c * h * w;
  std::size_t row = 0;
  for (int ci = 0; ci < c; ++ci) {
    for (int ky = 0; ky < kh; ++ky) {
      for (int kx = 0; kx < kw; ++kx, ++row) {
        const double* in = cols.data() + row * ho * wo;
        double* plane = xp + static_cast<std::size_t>(ci) * h * w;
        for (int oy = 0; oy < ho; ++oy) {
          int iy = oy * s.stride - s.pad + ky * s.dilation;
          if (iy < 0 || iy >= h) {
            in += wo;
            continue;
          }
          int ix0 = -s.pad + kx * s.dilation;
          for (int ox = 0; ox < wo; ++ox, ++in) {
            int ix = ix0 + ox * s.stride;
            if (ix >= 0 && ix < w) plane[static_cast<std::size_t>(iy) * w + ix] += *in;
          }
        }
      }
    }
  }
}

}  // namespace

Tensor conv2d(const Tensor& x, const Tensor& w, const Tensor& b, const ConvSpec& spec) {
  if (x.rank() != 4 || w.rank() != 4) throw ShapeError("conv2d expects 4-d tensors");
  if (x.dim(1) != w.dim(1)) throw ShapeError("conv2d channel mismatch");
  const int n = x.dim(0), o = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int ho = conv_out_dim(x.dim(2), kh, spec.stride, spec.pad, spec.dilation);
  const int wo = conv_out_dim(x.dim(3), kw, spec.stride, spec.pad, spec.dilation);
  if (ho <= 0 || wo <= 0) throw ShapeError("conv2d output would be empty");

  Tensor y({n, o, ho, wo});
  const int kdim = x.dim(1) * kh * kw;
  std::vector<double> cols;
  CMapRM wm(w.data(), o, kdim);
  for (int i = 0; i < n; ++i) {
    im2col(x, i, kh, kw, spec, ho, wo, cols);
    CMapRM cm(cols.data(), kdim, ho * wo);
    MapRM ym(y.data() + static_cast<std::size_t>(i) * o * ho * wo, o, ho * wo);
    ym.noalias() = wm * cm;
    if (!b.empty()) {
      for (int oc = 0; oc < o; ++oc) ym.row(oc).array() += b[oc];
    }
  }
  return y;
}

Tensor conv2d_backward_input(const Tensor& gy, const Tensor& w, const std::vector<int>& x_shape,
                             const ConvSpec& spec) {
  const int n = gy.dim(0), o = gy.dim(1), ho = gy.dim(2), wo = gy.dim(3);
  const int kh = w.dim(2), kw = w.dim(3);
  const int kdim = w.dim(1) * kh * kw;
  Tensor gx(x_shape);
  CMapRM wm(w.data(), o, kdim);
  std::vector<double> cols(static_cast<std::size_t>(kdim) * ho * wo);
  for (int i = 0; i < n; ++i) {
    CMapRM gym(gy.data() + static_cast<std::size_t>(i) * o * ho * wo, o, ho * wo);
    MapRM cm(cols.data(), kdim, ho * wo);
    cm.noalias() = wm.transpose() * gym;
    col2im(cols, i, kh, kw, spec, ho, wo, gx);
  }
  return gx;
}

void conv2d_backward_params(const Tensor& gy, const Tensor& x, const ConvSpec& spec, Tensor& gw,
                            Tensor& gb) {
  const int n = gy.dim(0), o = gy.dim(1), ho = gy.dim(2), wo = gy.dim(3);
  const int kh = gw.dim(2), kw = gw.dim(3);
  const int kdim = gw.dim(1) * kh * kw;
  MapRM gwm(gw.data(), o, kdim);
  std::vector<double> cols;
  for (int i = 0; i < n; ++i) {
    im2col(x, i, kh, kw, spec, ho, wo, cols);
    CMapRM cm(cols.data(), kdim, ho * wo);
    CMapRM gym(gy.data() + static_cast<std::size_t>(i) * o * ho * wo, o, ho * wo);
    gwm.noalias() += gym * cm.transpose();
    if (!gb.empty()) {
      for (int oc = 0; oc < o; ++oc) gb[oc] += gym.row(oc).sum();
    }
  }
}

Tensor relu(const Tensor& x) {
  Tensor y = x;
  for (auto& v : y.values()) v = v > 0.0 ? v : 0.0;
  return y;
}

Tensor relu_backward(const Tensor& gy, const Tensor& x_pre) {
  Tensor gx = gy;
  const auto& xv = x_pre.values();
  auto& gv = gx.values();
  for (std::size_t i = 0; i < gv.size(); ++i)
    if (xv[i] <= 0.0) gv[i] = 0.0;
  return gx;
}

Tensor relu_backward_guided(const Tensor& gy, const Tensor& x_pre) {
  Tensor gx = gy;
  const auto& xv = x_pre.values();
  auto& gv = gx.values();
  for (std::size_t i = 0; i < gv.size(); ++i)
    if (xv[i] <= 0.0 || gv[i] <= 0.0) gv[i] = 0.0;
  return gx;
}

Tensor maxpool2(const Tensor& x, std::vector<std::int32_t>& argmax) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  const int ho = h / 2, wo = w / 2;
  Tensor y({n, c, ho, wo});
  argmax.assign(static_cast<std::size_t>(y.size()), 0);
  std::size_t oi = 0;
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const double* plane = x.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
      for (int oy = 0; oy < ho; ++oy) {
        for (int ox = 0; ox < wo; ++ox, ++oi) {
          int best = (oy * 2) * w + ox * 2;
          double bv = plane[best];
          for (int dy = 0; dy < 2; ++dy) {
            for (int dx = 0; dx < 2; ++dx) {
              int idx = (oy * 2 + dy) * w + ox * 2 + dx;
              if (plane[idx] > bv) {
                bv = plane[idx];
                best = idx;
              }
            }
          }
          y[static_cast<std::int64_t>(oi)] = bv;
          argmax[oi] = best;
        }
      }
    }
  }
  return y;
}

Tensor maxpool2_backward(const Tensor& gy, const std::vector<std::int32_t>& argmax,
                         const std::vector<int>& x_shape) {
  Tensor gx(x_shape);
  const int n = gy.dim(0), c = gy.dim(1), ho = gy.dim(2), wo = gy.dim(3);
  const int h = x_shape[2], w = x_shape[3];
  std::size_t oi = 0;
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      double* plane = gx.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
      for (int k = 0; k < ho * wo; ++k, ++oi) plane[argmax[oi]] += gy[static_cast<std::int64_t>(oi)];
    }
  }
  return gx;
}

Tensor global_avg_pool(const Tensor& x) {
  const int n = x.dim(0), c = x.dim(1);
  const std::int64_t hw = static_cast<std::int64_t>(x.dim(2)) * x.dim(3);
  Tensor y({n, c});
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const double* p = x.data() + (static_cast<std::size_t>(i) * c + ci) * hw;
      double s = 0.0;
      for (std::int64_t k = 0; k < hw; ++k) s += p[k];
      y.at(i, ci) = s / static_cast<double>(hw);
    }
  }
  return y;
}

Tensor global_avg_pool_backward(const Tensor& gy, const std::vector<int>& x_shape) {
  Tensor gx(x_shape);
  const int n = x_shape[0], c = x_shape[1];
  const std::int64_t hw = static_cast<std::int64_t>(x_shape[2]) * x_shape[3];
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      double g = gy.at(i, ci) / static_cast<double>(hw);
      double* p = gx.data() + (static_cast<std::size_t>(i) * c + ci) * hw;
      for (std::int64_t k = 0; k < hw; ++k) p[k] = g;
    }
  }
  return gx;
}

Tensor linear(const Tensor& x, const Tensor& w, const Tensor& b) {
  const int n = x.dim(0), f = x.dim(1), o = w.dim(0);
  if (w.dim(1) != f) throw ShapeError("linear feature mismatch");
  Tensor y({n, o});
  CMapRM xm(x.data(), n, f), wm(w.data(), o, f);
  MapRM ym(y.data(), n, o);
  ym.noalias() = xm * wm.transpose();
  if (!b.empty())
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < o; ++j) y.at(i, j) += b[j];
  return y;
}

Tensor linear_backward_input(const Tensor& gy, const Tensor& w) {
  const int n = gy.dim(0), o = gy.dim(1), f = w.dim(1);
  Tensor gx({n, f});
  CMapRM gym(gy.data(), n, o), wm(w.data(), o, f);
  MapRM gxm(gx.data(), n, f);
  gxm.noalias() = gym * wm;
  return gx;
}

void linear_backward_params(const Tensor& gy, const Tensor& x, Tensor& gw, Tensor& gb) {
  const int n = gy.dim(0), o = gy.dim(1), f = x.dim(1);
  CMapRM gym(gy.data(), n, o), xm(x.data(), n, f);
  MapRM gwm(gw.data(), o, f);
  gwm.noalias() += gym.transpose() * xm;
  if (!gb.empty())
    for (int i = 0; i < n; ++i)
      for (int j = 0; j < o; ++j) gb[j] += gy.at(i, j);
}

namespace {

struct LerpIdx {
  int lo, hi;
  double whi;
};

std::vector<LerpIdx> bilinear_axis(int in, int out) {
  std::vector<LerpIdx> m(static_cast<std::size_t>(out));
  const double scale = static_cast<double>(in) / out;
  for (int i = 0; i < out; ++i) {
    double src = (i + 0.5) * scale - 0.5;
    if (src < 0) src = 0;
    if (src > in - 1) src = in - 1;
    int lo = static_cast<int>(std::floor(src));
    int hi = std::min(lo + 1, in - 1);
    m[static_cast<std::size_t>(i)] = {lo, hi, src - lo};
  }
  return m;
}

}  // namespace

Tensor upsample_bilinear(const Tensor& x, int out_h, int out_w) {
  const int n = x.dim(0), c = x.dim(1), h = x.dim(2), w = x.dim(3);
  if (h == out_h && w == out_w) return x;
  Tensor y({n, c, out_h, out_w});
  auto ym = bilinear_axis(h, out_h);
  auto xm = bilinear_axis(w, out_w);
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      const double* src = x.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
      double* dst = y.data() + (static_cast<std::size_t>(i) * c + ci) * out_h * out_w;
      for (int oy = 0; oy < out_h; ++oy) {
        const auto& ry = ym[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < out_w; ++ox, ++dst) {
          const auto& rx = xm[static_cast<std::size_t>(ox)];
          double v00 = src[ry.lo * w + rx.lo], v01 = src[ry.lo * w + rx.hi];
          double v10 = src[ry.hi * w + rx.lo], v11 = src[ry.hi * w + rx.hi];
          double top = v00 + (v01 - v00) * rx.whi;
          double bot = v10 + (v11 - v10) * rx.whi;
          *dst = top + (bot - top) * ry.whi;
        }
      }
    }
  }
  return y;
}

Tensor upsample_bilinear_backward(const Tensor& gy, const std::vector<int>& x_shape) {
  const int n = gy.dim(0), c = gy.dim(1), oh = gy.dim(2), ow = gy.dim(3);
  const int h = x_shape[2], w = x_shape[3];
  if (h == oh && w == ow) return gy;
  Tensor gx(x_shape);
  auto ym = bilinear_axis(h, oh);
  auto xm = bilinear_axis(w, ow);
  for (int i = 0; i < n; ++i) {
    for (int ci = 0; ci < c; ++ci) {
      double* dst = gx.data() + (static_cast<std::size_t>(i) * c + ci) * h * w;
      const double* src = gy.data() + (static_cast<std::size_t>(i) * c + ci) * oh * ow;
      for (int oy = 0; oy < oh; ++oy) {
        const auto& ry = ym[static_cast<std::size_t>(oy)];
        for (int ox = 0; ox < ow; ++ox, ++src) {
          const auto& rx = xm[static_cast<std::size_t>(ox)];
          double g = *src;
          dst[ry.lo * w + rx.lo] += g * (1 - ry.whi) * (1 - rx.whi);
          dst[ry.lo * w + rx.hi] += g * (1 - ry.whi) * rx.whi;
          dst[ry.hi * w + rx.lo] += g * ry.whi * (1 - rx.whi);
          dst[ry.hi * w + rx.hi] += g * ry.whi * rx.whi;
        }
      }
    }
  }
  return gx;
}

Tensor concat_channels(const std::vector<const Tensor*>& xs) {
  const Tensor& first = *xs.front();
  const int n = first.dim(0), h = first.dim(2), w = first.dim(3);
  int ctotal = 0;
  for (const Tensor* t : xs) {
    if (t->dim(0) != n || t->dim(2) != h || t->dim(3) != w)
      throw ShapeError("concat_channels spatial mismatch");
    ctotal += t->dim(1);
  }
  Tensor y({n, ctotal, h, w});
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  for (int i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (const Tensor* t : xs) {
      const std::size_t block = static_cast<std::size_t>(t->dim(1)) * hw;
      std::copy_n(t->data() + i * block, block,
                  y.data() + (static_cast<std::size_t>(i) * ctotal) * hw + off);
      off += block;
    }
  }
  return y;
}

std::vector<Tensor> split_channels(const Tensor& gy, const std::vector<int>& widths) {
  const int n = gy.dim(0), h = gy.dim(2), w = gy.dim(3);
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  std::vector<Tensor> out;
  out.reserve(widths.size());
  for (int c : widths) out.emplace_back(std::vector<int>{n, c, h, w});
  const int ctotal = gy.dim(1);
  for (int i = 0; i < n; ++i) {
    std::size_t off = 0;
    for (std::size_t k = 0; k < widths.size(); ++k) {
      const std::size_t block = static_cast<std::size_t>(widths[k]) * hw;
      std::copy_n(gy.data() + (static_cast<std::size_t>(i) * ctotal) * hw + off, block,
                  out[k].data() + i * block);
      off += block;
    }
  }
  return out;
}

std::vector<double> softmax(const std::vector<double>& logits) {
  double mx = -std::numeric_limits<double>::infinity();
  for (double v : logits) mx = std::max(mx, v);
  std::vector<double> p(logits.size());
  double z = 0.0;
  for (std::size_t i = 0; i < logits.size(); ++i) {
    p[i] = std::exp(logits[i] - mx);
    z += p[i];
  }
  for (auto& v : p) v /= z;
  return p;
}

double softmax2_cross_entropy(const Tensor& logits, const std::vector<std::uint8_t>& target,
                              Tensor* grad_logits) {
  const int n = logits.dim(0), h = logits.dim(2), w = logits.dim(3);
  if (logits.dim(1) != 2) throw ShapeError("softmax2 expects 2 channels");
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  if (target.size() != static_cast<std::size_t>(n) * hw)
    throw ShapeError("target size mismatch");
  if (grad_logits) *grad_logits = Tensor(logits.shape());
  double loss = 0.0;
  const double inv = 1.0 / (static_cast<double>(n) * static_cast<double>(hw));
  for (int i = 0; i < n; ++i) {
    const double* l0 = logits.data() + (static_cast<std::size_t>(i) * 2) * hw;
    const double* l1 = l0 + hw;
    const std::uint8_t* t = target.data() + static_cast<std::size_t>(i) * hw;
    double* g0 = grad_logits ? grad_logits->data() + (static_cast<std::size_t>(i) * 2) * hw : nullptr;
    double* g1 = g0 ? g0 + hw : nullptr;
    for (std::size_t k = 0; k < hw; ++k) {
      double a = l0[k], b = l1[k];
      double m = std::max(a, b);
      double ea = std::exp(a - m), eb = std::exp(b - m);
      double z = ea + eb;
      double p1 = eb / z;
      double p_true = t[k] ? p1 : (ea / z);
      loss -= std::log(std::max(p_true, 1e-300)) * inv;
      if (g0) {
        double p0 = ea / z;
        g0[k] = (p0 - (t[k] ? 0.0 : 1.0)) * inv;
        g1[k] = (p1 - (t[k] ? 1.0 : 0.0)) * inv;
      }
    }
  }
  return loss;
}

Tensor softmax2_foreground(const Tensor& logits) {
  const int n = logits.dim(0), h = logits.dim(2), w = logits.dim(3);
  if (logits.dim(1) != 2) throw ShapeError("softmax2 expects 2 channels");
  const std::size_t hw = static_cast<std::size_t>(h) * w;
  Tensor p({n, h, w});
  for (int i = 0; i < n; ++i) {
    const double* l0 = logits.data() + (static_cast<std::size_t>(i) * 2) * hw;
    const double* l1 = l0 + hw;
    double* out = p.data() + static_cast<std::size_t>(i) * hw;
    for (std::size_t k = 0; k < hw; ++k) {
      double m = std::max(l0[k], l1[k]);
      double ea = std::exp(l0[k] - m), eb = std::exp(l1[k] - m);
      out[k] = eb / (ea + eb);
    }
  }
  return p;
}

}  // namespace lexseg::nn
