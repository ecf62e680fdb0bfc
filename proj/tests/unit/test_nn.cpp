#include "doctest.h"

#include <cmath>
#include <vector>

#include "lexseg/common.hpp"
#include "lexseg/nn.hpp"
#include "lexseg/tensor.hpp"

using lexseg::Rng;
using lexseg::Tensor;
namespace nn = lexseg::nn;

namespace {

Tensor random_tensor(const std::vector<int>& shape, Rng& rng, double lo = -1.0, double hi = 1.0) {
  Tensor t(shape);
  for (std::size_t i = 0; i < t.size(); ++i) t[i] = rng.uniform(lo, hi);
  return t;
}

double dot(const Tensor& a, const Tensor& b) {
  REQUIRE(a.size() == b.size());
  double s = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
  return s;
}

// Direct nested-loop convolution used as the oracle for the im2col path.
Tensor conv2d_naive(const Tensor& x, const Tensor& w, const Tensor& b, const nn::ConvSpec& spec) {
  const int n = x.dim(0), ci = x.dim(1), h = x.dim(2), wd = x.dim(3);
  const int co = w.dim(0), kh = w.dim(2), kw = w.dim(3);
  const int oh = (h + 2 * spec.pad - spec.dilation * (kh - 1) - 1) / spec.stride + 1;
  const int ow = (wd + 2 * spec.pad - spec.dilation * (kw - 1) - 1) / spec.stride + 1;
  Tensor y({n, co, oh, ow});
  for (int in = 0; in < n; ++in)
    for (int oc = 0; oc < co; ++oc)
      for (int oy = 0; oy < oh; ++oy)
        for (int ox = 0; ox < ow; ++ox) {
          double acc = b.size() ? b[oc] : 0.0;
          for (int ic = 0; ic < ci; ++ic)
            for (int ky = 0; ky < kh; ++ky)
              for (int kx = 0; kx < kw; ++kx) {
                const int iy = oy * spec.stride - spec.pad + ky * spec.dilation;
                const int ix = ox * spec.stride - spec.pad + kx * spec.dilation;
                if (iy < 0 || iy >= h || ix < 0 || ix >= wd) continue;
                acc += x[((static_cast<std::size_t>(in) * ci + ic) * h + iy) * wd + ix] *
                       w[((static_cast<std::size_t>(oc) * ci + ic) * kh + ky) * kw + kx];
              }
          y[((static_cast<std::size_t>(in) * co + oc) * oh + oy) * ow + ox] = acc;
        }
  return y;
}

}  // namespace

TEST_CASE("image round trip between u8 and planar double") {
  lexseg::ImageU8 im = lexseg::ImageU8::filled(5, 4, 0, 0, 0);
  Rng rng(11);
  for (int y = 0; y < im.height; ++y)
    for (int x = 0; x < im.width; ++x) {
      std::uint8_t* p = im.px(x, y);
      for (int c = 0; c < 3; ++c) p[c] = static_cast<std::uint8_t>(rng.uniform_index(256));
    }
  lexseg::ImageTensor t = lexseg::to_image_tensor(im);
  CHECK(t.width == 5);
  CHECK(t.height == 4);
  lexseg::ImageU8 back = lexseg::to_image_u8(t);
  for (std::size_t i = 0; i < im.rgb.size(); ++i) CHECK(back.rgb[i] == im.rgb[i]);
}

TEST_CASE("conv2d matches the direct-loop oracle") {
  Rng rng(42);
  struct Case {
    std::vector<int> xs, ws;
    nn::ConvSpec spec;
  };
  const std::vector<Case> cases = {
      {{2, 3, 7, 6}, {4, 3, 3, 3}, {1, 1, 1}},
      {{1, 2, 9, 9}, {3, 2, 3, 3}, {2, 1, 1}},
      {{1, 3, 8, 8}, {2, 3, 3, 3}, {1, 2, 2}},
      {{2, 1, 5, 5}, {2, 1, 1, 1}, {1, 0, 1}},
  };
  for (const auto& c : cases) {
    Tensor x = random_tensor(c.xs, rng);
    Tensor w = random_tensor(c.ws, rng);
    Tensor b = random_tensor({c.ws[0]}, rng);
    Tensor got = nn::conv2d(x, w, b, c.spec);
    Tensor want = conv2d_naive(x, w, b, c.spec);
    REQUIRE(got.shape() == want.shape());
    for (std::size_t i = 0; i < got.size(); ++i) CHECK(got[i] == doctest::Approx(want[i]).epsilon(1e-12));
  }
}

TEST_CASE("conv2d input gradient is the adjoint of the forward map") {
  Rng rng(7);
  const nn::ConvSpec spec{2, 1, 1};
  Tensor w = random_tensor({4, 3, 3, 3}, rng);
  Tensor b({4});
  const std::vector<int> xs = {2, 3, 9, 8};
  Tensor dx = random_tensor(xs, rng);
  Tensor y = nn::conv2d(dx, w, b, spec);
  Tensor gy = random_tensor(y.shape(), rng);
  Tensor gx = nn::conv2d_backward_input(gy, w, xs, spec);
  CHECK(dot(y, gy) == doctest::Approx(dot(dx, gx)).epsilon(1e-10));
}

TEST_CASE("conv2d parameter gradients agree with central differences") {
  Rng rng(99);
  const nn::ConvSpec spec{1, 1, 2};
  const std::vector<int> xs = {1, 2, 6, 6};
  Tensor x = random_tensor(xs, rng);
  Tensor w = random_tensor({3, 2, 3, 3}, rng);
  Tensor b = random_tensor({3}, rng);
  Tensor probe = random_tensor(nn::conv2d(x, w, b, spec).shape(), rng);

  auto loss = [&](const Tensor& wt, const Tensor& bt) {
    return dot(nn::conv2d(x, wt, bt, spec), probe);
  };

  Tensor gw(w.shape()), gb(b.shape());
  nn::conv2d_backward_params(probe, x, spec, gw, gb);

  const double h = 1e-6;
  Rng pick(5);
  for (int trial = 0; trial < 20; ++trial) {
    std::size_t i = pick.uniform_index(w.size());
    Tensor wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    double fd = (loss(wp, b) - loss(wm, b)) / (2 * h);
    CHECK(gw[i] == doctest::Approx(fd).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    Tensor bp = b, bm = b;
    bp[i] += h;
    bm[i] -= h;
    double fd = (loss(w, bp) - loss(w, bm)) / (2 * h);
    CHECK(gb[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("conv2d parameter backward accumulates rather than overwrites") {
  Rng rng(3);
  const nn::ConvSpec spec{1, 0, 1};
  Tensor x = random_tensor({1, 1, 4, 4}, rng);
  Tensor w = random_tensor({1, 1, 3, 3}, rng);
  Tensor gy = random_tensor({1, 1, 2, 2}, rng);
  Tensor gw_once(w.shape()), gb_once({1});
  nn::conv2d_backward_params(gy, x, spec, gw_once, gb_once);
  Tensor gw_twice(w.shape()), gb_twice({1});
  nn::conv2d_backward_params(gy, x, spec, gw_twice, gb_twice);
  nn::conv2d_backward_params(gy, x, spec, gw_twice, gb_twice);
  for (std::size_t i = 0; i < gw_once.size(); ++i)
    CHECK(gw_twice[i] == doctest::Approx(2 * gw_once[i]).epsilon(1e-12));
  CHECK(gb_twice[0] == doctest::Approx(2 * gb_once[0]).epsilon(1e-12));
}

TEST_CASE("relu backward masks by sign of the pre-activation") {
  Tensor x({1, 1, 1, 4}, {-2.0, -0.0, 0.5, 3.0});
  Tensor gy({1, 1, 1, 4}, {1.0, 1.0, -1.5, 2.0});
  Tensor y = nn::relu(x);
  CHECK(y[0] == 0.0);
  CHECK(y[1] == 0.0);
  CHECK(y[2] == 0.5);
  CHECK(y[3] == 3.0);
  Tensor gx = nn::relu_backward(gy, x);
  CHECK(gx[0] == 0.0);
  CHECK(gx[1] == 0.0);
  CHECK(gx[2] == -1.5);
  CHECK(gx[3] == 2.0);
}

TEST_CASE("guided relu backward additionally drops negative upstream gradient") {
  Tensor x({1, 1, 1, 4}, {-2.0, 1.0, 0.5, 3.0});
  Tensor gy({1, 1, 1, 4}, {1.0, 1.0, -1.5, 2.0});
  Tensor gx = nn::relu_backward_guided(gy, x);
  CHECK(gx[0] == 0.0);
  CHECK(gx[1] == 1.0);
  CHECK(gx[2] == 0.0);
  CHECK(gx[3] == 2.0);
}

TEST_CASE("maxpool2 picks window maxima and routes gradient to them") {
  Tensor x({1, 1, 4, 4}, {1, 2, 5, 4,    //
                          3, 0, 1, 1,    //
                          9, 8, 2, 2,    //
                          7, 6, 2, 3});
  std::vector<std::int32_t> argmax;
  Tensor y = nn::maxpool2(x, argmax);
  REQUIRE(y.shape() == std::vector<int>{1, 1, 2, 2});
  CHECK(y[0] == 3.0);
  CHECK(y[1] == 5.0);
  CHECK(y[2] == 9.0);
  CHECK(y[3] == 3.0);
  Tensor gy({1, 1, 2, 2}, {1.0, 2.0, 3.0, 4.0});
  Tensor gx = nn::maxpool2_backward(gy, argmax, x.shape());
  Tensor want({1, 1, 4, 4}, {0, 0, 2, 0,    //
                             1, 0, 0, 0,    //
                             3, 0, 0, 0,    //
                             0, 0, 0, 4});
  for (std::size_t i = 0; i < want.size(); ++i) CHECK(gx[i] == want[i]);
}

TEST_CASE("maxpool2 drops odd trailing rows and columns") {
  Rng rng(13);
  Tensor x = random_tensor({1, 2, 5, 7}, rng);
  std::vector<std::int32_t> argmax;
  Tensor y = nn::maxpool2(x, argmax);
  CHECK(y.shape() == std::vector<int>{1, 2, 2, 3});
}

TEST_CASE("global average pool and its adjoint") {
  Rng rng(21);
  Tensor x = random_tensor({2, 3, 4, 5}, rng);
  Tensor y = nn::global_avg_pool(x);
  REQUIRE(y.shape() == std::vector<int>{2, 3});
  double manual = 0.0;
  for (int i = 0; i < 4 * 5; ++i) manual += x[i];
  CHECK(y[0] == doctest::Approx(manual / 20.0).epsilon(1e-12));

  Tensor gy = random_tensor({2, 3}, rng);
  Tensor gx = nn::global_avg_pool_backward(gy, x.shape());
  Tensor dx = random_tensor(x.shape(), rng);
  CHECK(dot(nn::global_avg_pool(dx), gy) == doctest::Approx(dot(dx, gx)).epsilon(1e-10));
}

TEST_CASE("linear layer forward and both adjoints") {
  Rng rng(4);
  Tensor x = random_tensor({3, 5}, rng);
  Tensor w = random_tensor({4, 5}, rng);
  Tensor b = random_tensor({4}, rng);
  Tensor y = nn::linear(x, w, b);
  REQUIRE(y.shape() == std::vector<int>{3, 4});
  for (int n = 0; n < 3; ++n)
    for (int o = 0; o < 4; ++o) {
      double acc = b[o];
      for (int f = 0; f < 5; ++f) acc += x.at(n, f) * w.at(o, f);
      CHECK(y.at(n, o) == doctest::Approx(acc).epsilon(1e-12));
    }

  Tensor gy = random_tensor({3, 4}, rng);
  Tensor gx = nn::linear_backward_input(gy, w);
  Tensor dx = random_tensor({3, 5}, rng);
  Tensor b0({4});
  CHECK(dot(nn::linear(dx, w, b0), gy) == doctest::Approx(dot(dx, gx)).epsilon(1e-10));

  Tensor gw(w.shape()), gb(b.shape());
  nn::linear_backward_params(gy, x, gw, gb);
  const double h = 1e-6;
  Rng pick(17);
  for (int trial = 0; trial < 10; ++trial) {
    std::size_t i = pick.uniform_index(w.size());
    Tensor wp = w, wm = w;
    wp[i] += h;
    wm[i] -= h;
    double fd = (dot(nn::linear(x, wp, b), gy) - dot(nn::linear(x, wm, b), gy)) / (2 * h);
    CHECK(gw[i] == doctest::Approx(fd).epsilon(1e-6));
  }
  for (std::size_t i = 0; i < b.size(); ++i) {
    Tensor bp = b, bm = b;
    bp[i] += h;
    bm[i] -= h;
    double fd = (dot(nn::linear(x, w, bp), gy) - dot(nn::linear(x, w, bm), gy)) / (2 * h);
    CHECK(gb[i] == doctest::Approx(fd).epsilon(1e-6));
  }
}

TEST_CASE("bilinear upsample is identity at the same resolution") {
  Rng rng(8);
  Tensor x = random_tensor({1, 2, 5, 6}, rng);
  Tensor y = nn::upsample_bilinear(x, 5, 6);
  for (std::size_t i = 0; i < x.size(); ++i) CHECK(y[i] == x[i]);
}

TEST_CASE("bilinear upsample reproduces linear ramps exactly in the interior") {
  // A bilinear kernel reconstructs any affine function of (x, y) wherever the
  // sample neighbourhood is not clamped at the border.
  Tensor x({1, 1, 4, 4});
  for (int y = 0; y < 4; ++y)
    for (int xx = 0; xx < 4; ++xx) x[static_cast<std::size_t>(y) * 4 + xx] = 2.0 * xx + 3.0 * y + 1.0;
  Tensor up = nn::upsample_bilinear(x, 8, 8);
  const double sx = 4.0 / 8.0, sy = 4.0 / 8.0;
  for (int oy = 0; oy < 8; ++oy)
    for (int ox = 0; ox < 8; ++ox) {
      double src_x = (ox + 0.5) * sx - 0.5;
      double src_y = (oy + 0.5) * sy - 0.5;
      if (src_x < 0 || src_x > 3 || src_y < 0 || src_y > 3) continue;
      double want = 2.0 * src_x + 3.0 * src_y + 1.0;
      CHECK(up[static_cast<std::size_t>(oy) * 8 + ox] == doctest::Approx(want).epsilon(1e-12));
    }
}

TEST_CASE("bilinear upsample backward is the adjoint of the forward map") {
  Rng rng(31);
  const std::vector<int> xs = {2, 3, 5, 4};
  Tensor dx = random_tensor(xs, rng);
  Tensor y = nn::upsample_bilinear(dx, 11, 9);
  Tensor gy = random_tensor(y.shape(), rng);
  Tensor gx = nn::upsample_bilinear_backward(gy, xs);
  CHECK(dot(y, gy) == doctest::Approx(dot(dx, gx)).epsilon(1e-10));
}

TEST_CASE("channel concat and split round trip") {
  Rng rng(55);
  Tensor a = random_tensor({2, 2, 3, 3}, rng);
  Tensor b = random_tensor({2, 1, 3, 3}, rng);
  Tensor c = random_tensor({2, 4, 3, 3}, rng);
  Tensor cat = nn::concat_channels({&a, &b, &c});
  REQUIRE(cat.shape() == std::vector<int>{2, 7, 3, 3});
  auto parts = nn::split_channels(cat, {2, 1, 4});
  REQUIRE(parts.size() == 3);
  for (std::size_t i = 0; i < a.size(); ++i) CHECK(parts[0][i] == a[i]);
  for (std::size_t i = 0; i < b.size(); ++i) CHECK(parts[1][i] == b[i]);
  for (std::size_t i = 0; i < c.size(); ++i) CHECK(parts[2][i] == c[i]);
}

TEST_CASE("softmax normalizes and is shift invariant") {
  std::vector<double> p = nn::softmax({1.0, 2.0, 3.0});
  double s = p[0] + p[1] + p[2];
  CHECK(s == doctest::Approx(1.0).epsilon(1e-12));
  CHECK(p[2] > p[1]);
  CHECK(p[1] > p[0]);
  std::vector<double> q = nn::softmax({1001.0, 1002.0, 1003.0});
  for (int i = 0; i < 3; ++i) CHECK(p[i] == doctest::Approx(q[i]).epsilon(1e-12));
}

TEST_CASE("two-class cross entropy value and gradient") {
  Rng rng(61);
  Tensor logits = random_tensor({2, 2, 3, 3}, rng, -2.0, 2.0);
  std::vector<std::uint8_t> target(2 * 3 * 3);
  for (auto& t : target) t = static_cast<std::uint8_t>(rng.uniform_index(2));

  Tensor grad(logits.shape());
  double loss = nn::softmax2_cross_entropy(logits, target, &grad);

  double manual = 0.0;
  const int hw = 9;
  for (int n = 0; n < 2; ++n)
    for (int i = 0; i < hw; ++i) {
      double l0 = logits[(static_cast<std::size_t>(n) * 2 + 0) * hw + i];
      double l1 = logits[(static_cast<std::size_t>(n) * 2 + 1) * hw + i];
      double m = std::max(l0, l1);
      double lse = m + std::log(std::exp(l0 - m) + std::exp(l1 - m));
      double lt = target[static_cast<std::size_t>(n) * hw + i] ? l1 : l0;
      manual += lse - lt;
    }
  manual /= 2.0 * hw;
  CHECK(loss == doctest::Approx(manual).epsilon(1e-12));

  const double h = 1e-6;
  Rng pick(62);
  for (int trial = 0; trial < 12; ++trial) {
    std::size_t i = pick.uniform_index(logits.size());
    Tensor lp = logits, lm = logits;
    lp[i] += h;
    lm[i] -= h;
    double fd = (nn::softmax2_cross_entropy(lp, target, nullptr) -
                 nn::softmax2_cross_entropy(lm, target, nullptr)) /
                (2 * h);
    CHECK(grad[i] == doctest::Approx(fd).epsilon(1e-5));
  }
}

TEST_CASE("foreground probability complements the background channel") {
  Rng rng(71);
  Tensor logits = random_tensor({1, 2, 2, 2}, rng, -3.0, 3.0);
  Tensor fg = nn::softmax2_foreground(logits);
  REQUIRE(fg.shape() == std::vector<int>{1, 2, 2});
  for (int i = 0; i < 4; ++i) {
    double l0 = logits[i];
    double l1 = logits[4 + i];
    std::vector<double> p = nn::softmax({l0, l1});
    CHECK(fg[i] == doctest::Approx(p[1]).epsilon(1e-12));
  }
}
