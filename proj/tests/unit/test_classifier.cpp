#include "doctest.h"

#include <array>
#include <cmath>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "lexseg/classifier.hpp"
#include "lexseg/common.hpp"
#include "lexseg/io.hpp"
#include "lexseg/tensor.hpp"

using lexseg::BackendSpec;
using lexseg::ClassifierBackend;
using lexseg::GradientRule;
using lexseg::GradientTensor;
using lexseg::ImageTensor;
using lexseg::Rng;

namespace {

constexpr int kN = lexseg::fixture::kNumClasses;
constexpr double kBias = -0.45;
constexpr double kCross = 0.2;
constexpr double kComplement = -0.2;

double head_weight(int k, int j) {
  if (j == k) return 1.0;
  return j == kN - 1 - k ? kComplement : kCross;
}

// Independent evaluation of the fixture network with nothing but loops:
// center-tap color matching, rectifier, 3x3 box sum, rectifier, global
// average, linear head. Used as the oracle for both scores and gradients.
struct FixtureEval {
  int w, h;
  std::vector<double> pre1, act1, pre2, act2;  // [kN][h][w]
  std::array<double, kN> gap;
  std::array<double, kN> logits;

  double& v(std::vector<double>& m, int k, int y, int x) {
    return m[(static_cast<std::size_t>(k) * h + y) * w + x];
  }
  double v(const std::vector<double>& m, int k, int y, int x) const {
    return m[(static_cast<std::size_t>(k) * h + y) * w + x];
  }

  explicit FixtureEval(const ImageTensor& im) : w(im.width), h(im.height) {
    const std::size_t plane = static_cast<std::size_t>(kN) * h * w;
    pre1.assign(plane, 0.0);
    act1.assign(plane, 0.0);
    pre2.assign(plane, 0.0);
    act2.assign(plane, 0.0);
    for (int k = 0; k < kN; ++k) {
      std::array<double, 3> color = lexseg::fixture::class_color(k);
      double mean = (color[0] + color[1] + color[2]) / 3.0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double dot = kBias;
          for (int c = 0; c < 3; ++c) dot += (color[static_cast<std::size_t>(c)] - mean) * im.at(c, y, x);
          v(pre1, k, y, x) = dot;
          v(act1, k, y, x) = std::max(0.0, dot);
        }
    }
    for (int k = 0; k < kN; ++k)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double sum = 0.0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              sum += v(act1, k, yy, xx);
            }
          v(pre2, k, y, x) = sum;
          v(act2, k, y, x) = std::max(0.0, sum);
        }
    for (int k = 0; k < kN; ++k) {
      double sum = 0.0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) sum += v(act2, k, y, x);
      gap[static_cast<std::size_t>(k)] = sum / (static_cast<double>(w) * h);
    }
    for (int k = 0; k < kN; ++k) {
      double acc = 0.001 * k;
      for (int j = 0; j < kN; ++j) acc += head_weight(k, j) * gap[static_cast<std::size_t>(j)];
      logits[static_cast<std::size_t>(k)] = acc;
    }
  }

  // Walks the gradient of logit `target` back to the input, applying either
  // rectifier rule.
  std::vector<double> input_gradient(const ImageTensor& im, int target, bool guided) const {
    std::vector<double> g2(pre2.size(), 0.0), g1(pre1.size(), 0.0);
    std::vector<double> gin(static_cast<std::size_t>(3) * h * w, 0.0);
    const double inv_area = 1.0 / (static_cast<double>(w) * h);
    for (int k = 0; k < kN; ++k) {
      double up = head_weight(target, k) * inv_area;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          bool pass = v(pre2, k, y, x) > 0.0 && (!guided || up > 0.0);
          if (pass) g2[(static_cast<std::size_t>(k) * h + y) * w + x] = up;
        }
    }
    for (int k = 0; k < kN; ++k)
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double up = 0.0;
          for (int dy = -1; dy <= 1; ++dy)
            for (int dx = -1; dx <= 1; ++dx) {
              int yy = y + dy, xx = x + dx;
              if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
              up += g2[(static_cast<std::size_t>(k) * h + yy) * w + xx];
            }
          bool pass = v(pre1, k, y, x) > 0.0 && (!guided || up > 0.0);
          if (pass) g1[(static_cast<std::size_t>(k) * h + y) * w + x] = up;
        }
    for (int k = 0; k < kN; ++k) {
      std::array<double, 3> color = lexseg::fixture::class_color(k);
      double mean = (color[0] + color[1] + color[2]) / 3.0;
      for (int y = 0; y < h; ++y)
        for (int x = 0; x < w; ++x) {
          double g = g1[(static_cast<std::size_t>(k) * h + y) * w + x];
          if (g == 0.0) continue;
          for (int c = 0; c < 3; ++c)
            gin[(static_cast<std::size_t>(c) * h + y) * w + x] +=
                g * (color[static_cast<std::size_t>(c)] - mean);
        }
    }
    return gin;
  }
};

ImageTensor gray_image(int w, int h, double level = 0.5) {
  ImageTensor im = ImageTensor::zeros(w, h);
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x) im.at(c, y, x) = level;
  return im;
}

void paint(ImageTensor& im, int x, int y, const std::array<double, 3>& rgb) {
  for (int c = 0; c < 3; ++c) im.at(c, y, x) = rgb[static_cast<std::size_t>(c)];
}

// Random mix of palette pixels and gray pixels; every rectifier input stays
// well away from zero so finite differences are safe.
ImageTensor random_palette_image(int w, int h, Rng& rng) {
  ImageTensor im = gray_image(w, h, 0.5);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      if (rng.uniform() < 0.4)
        paint(im, x, y, lexseg::fixture::class_color(static_cast<int>(rng.uniform_index(kN))));
  return im;
}

std::unique_ptr<ClassifierBackend> fixture_backend() {
  BackendSpec spec;
  spec.name = "fixture";
  return lexseg::load_backend(spec);
}

}  // namespace

TEST_CASE("fixture backend basic contract") {
  auto backend = fixture_backend();
  CHECK(backend->num_classes() == kN);
  CHECK(backend->spec().input_size == 0);
  CHECK(backend->first_layer_weights().shape() == std::vector<int>{kN, 3, 3, 3});
  CHECK(lexseg::fixture::class_labels().size() == static_cast<std::size_t>(kN));
}

TEST_CASE("fixture scores on the canonical image match the hand-derived vector") {
  // 2x2 image, single red pixel at (0,0), rest mid-gray. Worked through the
  // network by hand: only the red conv1 unit fires (2/3 - 0.45), the box sum
  // spreads it to all four pixels, the average equals the same value, and the
  // head mixes it with weights 1.0 / 0.2 / -0.2 plus the 0.001*k biases.
  ImageTensor im = gray_image(2, 2);
  paint(im, 0, 0, {1.0, 0.0, 0.0});
  const double r = 2.0 / 3.0 - 0.45;
  const std::vector<double> want_logits = {
      r, 0.2 * r + 0.001, 0.2 * r + 0.002, 0.2 * r + 0.003, 0.2 * r + 0.004, -0.2 * r + 0.005,
  };

  auto backend = fixture_backend();
  std::vector<double> logits = backend->predict_logits(im);
  REQUIRE(logits.size() == want_logits.size());
  for (std::size_t i = 0; i < logits.size(); ++i)
    CHECK(logits[i] == doctest::Approx(want_logits[i]).epsilon(1e-9));

  lexseg::ClassScores scores = backend->predict_scores(im);
  double sum = 0.0;
  for (double p : scores.probabilities) {
    CHECK(p >= 0.0);
    sum += p;
  }
  CHECK(sum == doctest::Approx(1.0).epsilon(1e-6));
  CHECK(scores.probabilities[0] > scores.probabilities[1]);
}

TEST_CASE("fixture scores are deterministic and match the loop oracle on random images") {
  auto backend = fixture_backend();
  Rng rng(2024);
  for (int trial = 0; trial < 8; ++trial) {
    ImageTensor im = random_palette_image(3 + static_cast<int>(rng.uniform_index(6)),
                                          3 + static_cast<int>(rng.uniform_index(6)), rng);
    FixtureEval oracle(im);
    std::vector<double> logits = backend->predict_logits(im);
    for (int k = 0; k < kN; ++k)
      CHECK(logits[static_cast<std::size_t>(k)] ==
            doctest::Approx(oracle.logits[static_cast<std::size_t>(k)]).epsilon(1e-9));

    std::vector<double> again = backend->predict_logits(im);
    for (std::size_t i = 0; i < logits.size(); ++i) CHECK(logits[i] == again[i]);
  }
}

TEST_CASE("guided gradient on the canonical image matches the hand derivation") {
  // Same 2x2 single-red-pixel image, target class red. By hand: the head
  // passes 1/4 per pixel into the red conv2 channel, the box adjoint sums the
  // four contributions back onto (0,0) giving 1.0, and the center tap maps it
  // to (2/3, -1/3, -1/3) on the input. Every other pixel gets zero.
  ImageTensor im = gray_image(2, 2);
  paint(im, 0, 0, {1.0, 0.0, 0.0});
  auto backend = fixture_backend();
  GradientTensor grad = backend->guided_backprop_gradient(im, 0);
  REQUIRE(grad.width == 2);
  REQUIRE(grad.height == 2);
  CHECK(grad.chw.at(0, 0, 0) == doctest::Approx(2.0 / 3.0).epsilon(1e-9));
  CHECK(grad.chw.at(1, 0, 0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-9));
  CHECK(grad.chw.at(2, 0, 0) == doctest::Approx(-1.0 / 3.0).epsilon(1e-9));
  for (int c = 0; c < 3; ++c)
    for (int y = 0; y < 2; ++y)
      for (int x = 0; x < 2; ++x) {
        if (x == 0 && y == 0) continue;
        CHECK(grad.chw.at(c, y, x) == 0.0);
      }
}

TEST_CASE("guided and plain rules diverge on a complementary-color image") {
  // Red pixel at (0,0), cyan pixel at (2,2). The head weighs cyan at -0.2 for
  // the red logit, so the guided rule blocks the whole cyan path while plain
  // backprop carries the negative contribution through: -0.2/9 per pixel,
  // four covering windows, times the cyan center tap (-2/3, 1/3, 1/3).
  ImageTensor im = gray_image(3, 3);
  paint(im, 0, 0, {1.0, 0.0, 0.0});
  paint(im, 2, 2, {0.0, 1.0, 1.0});
  auto backend = fixture_backend();

  GradientTensor guided = backend->input_gradient(im, 0, GradientRule::kGuided);
  for (int c = 0; c < 3; ++c) CHECK(guided.chw.at(c, 2, 2) == 0.0);

  GradientTensor plain = backend->input_gradient(im, 0, GradientRule::kPlain);
  const double up = 4.0 * -0.2 / 9.0;
  CHECK(plain.chw.at(0, 2, 2) == doctest::Approx(up * -2.0 / 3.0).epsilon(1e-9));
  CHECK(plain.chw.at(1, 2, 2) == doctest::Approx(up * 1.0 / 3.0).epsilon(1e-9));
  CHECK(plain.chw.at(2, 2, 2) == doctest::Approx(up * 1.0 / 3.0).epsilon(1e-9));

  for (int c = 0; c < 3; ++c)
    CHECK(guided.chw.at(c, 0, 0) == doctest::Approx(plain.chw.at(c, 0, 0)).epsilon(1e-12));
}

TEST_CASE("both gradient rules match the loop oracle on random images") {
  auto backend = fixture_backend();
  Rng rng(77);
  for (int trial = 0; trial < 6; ++trial) {
    ImageTensor im = random_palette_image(5, 4, rng);
    int target = static_cast<int>(rng.uniform_index(kN));
    FixtureEval oracle(im);
    for (bool guided : {true, false}) {
      GradientTensor got = backend->input_gradient(
          im, target, guided ? GradientRule::kGuided : GradientRule::kPlain);
      REQUIRE(got.width == im.width);
      REQUIRE(got.height == im.height);
      std::vector<double> want = oracle.input_gradient(im, target, guided);
      for (std::size_t i = 0; i < want.size(); ++i)
        CHECK(got.chw[static_cast<std::int64_t>(i)] == doctest::Approx(want[i]).epsilon(1e-9));
    }
  }
}

TEST_CASE("plain backprop matches central finite differences of the logit") {
  auto backend = fixture_backend();
  Rng rng(31337);
  ImageTensor im = random_palette_image(4, 4, rng);
  const int target = 0;
  GradientTensor grad = backend->input_gradient(im, target, GradientRule::kPlain);

  const double h = 1e-5;
  Rng pick(9);
  int checked = 0;
  for (int trial = 0; trial < 60 && checked < 20; ++trial) {
    int c = static_cast<int>(pick.uniform_index(3));
    int y = static_cast<int>(pick.uniform_index(im.height));
    int x = static_cast<int>(pick.uniform_index(im.width));
    ImageTensor up = im, down = im;
    up.at(c, y, x) += h;
    down.at(c, y, x) -= h;
    double fd = (backend->predict_logits(up)[target] - backend->predict_logits(down)[target]) /
                (2 * h);
    double got = grad.chw.at(c, y, x);
    if (std::abs(fd) < 1e-12) {
      CHECK(std::abs(got) < 1e-10);
    } else {
      CHECK(got == doctest::Approx(fd).epsilon(1e-4));
      ++checked;
    }
  }
  CHECK(checked >= 10);
}

TEST_CASE("zero image produces a zero guided gradient") {
  ImageTensor im = ImageTensor::zeros(4, 3);
  auto backend = fixture_backend();
  GradientTensor grad = backend->guided_backprop_gradient(im, 2);
  for (std::int64_t i = 0; i < grad.chw.size(); ++i) CHECK(grad.chw[i] == 0.0);
}

TEST_CASE("gradient requests validate the class index and image shape") {
  auto backend = fixture_backend();
  ImageTensor im = gray_image(2, 2);
  CHECK_THROWS_AS(backend->input_gradient(im, -1, GradientRule::kGuided), std::out_of_range);
  CHECK_THROWS_AS(backend->input_gradient(im, kN, GradientRule::kGuided), std::out_of_range);
  ImageTensor broken;
  CHECK_THROWS_AS(backend->predict_logits(broken), lexseg::ShapeError);
}

TEST_CASE("unknown backend names are rejected") {
  BackendSpec spec;
  spec.name = "resnet50";
  CHECK_THROWS_AS(lexseg::load_backend(spec), lexseg::ConfigError);
}

TEST_CASE("missing pretrained weights raise a resource error with a hint") {
  BackendSpec spec;
  spec.name = "vgg19-imagenet1k";
  spec.weights_path = "/nonexistent/vgg19.weights";
  try {
    lexseg::load_backend(spec);
    FAIL("expected a resource error");
  } catch (const lexseg::ResourceError& e) {
    CHECK(std::string(e.what()).find("export_vgg19") != std::string::npos);
  }
}

TEST_CASE("backend spec files parse with defaults and reject junk") {
  const std::string dir = "build_test_tmp";
  std::filesystem::create_directories(dir);
  const std::string good = dir + "/backend.json";
  lexseg::io::atomic_write_file(
      good, R"({"name": "vgg19-imagenet1k", "weights": "w.bin", "input_size": 224,
                 "mean": [0.485, 0.456, 0.406], "std": [0.229, 0.224, 0.225]})");
  BackendSpec spec = lexseg::backend_spec_from_file(good);
  CHECK(spec.name == "vgg19-imagenet1k");
  CHECK(spec.weights_path == "w.bin");
  CHECK(spec.input_size == 224);
  CHECK(spec.mean[0] == doctest::Approx(0.485));
  CHECK(spec.std[2] == doctest::Approx(0.225));

  const std::string minimal = dir + "/minimal.json";
  lexseg::io::atomic_write_file(minimal, R"({"name": "fixture"})");
  BackendSpec tiny = lexseg::backend_spec_from_file(minimal);
  CHECK(tiny.name == "fixture");
  CHECK(tiny.input_size == 0);
  CHECK(tiny.std == std::array<double, 3>{1.0, 1.0, 1.0});

  const std::string bad = dir + "/bad.json";
  lexseg::io::atomic_write_file(bad, "not json at all");
  CHECK_THROWS_AS(lexseg::backend_spec_from_file(bad), lexseg::ConfigError);
  CHECK_THROWS_AS(lexseg::backend_spec_from_file(dir + "/absent.json"), lexseg::ResourceError);
}
