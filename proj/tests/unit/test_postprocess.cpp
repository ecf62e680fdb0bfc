#include "lexseg/postprocess.hpp"

#include <array>
#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "doctest.h"
#include "lexseg/common.hpp"
#include "lexseg/rasters.hpp"
#include "lexseg/tensor.hpp"
#include "support/oracles.hpp"

namespace lexseg {
namespace {

LikelihoodImage row_image(const std::vector<float>& values) {
  LikelihoodImage p;
  p.width = static_cast<int>(values.size());
  p.height = 1;
  p.values = values;
  return p;
}

AnnotationImage uniform_annotation(int w, int h, AnnotationCode code) {
  AnnotationImage a;
  a.width = w;
  a.height = h;
  a.codes.assign(static_cast<std::size_t>(w) * h, code);
  return a;
}

ImageTensor random_image(int w, int h, Rng& rng) {
  ImageTensor im = ImageTensor::zeros(w, h);
  for (std::size_t i = 0; i < im.chw.size(); ++i) im.chw.data()[i] = rng.uniform(0.0, 1.0);
  return im;
}

std::vector<AnnotationCode> codes_of(const AnnotationImage& a) { return a.codes; }

}  // namespace

TEST_CASE("grabcut params reject inconsistent thresholds") {
  CHECK_NOTHROW(GrabCutParams{}.validate());

  GrabCutParams p;
  p.t_bg = -0.01;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  p = GrabCutParams{};
  p.t_bg = p.t_unk;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  p = GrabCutParams{};
  p.t_unk = p.t_fg;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  p = GrabCutParams{};
  p.t_fg = 1.01;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  p = GrabCutParams{};
  p.iterations = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  p = GrabCutParams{};
  p.gmm_components = 0;
  CHECK_THROWS_AS(p.validate(), ConfigError);

  LikelihoodImage img = row_image({0.0f, 1.0f});
  GrabCutParams bad;
  bad.t_bg = 0.6;
  bad.t_unk = 0.5;
  CHECK_THROWS_AS(annotate_from_likelihood(img, bad), ConfigError);
}

TEST_CASE("annotation codes follow the spread fractions") {
  const LikelihoodImage p = row_image({0.0f, 0.10f, 0.30f, 0.60f, 0.85f, 1.0f});
  const AnnotationImage a = annotate_from_likelihood(p, GrabCutParams{});
  CHECK_FALSE(a.degenerate);
  const std::vector<AnnotationCode> expected = {
      AnnotationCode::kSureBackground,     AnnotationCode::kSureBackground,
      AnnotationCode::kProbableBackground, AnnotationCode::kProbableForeground,
      AnnotationCode::kSureForeground,     AnnotationCode::kSureForeground,
  };
  CHECK(codes_of(a) == expected);
}

TEST_CASE("annotation boundaries close on the background side only") {
  GrabCutParams params;
  params.t_bg = 0.25;
  params.t_unk = 0.5;
  params.t_fg = 0.75;
  const LikelihoodImage p = row_image({0.0f, 0.25f, 0.5f, 0.75f, 1.0f});
  const AnnotationImage a = annotate_from_likelihood(p, params);
  const std::vector<AnnotationCode> expected = {
      AnnotationCode::kSureBackground, AnnotationCode::kSureBackground,
      AnnotationCode::kProbableForeground, AnnotationCode::kSureForeground,
      AnnotationCode::kSureForeground,
  };
  CHECK(codes_of(a) == expected);
}

TEST_CASE("constant likelihood degenerates to all sure background") {
  LikelihoodImage p = LikelihoodImage::zeros(4, 3);
  for (float& v : p.values) v = 0.42f;
  const AnnotationImage a = annotate_from_likelihood(p, GrabCutParams{});
  CHECK(a.degenerate);
  for (AnnotationCode c : a.codes) CHECK(c == AnnotationCode::kSureBackground);

  const AnnotationImage single = annotate_from_likelihood(LikelihoodImage::zeros(1, 1), GrabCutParams{});
  CHECK(single.degenerate);

  const AnnotationImage empty = annotate_from_likelihood(LikelihoodImage{}, GrabCutParams{});
  CHECK(empty.degenerate);
  CHECK(empty.codes.empty());
}

TEST_CASE("annotation matches the reference coder on random images") {
  Rng rng(0x8a5cd789635d2dffULL);
  for (int trial = 0; trial < 200; ++trial) {
    const int w = rng.uniform_int(1, 20);
    const int h = rng.uniform_int(1, 20);
    LikelihoodImage p = LikelihoodImage::zeros(w, h);
    for (float& v : p.values) v = static_cast<float>(rng.uniform());
    const AnnotationImage got = annotate_from_likelihood(p, GrabCutParams{});
    const AnnotationImage want = testing::oracle_annotate(p, GrabCutParams{});
    CHECK(got.degenerate == want.degenerate);
    CHECK(codes_of(got) == codes_of(want));
  }
}

TEST_CASE("annotation is invariant to positive affine rescaling") {
  Rng rng(0x128da03bee975ca1ULL);
  const double grid = 0x1.0p-9;
  for (int trial = 0; trial < 30; ++trial) {
    const int w = rng.uniform_int(1, 12);
    const int h = rng.uniform_int(1, 12);
    LikelihoodImage base = LikelihoodImage::zeros(w, h);
    for (float& v : base.values) {
      v = static_cast<float>(static_cast<double>(rng.uniform_index(513)) * grid);
    }
    const AnnotationImage ref = annotate_from_likelihood(base, GrabCutParams{});
    for (double alpha : {0.5, 1.0, 2.0, 4.0}) {
      const double beta = static_cast<double>(rng.uniform_index(513)) * grid;
      LikelihoodImage scaled = base;
      for (float& v : scaled.values) {
        v = static_cast<float>(alpha * static_cast<double>(v) + beta);
      }
      const AnnotationImage got = annotate_from_likelihood(scaled, GrabCutParams{});
      CHECK(got.degenerate == ref.degenerate);
      CHECK(codes_of(got) == codes_of(ref));
    }
  }
}

TEST_CASE("labeling energy counts disagreeing neighbors once") {
  PixelGraph g = PixelGraph::make(2, 2);
  g.cost_bg = {1, 2, 3, 4};
  g.cost_fg = {5, 1, 2, 0};
  g.w_right = {10, 0, 20, 0};
  g.w_down = {30, 40, 0, 0};
  g.w_down_right = {7, 0, 0, 0};
  g.w_down_left = {0, 9, 0, 0};
  const std::vector<std::uint8_t> labels = {1, 0, 0, 1};
  CHECK(labeling_energy(g, labels) == 110.0);
  CHECK(testing::oracle_energy(g, labels) == 110.0);

  CHECK_THROWS_AS(labeling_energy(g, {1, 0}), ShapeError);
}

TEST_CASE("pixel graph storage matches its dimensions") {
  const PixelGraph g = PixelGraph::make(3, 2);
  CHECK(g.cost_bg.size() == 6);
  CHECK(g.cost_fg.size() == 6);
  CHECK(g.w_right.size() == 6);
  CHECK(g.w_down.size() == 6);
  CHECK(g.w_down_right.size() == 6);
  CHECK(g.w_down_left.size() == 6);
  CHECK(g.index(2, 1) == 5);
}

TEST_CASE("graph solver reaches the enumerated minimum on tiny grids") {
  Rng rng(0x94d049bb133111ebULL);
  const int sizes[10][2] = {{1, 1}, {2, 1}, {1, 3}, {2, 2}, {3, 2},
                            {2, 3}, {3, 3}, {4, 3}, {3, 4}, {4, 4}};
  for (const auto& wh : sizes) {
    for (int instance = 0; instance < 4; ++instance) {
      const PixelGraph g = testing::random_pixel_graph(rng, wh[0], wh[1]);
      const std::vector<std::uint8_t> labels = solve_pixel_graph(g);
      REQUIRE(labels.size() == static_cast<std::size_t>(wh[0] * wh[1]));
      const double got = labeling_energy(g, labels);
      const testing::OracleSolution best = testing::enumerate_min_energy(g);
      CHECK(got == doctest::Approx(best.energy).epsilon(1e-9));
      CHECK(testing::oracle_energy(g, labels) == doctest::Approx(got).epsilon(1e-12));
    }
  }
}

TEST_CASE("column relaxation agrees with full enumeration") {
  Rng rng(0xbf58476d1ce4e5b9ULL);
  const int sizes[4][2] = {{2, 2}, {4, 3}, {3, 4}, {4, 4}};
  for (const auto& wh : sizes) {
    for (int instance = 0; instance < 2; ++instance) {
      const PixelGraph g = testing::random_pixel_graph(rng, wh[0], wh[1]);
      CHECK(testing::column_dp_min_energy(g) ==
            doctest::Approx(testing::enumerate_min_energy(g).energy).epsilon(1e-12));
    }
  }
}

TEST_CASE("graph solver reaches the relaxation minimum on mid-size grids") {
  Rng rng(0xd1b54a32d192ed03ULL);
  const int sizes[4][2] = {{5, 5}, {6, 6}, {5, 6}, {6, 5}};
  for (const auto& wh : sizes) {
    for (int instance = 0; instance < 3; ++instance) {
      const PixelGraph g = testing::random_pixel_graph(rng, wh[0], wh[1]);
      const std::vector<std::uint8_t> labels = solve_pixel_graph(g);
      CHECK(labeling_energy(g, labels) ==
            doctest::Approx(testing::column_dp_min_energy(g)).epsilon(1e-9));
    }
  }
}

TEST_CASE("prohibitive unary costs pin pixels to a side") {
  Rng rng(0x2545f4914f6cdd1dULL);
  for (int instance = 0; instance < 5; ++instance) {
    PixelGraph g = testing::random_pixel_graph(rng, 3, 3);
    g.cost_bg[g.index(0, 0)] = 1e15;
    g.cost_fg[g.index(2, 2)] = 1e15;
    const std::vector<std::uint8_t> labels = solve_pixel_graph(g);
    CHECK(labels[g.index(0, 0)] == 1);
    CHECK(labels[g.index(2, 2)] == 0);
    CHECK(labeling_energy(g, labels) ==
          doctest::Approx(testing::column_dp_min_energy(g)).epsilon(1e-9));
  }
}

TEST_CASE("threshold baseline keeps the closed lower bound") {
  const LikelihoodImage p = row_image({0.1f, 0.5f, 0.7f, 0.49999997f});
  const SegmentationMask mask = threshold_baseline(p, 0.5);
  CHECK(mask.width == 4);
  CHECK(mask.height == 1);
  CHECK(mask.values == std::vector<std::uint8_t>{0, 1, 1, 0});

  CHECK_THROWS_AS(threshold_baseline(p, 0.0), ConfigError);
  CHECK_THROWS_AS(threshold_baseline(p, 1.0), ConfigError);
  CHECK_THROWS_AS(threshold_baseline(p, -0.1), ConfigError);
}

TEST_CASE("refinement validates its inputs") {
  Rng rng(0x9e3779b97f4a7c15ULL);
  const ImageTensor image = random_image(3, 3, rng);

  CHECK_THROWS_AS(grabcut_refine(image, uniform_annotation(2, 2, AnnotationCode::kSureForeground),
                                 GrabCutParams{}),
                  ShapeError);

  ImageTensor flat;
  flat.width = 3;
  flat.height = 3;
  flat.chw = Tensor({1, 3, 3});
  CHECK_THROWS_AS(grabcut_refine(flat, uniform_annotation(3, 3, AnnotationCode::kSureForeground),
                                 GrabCutParams{}),
                  ShapeError);

  GrabCutParams bad;
  bad.iterations = 0;
  CHECK_THROWS_AS(grabcut_refine(image, uniform_annotation(3, 3, AnnotationCode::kSureForeground), bad),
                  ConfigError);

  AnnotationImage pf_only = uniform_annotation(3, 3, AnnotationCode::kProbableForeground);
  const LikelihoodImage mismatched = LikelihoodImage::zeros(2, 2);
  CHECK_THROWS_AS(grabcut_refine(image, pf_only, GrabCutParams{}, &mismatched), ShapeError);
}

TEST_CASE("refinement without foreground seeds returns the empty mask") {
  Rng rng(0x6c62272e07bb0142ULL);
  const ImageTensor image = random_image(4, 4, rng);
  AnnotationImage a = uniform_annotation(4, 4, AnnotationCode::kSureBackground);
  a.at(1, 1) = AnnotationCode::kProbableBackground;
  std::vector<std::string> warnings;
  const SegmentationMask mask = grabcut_refine(image, a, GrabCutParams{}, nullptr, &warnings);
  CHECK(mask.values == std::vector<std::uint8_t>(16, 0));
  CHECK_FALSE(mask.foreground_fallback);
  REQUIRE(warnings.size() == 1);
  CHECK(warnings[0].find("no foreground seeds") != std::string::npos);
}

TEST_CASE("refinement keeps hard seeds on their side") {
  Rng rng(0x41c64e6d3039ULL);
  GrabCutParams params;
  params.iterations = 2;
  params.gmm_components = 3;
  for (int trial = 0; trial < 25; ++trial) {
    const int w = rng.uniform_int(4, 10);
    const int h = rng.uniform_int(4, 10);
    const ImageTensor image = random_image(w, h, rng);
    AnnotationImage a = uniform_annotation(w, h, AnnotationCode::kSureBackground);
    for (AnnotationCode& c : a.codes) {
      c = static_cast<AnnotationCode>(rng.uniform_index(4));
    }
    a.codes[rng.uniform_index(a.codes.size())] = AnnotationCode::kSureForeground;
    const SegmentationMask mask = grabcut_refine(image, a, params);
    for (std::size_t i = 0; i < a.codes.size(); ++i) {
      if (a.codes[i] == AnnotationCode::kSureBackground) CHECK(mask.values[i] == 0);
      if (a.codes[i] == AnnotationCode::kSureForeground) CHECK(mask.values[i] == 1);
    }
  }
}

TEST_CASE("all sure-foreground annotation fills the mask") {
  Rng rng(0x5851f42d4c957f2dULL);
  const ImageTensor image = random_image(3, 3, rng);
  const SegmentationMask mask =
      grabcut_refine(image, uniform_annotation(3, 3, AnnotationCode::kSureForeground), GrabCutParams{});
  CHECK(mask.values == std::vector<std::uint8_t>(9, 1));
}

TEST_CASE("refinement recovers a color blob from a partial seed") {
  const int w = 24, h = 24;
  const std::array<double, 3> bg = {0.2, 0.3, 0.8};
  const std::array<double, 3> fg = {0.9, 0.6, 0.1};
  Rng rng(0x7f4a7c159e3779b9ULL);
  ImageTensor image = ImageTensor::zeros(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const bool inside = x >= 8 && x <= 15 && y >= 7 && y <= 16;
      const std::array<double, 3>& tone = inside ? fg : bg;
      for (int c = 0; c < 3; ++c) {
        image.at(c, y, x) = tone[static_cast<std::size_t>(c)] + rng.uniform(-0.02, 0.02);
      }
    }
  }
  AnnotationImage a = uniform_annotation(w, h, AnnotationCode::kProbableBackground);
  for (int y = 10; y <= 13; ++y) {
    for (int x = 10; x <= 13; ++x) a.at(x, y) = AnnotationCode::kSureForeground;
  }
  const SegmentationMask mask = grabcut_refine(image, a, GrabCutParams{});
  const SegmentationMask want = testing::nearest_tone_mask(image, fg, bg);
  int disagreements = 0;
  for (std::size_t i = 0; i < mask.values.size(); ++i) {
    disagreements += mask.values[i] != want.values[i];
  }
  CHECK(disagreements <= (w * h * 2) / 100);

  const SegmentationMask again = grabcut_refine(image, a, GrabCutParams{});
  CHECK(again.values == mask.values);
  CHECK(again.foreground_fallback == mask.foreground_fallback);
}

TEST_CASE("probable-only annotation promotes seeds when a likelihood is supplied") {
  const int w = 6, h = 6;
  Rng rng(0x1905740337b3ef31ULL);
  const ImageTensor image = random_image(w, h, rng);
  LikelihoodImage p = LikelihoodImage::zeros(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) p.at(x, y) = static_cast<float>((y * w + x) / 36.0);
  }
  AnnotationImage a = uniform_annotation(w, h, AnnotationCode::kProbableBackground);
  std::size_t pf_count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      if (p.at(x, y) >= 0.5f) {
        a.at(x, y) = AnnotationCode::kProbableForeground;
        ++pf_count;
      }
    }
  }
  REQUIRE(pf_count == 18);

  std::vector<std::string> with_likelihood;
  const SegmentationMask mask = grabcut_refine(image, a, GrabCutParams{}, &p, &with_likelihood);
  CHECK(mask.foreground_fallback);
  REQUIRE(with_likelihood.size() == 1);
  CHECK(with_likelihood[0].find("promoted 1") != std::string::npos);
  CHECK(mask.at(5, 5) == 1);

  std::vector<std::string> without_likelihood;
  const SegmentationMask plain = grabcut_refine(image, a, GrabCutParams{}, nullptr, &without_likelihood);
  CHECK_FALSE(plain.foreground_fallback);
  REQUIRE(without_likelihood.size() == 1);
  CHECK(without_likelihood[0].find("probable seeds only") != std::string::npos);
}

}  // namespace lexseg
