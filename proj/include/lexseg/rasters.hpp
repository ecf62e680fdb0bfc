#pragma once

#include <cstdint>
#include <vector>

namespace lexseg {

enum class Polarity { kPositive, kNegative };

// Single-channel attention raster in [0,1] at image resolution.
struct SaliencyMap {
  int width = 0;
  int height = 0;
  std::vector<float> values;  // row-major
  Polarity polarity = Polarity::kPositive;
  std::vector<int> source_labels;  // class indices the map was composed from
  bool degenerate = false;         // set when normalization collapsed (max == min)

  static SaliencyMap zeros(int w, int h, Polarity p) {
    SaliencyMap m;
    m.width = w;
    m.height = h;
    m.polarity = p;
    m.values.assign(static_cast<std::size_t>(w) * h, 0.0f);
    return m;
  }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Per-pixel foreground probability.
struct LikelihoodImage {
  int width = 0;
  int height = 0;
  std::vector<float> values;

  static LikelihoodImage zeros(int w, int h) {
    LikelihoodImage p;
    p.width = w;
    p.height = h;
    p.values.assign(static_cast<std::size_t>(w) * h, 0.0f);
    return p;
  }
  float at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  float& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

// Four-way GrabCut seeding codes.
enum class AnnotationCode : std::uint8_t {
  kSureBackground = 0,
  kProbableBackground = 1,
  kProbableForeground = 2,
  kSureForeground = 3,
};

struct AnnotationImage {
  int width = 0;
  int height = 0;
  std::vector<AnnotationCode> codes;
  bool degenerate = false;  // set when the likelihood image was constant

  AnnotationCode at(int x, int y) const { return codes[static_cast<std::size_t>(y) * width + x]; }
  AnnotationCode& at(int x, int y) { return codes[static_cast<std::size_t>(y) * width + x]; }
};

// Binary mask, 1 = foreground.
struct SegmentationMask {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> values;
  bool foreground_fallback = false;  // seeding had to promote PF pixels (see grabcut_refine)

  static SegmentationMask zeros(int w, int h) {
    SegmentationMask m;
    m.width = w;
    m.height = h;
    m.values.assign(static_cast<std::size_t>(w) * h, 0);
    return m;
  }
  std::uint8_t at(int x, int y) const { return values[static_cast<std::size_t>(y) * width + x]; }
  std::uint8_t& at(int x, int y) { return values[static_cast<std::size_t>(y) * width + x]; }
};

}  // namespace lexseg
