#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "lexseg/rasters.hpp"
#include "lexseg/tensor.hpp"

namespace lexseg {

struct GrabCutParams {
  double t_fg = 0.7;
  double t_unk = 0.5;
  double t_bg = 0.15;
  int iterations = 5;
  int gmm_components = 5;

  void validate() const;
};

// Codes each pixel relative to the likelihood extrema: with delta the
// max-min spread, a pixel is SB up to t_bg*delta above the minimum, then PB
// below t_unk*delta, then PF below t_fg*delta, and SF beyond. First matching
// case wins; a constant likelihood codes everything SB and sets the
// degenerate flag.
AnnotationImage annotate_from_likelihood(const LikelihoodImage& p, const GrabCutParams& params);

// Binary grid labeling problem: per-pixel costs for taking background or
// foreground plus non-negative attraction weights toward the four forward
// neighbors (right, down, down-right, down-left; entries whose neighbor
// falls outside the grid are ignored). Edge weights are paid when the two
// endpoints take different labels.
struct PixelGraph {
  int width = 0;
  int height = 0;
  std::vector<double> cost_bg;
  std::vector<double> cost_fg;
  std::vector<double> w_right;
  std::vector<double> w_down;
  std::vector<double> w_down_right;
  std::vector<double> w_down_left;

  static PixelGraph make(int w, int h);
  std::size_t index(int x, int y) const { return static_cast<std::size_t>(y) * width + x; }
};

// Exact minimizer of the labeling energy via max-flow on the equivalent s-t
// graph. Returns one optimal labeling (1 = foreground).
std::vector<std::uint8_t> solve_pixel_graph(const PixelGraph& graph);

// Energy of an arbitrary labeling under the same model, for verification.
double labeling_energy(const PixelGraph& graph, const std::vector<std::uint8_t>& labels);

// Iterative refinement: per-side color mixture models refit every round, an
// 8-connected contrast-sensitive cut after each refit, exactly
// params.iterations rounds. SB pixels are hard background and SF pixels hard
// foreground; only PB/PF pixels can change sides.
//
// When the annotation has no SF pixels but does have PF pixels, the top 1%
// of PF pixels ranked by `likelihood` are promoted to foreground seeds and
// the returned mask's foreground_fallback flag is set; without a likelihood
// the promotion is skipped with a warning. No foreground seeds at all yields
// the empty mask plus a warning.
SegmentationMask grabcut_refine(const ImageTensor& image, const AnnotationImage& annotation,
                                const GrabCutParams& params,
                                const LikelihoodImage* likelihood = nullptr,
                                std::vector<std::string>* warnings = nullptr);

// Static-threshold ablation: foreground wherever p >= t.
SegmentationMask threshold_baseline(const LikelihoodImage& p, double t);

}  // namespace lexseg
