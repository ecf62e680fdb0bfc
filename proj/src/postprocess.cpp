#include "lexseg/postprocess.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>

#include "lexseg/common.hpp"

namespace lexseg {
namespace {

constexpr double kGamma = 50.0;
constexpr double kMaxUnary = 1e6;
constexpr double kHardCost = 1e15;
constexpr double kFlowEps = 1e-11;
constexpr double kCovarianceFloor = 1e-5;

struct NeighborOffset {
  int dx;
  int dy;
  double inv_dist;
  std::vector<double> PixelGraph::*weights;
};

constexpr double kInvSqrt2 = 0.7071067811865476;

const NeighborOffset kOffsets[4] = {
    {1, 0, 1.0, &PixelGraph::w_right},
    {0, 1, 1.0, &PixelGraph::w_down},
    {1, 1, kInvSqrt2, &PixelGraph::w_down_right},
    {-1, 1, kInvSqrt2, &PixelGraph::w_down_left},
};

// Dinic max-flow over doubles; capacities below kFlowEps count as saturated.
class MaxFlow {
 public:
  explicit MaxFlow(int nodes) : first_(static_cast<std::size_t>(nodes), -1) {}

  void add_edge(int from, int to, double cap, double rev_cap) {
    edges_.push_back({to, first_[static_cast<std::size_t>(from)], cap});
    first_[static_cast<std::size_t>(from)] = static_cast<int>(edges_.size()) - 1;
    edges_.push_back({from, first_[static_cast<std::size_t>(to)], rev_cap});
    first_[static_cast<std::size_t>(to)] = static_cast<int>(edges_.size()) - 1;
  }

  void run(int source, int sink) {
    std::vector<int> level(first_.size());
    std::vector<int> iter(first_.size());
    std::vector<int> path;
    while (bfs(source, sink, &level)) {
      iter = first_;
      path.clear();
      int v = source;
      while (true) {
        if (v == sink) {
          double pushed = std::numeric_limits<double>::infinity();
          for (int e : path) pushed = std::min(pushed, edges_[static_cast<std::size_t>(e)].cap);
          for (int e : path) {
            edges_[static_cast<std::size_t>(e)].cap -= pushed;
            edges_[static_cast<std::size_t>(e ^ 1)].cap += pushed;
          }
          path.clear();
          v = source;
          continue;
        }
        bool advanced = false;
        for (int& e = iter[static_cast<std::size_t>(v)]; e >= 0;
             e = edges_[static_cast<std::size_t>(e)].next) {
          const Edge& edge = edges_[static_cast<std::size_t>(e)];
          if (edge.cap > kFlowEps && level[static_cast<std::size_t>(edge.to)] ==
                                         level[static_cast<std::size_t>(v)] + 1) {
            path.push_back(e);
            v = edge.to;
            advanced = true;
            break;
          }
        }
        if (advanced) continue;
        if (v == source) break;
        level[static_cast<std::size_t>(v)] = -1;
        v = edges_[static_cast<std::size_t>(path.back() ^ 1)].to;
        path.pop_back();
      }
    }
  }

  // After run: nodes still reachable from the source in the residual graph.
  std::vector<char> source_side(int source) const {
    std::vector<char> seen(first_.size(), 0);
    std::queue<int> queue;
    queue.push(source);
    seen[static_cast<std::size_t>(source)] = 1;
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop();
      for (int e = first_[static_cast<std::size_t>(v)]; e >= 0; e = edges_[e].next) {
        int to = edges_[static_cast<std::size_t>(e)].to;
        if (!seen[static_cast<std::size_t>(to)] &&
            edges_[static_cast<std::size_t>(e)].cap > kFlowEps) {
          seen[static_cast<std::size_t>(to)] = 1;
          queue.push(to);
        }
      }
    }
    return seen;
  }

 private:
  struct Edge {
    int to;
    int next;
    double cap;
  };

  bool bfs(int source, int sink, std::vector<int>* level) {
    std::fill(level->begin(), level->end(), -1);
    std::queue<int> queue;
    (*level)[static_cast<std::size_t>(source)] = 0;
    queue.push(source);
    while (!queue.empty()) {
      int v = queue.front();
      queue.pop();
      for (int e = first_[static_cast<std::size_t>(v)]; e >= 0; e = edges_[e].next) {
        const Edge& edge = edges_[static_cast<std::size_t>(e)];
        if (edge.cap > kFlowEps && (*level)[static_cast<std::size_t>(edge.to)] < 0) {
          (*level)[static_cast<std::size_t>(edge.to)] =
              (*level)[static_cast<std::size_t>(v)] + 1;
          queue.push(edge.to);
        }
      }
    }
    return (*level)[static_cast<std::size_t>(sink)] >= 0;
  }

  std::vector<int> first_;
  std::vector<Edge> edges_;
};

// Full-covariance color mixture with hard component assignment: the cost of
// a color is the best single component's negative log density.
struct MixtureComponent {
  double neg_log_weight = 0.0;
  Eigen::Vector3d mean = Eigen::Vector3d::Zero();
  Eigen::Matrix3d inv_cov = Eigen::Matrix3d::Identity();
  double half_log_det_2pi = 0.0;
};

struct ColorMixture {
  std::vector<MixtureComponent> components;

  double neg_log(const Eigen::Vector3d& z) const {
    double best = kMaxUnary;
    for (const MixtureComponent& c : components) {
      Eigen::Vector3d d = z - c.mean;
      double cost = c.neg_log_weight + c.half_log_det_2pi + 0.5 * d.dot(c.inv_cov * d);
      best = std::min(best, cost);
    }
    return std::clamp(best, 0.0, kMaxUnary);
  }

  // Wide component centered on mid-gray; stands in when a side has no pixels.
  static ColorMixture flat() {
    ColorMixture m;
    MixtureComponent c;
    c.mean = Eigen::Vector3d(0.5, 0.5, 0.5);
    Eigen::Matrix3d cov = Eigen::Matrix3d::Identity() * 10.0;
    c.inv_cov = cov.inverse();
    c.half_log_det_2pi =
        0.5 * (3.0 * std::log(2.0 * M_PI) + std::log(cov.determinant()));
    m.components.push_back(c);
    return m;
  }
};

ColorMixture fit_mixture(const std::vector<Eigen::Vector3d>& colors, int k) {
  if (colors.empty()) return ColorMixture::flat();
  const int n = static_cast<int>(colors.size());
  k = std::min(k, n);

  // Quantiles of the lexicographically sorted colors seed k-means; no
  // randomness, so refits are reproducible bit for bit.
  std::vector<int> order(colors.size());
  std::iota(order.begin(), order.end(), 0);
  std::sort(order.begin(), order.end(), [&](int a, int b) {
    const auto& ca = colors[static_cast<std::size_t>(a)];
    const auto& cb = colors[static_cast<std::size_t>(b)];
    if (ca.x() != cb.x()) return ca.x() < cb.x();
    if (ca.y() != cb.y()) return ca.y() < cb.y();
    return ca.z() < cb.z();
  });
  std::vector<Eigen::Vector3d> centers;
  for (int i = 0; i < k; ++i) {
    int pick = order[static_cast<std::size_t>(((2 * i + 1) * n) / (2 * k))];
    centers.push_back(colors[static_cast<std::size_t>(pick)]);
  }

  std::vector<int> assign(colors.size(), 0);
  for (int round = 0; round < 8; ++round) {
    for (std::size_t i = 0; i < colors.size(); ++i) {
      double best = std::numeric_limits<double>::infinity();
      for (std::size_t c = 0; c < centers.size(); ++c) {
        double d = (colors[i] - centers[c]).squaredNorm();
        if (d < best) {
          best = d;
          assign[i] = static_cast<int>(c);
        }
      }
    }
    std::vector<Eigen::Vector3d> sums(centers.size(), Eigen::Vector3d::Zero());
    std::vector<int> counts(centers.size(), 0);
    for (std::size_t i = 0; i < colors.size(); ++i) {
      sums[static_cast<std::size_t>(assign[i])] += colors[i];
      ++counts[static_cast<std::size_t>(assign[i])];
    }
    for (std::size_t c = 0; c < centers.size(); ++c) {
      if (counts[c] > 0) centers[c] = sums[c] / counts[c];
    }
  }

  ColorMixture mixture;
  for (std::size_t c = 0; c < centers.size(); ++c) {
    std::vector<const Eigen::Vector3d*> members;
    for (std::size_t i = 0; i < colors.size(); ++i) {
      if (assign[i] == static_cast<int>(c)) members.push_back(&colors[i]);
    }
    if (members.empty()) continue;
    Eigen::Vector3d mean = Eigen::Vector3d::Zero();
    for (const auto* z : members) mean += *z;
    mean /= static_cast<double>(members.size());
    Eigen::Matrix3d cov = Eigen::Matrix3d::Identity() * kCovarianceFloor;
    for (const auto* z : members) {
      Eigen::Vector3d d = *z - mean;
      cov += d * d.transpose() / static_cast<double>(members.size());
    }
    MixtureComponent comp;
    comp.neg_log_weight =
        -std::log(static_cast<double>(members.size()) / static_cast<double>(n));
    comp.mean = mean;
    comp.inv_cov = cov.inverse();
    comp.half_log_det_2pi =
        0.5 * (3.0 * std::log(2.0 * M_PI) + std::log(cov.determinant()));
    mixture.components.push_back(comp);
  }
  return mixture;
}

Eigen::Vector3d pixel_color(const ImageTensor& image, int x, int y) {
  return {image.chw.at(0, y, x), image.chw.at(1, y, x), image.chw.at(2, y, x)};
}

}  // namespace

void GrabCutParams::validate() const {
  if (!(0.0 <= t_bg && t_bg < t_unk && t_unk < t_fg && t_fg <= 1.0))
    throw ConfigError("thresholds must satisfy 0 <= t_bg < t_unk < t_fg <= 1");
  if (iterations < 1) throw ConfigError("refinement needs at least one iteration");
  if (gmm_components < 1) throw ConfigError("color models need at least one component");
}

AnnotationImage annotate_from_likelihood(const LikelihoodImage& p, const GrabCutParams& params) {
  params.validate();
  AnnotationImage a;
  a.width = p.width;
  a.height = p.height;
  a.codes.assign(p.values.size(), AnnotationCode::kSureBackground);
  if (p.values.empty()) {
    a.degenerate = true;
    return a;
  }
  double lo = p.values.front(), hi = p.values.front();
  for (float v : p.values) {
    lo = std::min(lo, static_cast<double>(v));
    hi = std::max(hi, static_cast<double>(v));
  }
  const double delta = hi - lo;
  if (delta == 0.0) {
    a.degenerate = true;
    return a;
  }
  const double to_pb = lo + params.t_bg * delta;
  const double to_pf = lo + params.t_unk * delta;
  const double to_sf = lo + params.t_fg * delta;
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    const double v = p.values[i];
    if (v <= to_pb) {
      a.codes[i] = AnnotationCode::kSureBackground;
    } else if (v < to_pf) {
      a.codes[i] = AnnotationCode::kProbableBackground;
    } else if (v < to_sf) {
      a.codes[i] = AnnotationCode::kProbableForeground;
    } else {
      a.codes[i] = AnnotationCode::kSureForeground;
    }
  }
  return a;
}

PixelGraph PixelGraph::make(int w, int h) {
  PixelGraph g;
  g.width = w;
  g.height = h;
  const std::size_t n = static_cast<std::size_t>(w) * h;
  g.cost_bg.assign(n, 0.0);
  g.cost_fg.assign(n, 0.0);
  g.w_right.assign(n, 0.0);
  g.w_down.assign(n, 0.0);
  g.w_down_right.assign(n, 0.0);
  g.w_down_left.assign(n, 0.0);
  return g;
}

std::vector<std::uint8_t> solve_pixel_graph(const PixelGraph& graph) {
  const int w = graph.width, h = graph.height;
  if (w <= 0 || h <= 0) throw ShapeError("pixel graph must be non-empty");
  const int pixels = w * h;
  const int source = pixels, sink = pixels + 1;
  MaxFlow flow(pixels + 2);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const int p = static_cast<int>(graph.index(x, y));
      // Cutting source->p pays the background cost (p lands on the sink
      // side); cutting p->sink pays the foreground cost.
      flow.add_edge(source, p, graph.cost_bg[static_cast<std::size_t>(p)], 0.0);
      flow.add_edge(p, sink, graph.cost_fg[static_cast<std::size_t>(p)], 0.0);
      for (const NeighborOffset& o : kOffsets) {
        const int nx = x + o.dx, ny = y + o.dy;
        if (nx < 0 || nx >= w || ny >= h) continue;
        const double weight = (graph.*o.weights)[static_cast<std::size_t>(p)];
        if (weight > 0.0) {
          flow.add_edge(p, static_cast<int>(graph.index(nx, ny)), weight, weight);
        }
      }
    }
  }
  flow.run(source, sink);
  std::vector<char> fg = flow.source_side(source);
  std::vector<std::uint8_t> labels(static_cast<std::size_t>(pixels));
  for (int p = 0; p < pixels; ++p) labels[static_cast<std::size_t>(p)] = fg[p] ? 1 : 0;
  return labels;
}

double labeling_energy(const PixelGraph& graph, const std::vector<std::uint8_t>& labels) {
  if (labels.size() != graph.cost_bg.size())
    throw ShapeError("labeling size does not match the graph");
  double energy = 0.0;
  for (std::size_t p = 0; p < labels.size(); ++p) {
    energy += labels[p] ? graph.cost_fg[p] : graph.cost_bg[p];
  }
  for (int y = 0; y < graph.height; ++y) {
    for (int x = 0; x < graph.width; ++x) {
      const std::size_t p = graph.index(x, y);
      for (const NeighborOffset& o : kOffsets) {
        const int nx = x + o.dx, ny = y + o.dy;
        if (nx < 0 || nx >= graph.width || ny >= graph.height) continue;
        if (labels[p] != labels[graph.index(nx, ny)]) {
          energy += (graph.*o.weights)[p];
        }
      }
    }
  }
  return energy;
}

SegmentationMask grabcut_refine(const ImageTensor& image, const AnnotationImage& annotation,
                                const GrabCutParams& params, const LikelihoodImage* likelihood,
                                std::vector<std::string>* warnings) {
  params.validate();
  const int w = image.width, h = image.height;
  if (w <= 0 || h <= 0 || annotation.width != w || annotation.height != h)
    throw ShapeError("image and annotation dimensions must match");
  if (image.chw.shape() != std::vector<int>{3, h, w})
    throw ShapeError("image tensor must be [3, height, width]");
  const std::size_t pixels = static_cast<std::size_t>(w) * h;

  std::vector<AnnotationCode> codes = annotation.codes;
  std::size_t sf_count = 0, pf_count = 0;
  for (AnnotationCode c : codes) {
    sf_count += c == AnnotationCode::kSureForeground;
    pf_count += c == AnnotationCode::kProbableForeground;
  }

  SegmentationMask mask = SegmentationMask::zeros(w, h);
  if (sf_count == 0 && pf_count == 0) {
    if (warnings) warnings->push_back("annotation has no foreground seeds; mask left empty");
    return mask;
  }
  if (sf_count == 0) {
    if (likelihood == nullptr) {
      if (warnings)
        warnings->push_back(
            "no sure-foreground pixels and no likelihood to promote from; proceeding with "
            "probable seeds only");
    } else {
      if (likelihood->width != w || likelihood->height != h)
        throw ShapeError("likelihood dimensions must match the image");
      std::vector<std::size_t> pf_pixels;
      for (std::size_t i = 0; i < pixels; ++i) {
        if (codes[i] == AnnotationCode::kProbableForeground) pf_pixels.push_back(i);
      }
      std::stable_sort(pf_pixels.begin(), pf_pixels.end(), [&](std::size_t a, std::size_t b) {
        return likelihood->values[a] > likelihood->values[b];
      });
      const std::size_t promote = static_cast<std::size_t>(
          std::max<long long>(1, static_cast<long long>(
                                     std::ceil(0.01 * static_cast<double>(pf_count)))));
      for (std::size_t i = 0; i < promote && i < pf_pixels.size(); ++i) {
        codes[pf_pixels[i]] = AnnotationCode::kSureForeground;
      }
      mask.foreground_fallback = true;
      if (warnings)
        warnings->push_back("promoted " + std::to_string(std::min(promote, pf_pixels.size())) +
                            " probable-foreground pixels to seeds");
    }
  }

  std::vector<std::uint8_t> alpha(pixels);
  for (std::size_t i = 0; i < pixels; ++i) {
    alpha[i] = (codes[i] == AnnotationCode::kSureForeground ||
                codes[i] == AnnotationCode::kProbableForeground)
                   ? 1
                   : 0;
  }

  std::vector<Eigen::Vector3d> colors(pixels);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) colors[static_cast<std::size_t>(y) * w + x] = pixel_color(image, x, y);
  }

  // Contrast-sensitive pairwise weights, beta from the mean squared color
  // difference over all 8-neighbor pairs.
  double diff_sum = 0.0;
  std::size_t diff_count = 0;
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      for (const NeighborOffset& o : kOffsets) {
        const int nx = x + o.dx, ny = y + o.dy;
        if (nx < 0 || nx >= w || ny >= h) continue;
        diff_sum += (colors[static_cast<std::size_t>(y) * w + x] -
                     colors[static_cast<std::size_t>(ny) * w + nx])
                        .squaredNorm();
        ++diff_count;
      }
    }
  }
  const double beta =
      (diff_count > 0 && diff_sum > 0.0) ? 1.0 / (2.0 * diff_sum / diff_count) : 0.0;

  PixelGraph graph = PixelGraph::make(w, h);
  for (int y = 0; y < h; ++y) {
    for (int x = 0; x < w; ++x) {
      const std::size_t p = graph.index(x, y);
      for (const NeighborOffset& o : kOffsets) {
        const int nx = x + o.dx, ny = y + o.dy;
        if (nx < 0 || nx >= w || ny >= h) continue;
        const double d2 =
            (colors[p] - colors[static_cast<std::size_t>(ny) * w + nx]).squaredNorm();
        (graph.*o.weights)[p] = kGamma * o.inv_dist * std::exp(-beta * d2);
      }
    }
  }

  for (int round = 0; round < params.iterations; ++round) {
    std::vector<Eigen::Vector3d> fg_colors, bg_colors;
    for (std::size_t i = 0; i < pixels; ++i) {
      (alpha[i] ? fg_colors : bg_colors).push_back(colors[i]);
    }
    // A side emptied by a previous cut refits on its annotation seeds so the
    // model stays anchored to the image.
    if (fg_colors.empty()) {
      for (std::size_t i = 0; i < pixels; ++i) {
        if (codes[i] == AnnotationCode::kSureForeground ||
            codes[i] == AnnotationCode::kProbableForeground) {
          fg_colors.push_back(colors[i]);
        }
      }
    }
    if (bg_colors.empty()) {
      for (std::size_t i = 0; i < pixels; ++i) {
        if (codes[i] == AnnotationCode::kSureBackground ||
            codes[i] == AnnotationCode::kProbableBackground) {
          bg_colors.push_back(colors[i]);
        }
      }
    }
    const ColorMixture fg_model = fit_mixture(fg_colors, params.gmm_components);
    const ColorMixture bg_model = fit_mixture(bg_colors, params.gmm_components);

    for (std::size_t i = 0; i < pixels; ++i) {
      switch (codes[i]) {
        case AnnotationCode::kSureBackground:
          graph.cost_bg[i] = 0.0;
          graph.cost_fg[i] = kHardCost;
          break;
        case AnnotationCode::kSureForeground:
          graph.cost_bg[i] = kHardCost;
          graph.cost_fg[i] = 0.0;
          break;
        default:
          graph.cost_bg[i] = bg_model.neg_log(colors[i]);
          graph.cost_fg[i] = fg_model.neg_log(colors[i]);
          break;
      }
    }
    alpha = solve_pixel_graph(graph);
  }

  mask.values = std::move(alpha);
  for (std::size_t i = 0; i < pixels; ++i) {
    if (codes[i] == AnnotationCode::kSureBackground) mask.values[i] = 0;
    if (codes[i] == AnnotationCode::kSureForeground) mask.values[i] = 1;
  }
  return mask;
}

SegmentationMask threshold_baseline(const LikelihoodImage& p, double t) {
  if (!(t > 0.0 && t < 1.0)) throw ConfigError("threshold must lie strictly inside (0,1)");
  SegmentationMask mask = SegmentationMask::zeros(p.width, p.height);
  for (std::size_t i = 0; i < p.values.size(); ++i) {
    mask.values[i] = p.values[i] >= t ? 1 : 0;
  }
  return mask;
}

}  // namespace lexseg
