#pragma once

#include <optional>
#include <string>
#include <vector>

#include "lexseg/classifier.hpp"
#include "lexseg/label_semantics.hpp"
#include "lexseg/rasters.hpp"
#include "lexseg/tensor.hpp"

namespace lexseg {

// Per-pixel max over the gradient's 3 channels followed by min-max
// normalization into [0,1]. A constant gradient yields the all-zero map with
// the degenerate flag set.
SaliencyMap single_label_saliency(const GradientTensor& grad);

// Per-pixel arithmetic mean. All maps must share dimensions and polarity;
// source labels are merged. Throws ConfigError on an empty list.
SaliencyMap compose_saliency(const std::vector<SaliencyMap>& maps);

// Bilinear resample to (width, height), clamped to [0,1].
SaliencyMap resize_saliency(const SaliencyMap& map, int width, int height);

// Directory of previously composed maps, keyed by image content, the ordered
// label list and the backend name. Writes go through a temp file and an
// atomic rename so concurrent generators never expose partial maps.
class SaliencyCache {
 public:
  explicit SaliencyCache(std::string dir);

  std::string key(const ImageTensor& image, const std::vector<int>& labels,
                  const std::string& backend_name, Polarity polarity) const;
  std::optional<SaliencyMap> load(const std::string& key, Polarity polarity,
                                  const std::vector<int>& labels) const;
  void store(const std::string& key, const SaliencyMap& map) const;
  const std::string& dir() const { return dir_; }

 private:
  std::string dir_;
};

struct AttentionMaps {
  SaliencyMap positive;
  SaliencyMap negative;
  std::vector<std::string> warnings;
};

// Guided-backprop map per proxy label, composed per polarity, resized to the
// image's own resolution. Empty label lists fall back to the zero map with a
// warning. When a cache is given, composed maps are read from and written to
// it; cached results are bitwise-identical to fresh ones.
AttentionMaps generate_attention_maps(const ImageTensor& image, const ProxyLabelSet& proxies,
                                      const ClassifierBackend& classifier,
                                      const SaliencyCache* cache = nullptr);

}  // namespace lexseg
