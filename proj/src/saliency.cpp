#include "lexseg/saliency.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <set>
#include <sstream>

#include "lexseg/common.hpp"
#include "lexseg/io.hpp"
#include "lexseg/nn.hpp"

namespace lexseg {
namespace {

bool all_values_equal(const std::vector<float>& values) {
  for (float v : values) {
    if (v != values.front()) return false;
  }
  return true;
}

SaliencyMap finalize(SaliencyMap map) {
  map.degenerate = all_values_equal(map.values);
  return map;
}

std::string hex64(std::uint64_t v) {
  char buf[17];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(v));
  return buf;
}

}  // namespace

SaliencyMap single_label_saliency(const GradientTensor& grad) {
  if (grad.chw.shape() != std::vector<int>{3, grad.height, grad.width} || grad.width <= 0 ||
      grad.height <= 0) {
    throw ShapeError("gradient tensor must be [3, height, width]");
  }
  const std::size_t pixels = static_cast<std::size_t>(grad.width) * grad.height;
  std::vector<double> pooled(pixels);
  double lo = std::numeric_limits<double>::infinity();
  double hi = -lo;
  for (std::size_t p = 0; p < pixels; ++p) {
    double m = grad.chw.data()[p];
    m = std::max(m, grad.chw.data()[pixels + p]);
    m = std::max(m, grad.chw.data()[2 * pixels + p]);
    pooled[p] = m;
    lo = std::min(lo, m);
    hi = std::max(hi, m);
  }
  SaliencyMap map = SaliencyMap::zeros(grad.width, grad.height, Polarity::kPositive);
  if (hi > lo) {
    for (std::size_t p = 0; p < pixels; ++p) {
      map.values[p] = static_cast<float>((pooled[p] - lo) / (hi - lo));
    }
  }
  return finalize(std::move(map));
}

SaliencyMap compose_saliency(const std::vector<SaliencyMap>& maps) {
  if (maps.empty()) throw ConfigError("cannot compose an empty saliency map list");
  const SaliencyMap& first = maps.front();
  std::set<int> labels;
  for (const SaliencyMap& m : maps) {
    if (m.width != first.width || m.height != first.height)
      throw ShapeError("saliency maps in a composition must share dimensions");
    if (m.polarity != first.polarity)
      throw ConfigError("saliency maps in a composition must share polarity");
    labels.insert(m.source_labels.begin(), m.source_labels.end());
  }
  SaliencyMap out = SaliencyMap::zeros(first.width, first.height, first.polarity);
  out.source_labels.assign(labels.begin(), labels.end());
  for (std::size_t p = 0; p < out.values.size(); ++p) {
    double sum = 0.0;
    for (const SaliencyMap& m : maps) sum += m.values[p];
    out.values[p] = static_cast<float>(sum / static_cast<double>(maps.size()));
  }
  return finalize(std::move(out));
}

SaliencyMap resize_saliency(const SaliencyMap& map, int width, int height) {
  if (width <= 0 || height <= 0) throw ShapeError("saliency resize target must be positive");
  Tensor plane({1, 1, map.height, map.width});
  for (std::size_t p = 0; p < map.values.size(); ++p) plane.data()[p] = map.values[p];
  Tensor resized = nn::upsample_bilinear(plane, height, width);
  SaliencyMap out = SaliencyMap::zeros(width, height, map.polarity);
  out.source_labels = map.source_labels;
  for (std::size_t p = 0; p < out.values.size(); ++p) {
    out.values[p] = static_cast<float>(std::clamp(resized.data()[p], 0.0, 1.0));
  }
  return finalize(std::move(out));
}

SaliencyCache::SaliencyCache(std::string dir) : dir_(std::move(dir)) {
  std::filesystem::create_directories(dir_);
}

std::string SaliencyCache::key(const ImageTensor& image, const std::vector<int>& labels,
                               const std::string& backend_name, Polarity polarity) const {
  std::uint64_t image_hash = fnv1a(&image.width, sizeof(image.width));
  image_hash = fnv1a(&image.height, sizeof(image.height), image_hash);
  image_hash = fnv1a(image.chw.data(), image.chw.size() * sizeof(double), image_hash);

  std::ostringstream meta;
  meta << backend_name << (polarity == Polarity::kPositive ? "|+" : "|-");
  for (int label : labels) meta << "|" << label;
  const std::string meta_str = meta.str();
  std::uint64_t meta_hash = fnv1a(meta_str.data(), meta_str.size());
  return hex64(image_hash) + "-" + hex64(meta_hash);
}

std::optional<SaliencyMap> SaliencyCache::load(const std::string& key, Polarity polarity,
                                               const std::vector<int>& labels) const {
  const std::string path = dir_ + "/" + key + ".salmap";
  if (!std::filesystem::exists(path)) return std::nullopt;
  SaliencyMap map = io::read_salmap(path);
  map.polarity = polarity;
  map.source_labels = labels;
  std::sort(map.source_labels.begin(), map.source_labels.end());
  map.source_labels.erase(std::unique(map.source_labels.begin(), map.source_labels.end()),
                          map.source_labels.end());
  return finalize(std::move(map));
}

void SaliencyCache::store(const std::string& key, const SaliencyMap& map) const {
  const std::string path = dir_ + "/" + key + ".salmap";
  std::ostringstream header;
  header << "SALMAP " << map.width << " " << map.height << "\n";
  std::string bytes = header.str();
  bytes.reserve(bytes.size() + map.values.size() * sizeof(float));
  for (float v : map.values) {
    const auto* raw = reinterpret_cast<const unsigned char*>(&v);
    bytes.append(reinterpret_cast<const char*>(raw), sizeof(float));
  }
  io::atomic_write_file(path, bytes);
}

namespace {

SaliencyMap composed_for(const ImageTensor& image, const std::vector<ScoredLabel>& scored,
                         Polarity polarity, const ClassifierBackend& classifier,
                         const SaliencyCache* cache, std::vector<std::string>* warnings) {
  if (scored.empty()) {
    warnings->push_back(std::string("no ") +
                        (polarity == Polarity::kPositive ? "positive" : "negative") +
                        " proxy labels; substituting the zero map");
    SaliencyMap zero = SaliencyMap::zeros(image.width, image.height, polarity);
    zero.degenerate = true;
    return zero;
  }
  std::vector<int> labels;
  for (const ScoredLabel& s : scored) labels.push_back(s.class_index);

  std::string key;
  if (cache != nullptr) {
    key = cache->key(image, labels, classifier.spec().name, polarity);
    if (auto hit = cache->load(key, polarity, labels)) return *std::move(hit);
  }

  std::vector<SaliencyMap> maps;
  maps.reserve(labels.size());
  for (int label : labels) {
    SaliencyMap map = single_label_saliency(classifier.guided_backprop_gradient(image, label));
    map.polarity = polarity;
    map.source_labels = {label};
    maps.push_back(std::move(map));
  }
  SaliencyMap composed = resize_saliency(compose_saliency(maps), image.width, image.height);
  if (cache != nullptr) cache->store(key, composed);
  return composed;
}

}  // namespace

AttentionMaps generate_attention_maps(const ImageTensor& image, const ProxyLabelSet& proxies,
                                      const ClassifierBackend& classifier,
                                      const SaliencyCache* cache) {
  if (image.width <= 0 || image.height <= 0)
    throw ShapeError("attention maps require a non-empty image");
  AttentionMaps out;
  out.positive = composed_for(image, proxies.positives, Polarity::kPositive, classifier, cache,
                              &out.warnings);
  out.negative = composed_for(image, proxies.negatives, Polarity::kNegative, classifier, cache,
                              &out.warnings);
  return out;
}

}  // namespace lexseg
