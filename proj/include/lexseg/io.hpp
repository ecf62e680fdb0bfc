#pragma once

#include <string>
#include <utility>
#include <vector>

#include <json.hpp>

#include "lexseg/rasters.hpp"
#include "lexseg/tensor.hpp"

namespace lexseg::io {

// Self-describing weight container: magic, JSON header (meta + array index),
// then raw little-endian payloads in index order. Used for pretrained weights
// and training checkpoints.
struct NamedTensors {
  nlohmann::json meta;
  std::vector<std::pair<std::string, Tensor>> arrays;

  const Tensor* find(const std::string& name) const {
    for (const auto& [n, t] : arrays)
      if (n == name) return &t;
    return nullptr;
  }
};

void save_tensors(const std::string& path, const NamedTensors& bundle);
NamedTensors load_tensors(const std::string& path);

// Image file I/O (JPEG/PNG via OpenCV). Images are RGB.
ImageU8 read_image(const std::string& path);
void write_image(const std::string& path, const ImageU8& image);

// Mask PNG: single channel, 0 = background, 255 = foreground.
void write_mask_png(const std::string& path, const SegmentationMask& mask);
SegmentationMask read_mask_png(const std::string& path);

// Annotation debug PNG: codes {0: SB, 85: PB, 170: PF, 255: SF}.
void write_annotation_png(const std::string& path, const AnnotationImage& ann);
AnnotationImage read_annotation_png(const std::string& path);

// Portable saliency raster: ASCII header "SALMAP <w> <h>\n" followed by
// w*h little-endian f32, row-major.
void write_salmap(const std::string& path, const SaliencyMap& map);
SaliencyMap read_salmap(const std::string& path);

// Write via temp file + atomic rename, so concurrent writers never expose a
// partial file.
void atomic_write_file(const std::string& path, const std::string& bytes);

std::string read_file(const std::string& path);

}  // namespace lexseg::io
