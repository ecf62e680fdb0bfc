#pragma once

#include <cassert>
#include <cstdint>
#include <numeric>
#include <vector>

#include "lexseg/common.hpp"

namespace lexseg {

// Dense row-major double tensor. All network math runs in double; narrow
// formats (f32 rasters, u8 images) live only at the I/O boundary.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(std::vector<int> shape) : shape_(std::move(shape)) {
    v_.assign(static_cast<std::size_t>(count(shape_)), 0.0);
  }
  Tensor(std::vector<int> shape, std::vector<double> values)
      : shape_(std::move(shape)), v_(std::move(values)) {
    if (static_cast<std::int64_t>(v_.size()) != count(shape_))
      throw ShapeError("tensor value count does not match shape");
  }

  static Tensor zeros(std::vector<int> shape) { return Tensor(std::move(shape)); }

  int rank() const { return static_cast<int>(shape_.size()); }
  int dim(int i) const { return shape_[static_cast<std::size_t>(i)]; }
  const std::vector<int>& shape() const { return shape_; }
  std::int64_t size() const { return static_cast<std::int64_t>(v_.size()); }
  bool empty() const { return v_.empty(); }

  double* data() { return v_.data(); }
  const double* data() const { return v_.data(); }
  std::vector<double>& values() { return v_; }
  const std::vector<double>& values() const { return v_; }

  double& operator[](std::int64_t i) { return v_[static_cast<std::size_t>(i)]; }
  double operator[](std::int64_t i) const { return v_[static_cast<std::size_t>(i)]; }

  double& at(int i, int j) { return v_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  double at(int i, int j) const { return v_[static_cast<std::size_t>(i) * shape_[1] + j]; }
  double& at(int i, int j, int k) {
    return v_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double at(int i, int j, int k) const {
    return v_[(static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k];
  }
  double& at(int i, int j, int k, int l) {
    return v_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  double at(int i, int j, int k, int l) const {
    return v_[((static_cast<std::size_t>(i) * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  static std::int64_t count(const std::vector<int>& shape) {
    std::int64_t n = 1;
    for (int d : shape) n *= d;
    return shape.empty() ? 0 : n;
  }

 private:
  std::vector<int> shape_;
  std::vector<double> v_;
};

// RGB image in [0,1], channel-planar [3,h,w].
struct ImageTensor {
  int width = 0;
  int height = 0;
  Tensor chw;

  static ImageTensor zeros(int w, int h) {
    ImageTensor t;
    t.width = w;
    t.height = h;
    t.chw = Tensor({3, h, w});
    return t;
  }
  double& at(int c, int y, int x) { return chw.at(c, y, x); }
  double at(int c, int y, int x) const { return chw.at(c, y, x); }
};

// Signed input-space gradient, channel-planar [3,h,w]. Spatial size matches
// whatever resolution the producing backend processed the image at.
struct GradientTensor {
  int width = 0;
  int height = 0;
  Tensor chw;
};

// Interleaved 8-bit RGB, which is what dataset storage and GrabCut color
// models work on.
struct ImageU8 {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> rgb;  // 3 * width * height, row-major, RGB order

  static ImageU8 filled(int w, int h, std::uint8_t r, std::uint8_t g, std::uint8_t b) {
    ImageU8 im;
    im.width = w;
    im.height = h;
    im.rgb.resize(static_cast<std::size_t>(w) * h * 3);
    for (std::size_t i = 0; i < im.rgb.size(); i += 3) {
      im.rgb[i] = r;
      im.rgb[i + 1] = g;
      im.rgb[i + 2] = b;
    }
    return im;
  }
  std::uint8_t* px(int x, int y) { return &rgb[(static_cast<std::size_t>(y) * width + x) * 3]; }
  const std::uint8_t* px(int x, int y) const {
    return &rgb[(static_cast<std::size_t>(y) * width + x) * 3];
  }
};

ImageTensor to_image_tensor(const ImageU8& im);
ImageU8 to_image_u8(const ImageTensor& im);

}  // namespace lexseg
