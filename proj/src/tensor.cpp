#include "lexseg/tensor.hpp"

#include <algorithm>
#include <cmath>

namespace lexseg {

ImageTensor to_image_tensor(const ImageU8& im) {
  ImageTensor t = ImageTensor::zeros(im.width, im.height);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      const std::uint8_t* p = im.px(x, y);
      for (int c = 0; c < 3; ++c) t.at(c, y, x) = p[c] / 255.0;
    }
  }
  return t;
}

ImageU8 to_image_u8(const ImageTensor& im) {
  ImageU8 u = ImageU8::filled(im.width, im.height, 0, 0, 0);
  for (int y = 0; y < im.height; ++y) {
    for (int x = 0; x < im.width; ++x) {
      std::uint8_t* p = u.px(x, y);
      for (int c = 0; c < 3; ++c) {
        double v = std::clamp(im.at(c, y, x), 0.0, 1.0);
        p[c] = static_cast<std::uint8_t>(std::lround(v * 255.0));
      }
    }
  }
  return u;
}

}  // namespace lexseg
