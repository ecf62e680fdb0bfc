#pragma once

#include <array>
#include <memory>
#include <string>
#include <vector>

#include "lexseg/tensor.hpp"

namespace lexseg {

// How rectifier units treat the backward pass when computing input gradients.
// kGuided zeroes the gradient wherever the forward input OR the upstream
// gradient is non-positive; kPlain is standard backprop (forward input only).
enum class GradientRule { kGuided, kPlain };

struct BackendSpec {
  std::string name;
  std::string weights_path;
  // Square side length images are resized to before the forward pass.
  // 0 means the network runs at native image resolution.
  int input_size = 0;
  std::array<double, 3> mean = {0.0, 0.0, 0.0};
  std::array<double, 3> std = {1.0, 1.0, 1.0};
};

// Parses a JSON backend description: {"name": ..., "weights": ...,
// "input_size": ..., "mean": [r,g,b], "std": [r,g,b]}. Only "name" is
// required.
BackendSpec backend_spec_from_file(const std::string& path);

struct ClassScores {
  std::vector<double> probabilities;
};

class ClassifierBackend {
 public:
  virtual ~ClassifierBackend() = default;

  virtual const BackendSpec& spec() const = 0;
  virtual int num_classes() const = 0;

  // Pre-softmax class logits for a single image.
  virtual std::vector<double> predict_logits(const ImageTensor& image) const = 0;

  // Softmax probabilities over all classes; deterministic per backend+input.
  ClassScores predict_scores(const ImageTensor& image) const;

  // Gradient of the class logit with respect to the (resized, unnormalized)
  // input pixels. Spatial size equals spec().input_size when that is nonzero,
  // otherwise the image's own size.
  virtual GradientTensor input_gradient(const ImageTensor& image, int class_index,
                                        GradientRule rule) const = 0;

  GradientTensor guided_backprop_gradient(const ImageTensor& image, int class_index) const {
    return input_gradient(image, class_index, GradientRule::kGuided);
  }

  // RGB kernel of the first convolution, used to seed segmentation models.
  virtual const Tensor& first_layer_weights() const = 0;
};

// Supported names: "fixture" (analytic color-response network bundled for
// tests, no weights file) and "vgg19-imagenet1k" (weights container required).
std::unique_ptr<ClassifierBackend> load_backend(const BackendSpec& spec);

// The fixture backend responds to six saturated colors. Its class order,
// labels and palette are shared with the synthetic shapes generator.
namespace fixture {

inline constexpr int kNumClasses = 6;

const std::vector<std::string>& class_labels();
std::array<double, 3> class_color(int class_index);

}  // namespace fixture

}  // namespace lexseg
