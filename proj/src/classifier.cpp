#include "lexseg/classifier.hpp"

#include <cmath>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <utility>

#include <json.hpp>

#include "lexseg/io.hpp"
#include "lexseg/nn.hpp"

namespace lexseg {
namespace {

namespace fs = std::filesystem;

struct Layer {
  enum class Kind { kConv, kRelu, kMaxPool, kGlobalAvgPool, kFlatten, kLinear };
  Kind kind;
  Tensor w;
  Tensor b;
  nn::ConvSpec conv;
};

Layer make_conv(Tensor w, Tensor b, nn::ConvSpec spec) {
  return Layer{Layer::Kind::kConv, std::move(w), std::move(b), spec};
}
Layer make_relu() { return Layer{Layer::Kind::kRelu, {}, {}, {}}; }
Layer make_maxpool() { return Layer{Layer::Kind::kMaxPool, {}, {}, {}}; }
Layer make_gap() { return Layer{Layer::Kind::kGlobalAvgPool, {}, {}, {}}; }
Layer make_flatten() { return Layer{Layer::Kind::kFlatten, {}, {}, {}}; }
Layer make_linear(Tensor w, Tensor b) {
  return Layer{Layer::Kind::kLinear, std::move(w), std::move(b), {}};
}

// Forward pass that records every layer input so the gradient walk can
// re-derive rectifier masks and pooling routes.
struct Trace {
  std::vector<Tensor> inputs;
  std::vector<std::vector<std::int32_t>> pool_argmax;
  Tensor output;
};

Trace run_forward(const std::vector<Layer>& layers, Tensor x) {
  Trace trace;
  trace.inputs.reserve(layers.size());
  trace.pool_argmax.resize(layers.size());
  for (std::size_t i = 0; i < layers.size(); ++i) {
    const Layer& layer = layers[i];
    trace.inputs.push_back(x);
    switch (layer.kind) {
      case Layer::Kind::kConv:
        x = nn::conv2d(x, layer.w, layer.b, layer.conv);
        break;
      case Layer::Kind::kRelu:
        x = nn::relu(x);
        break;
      case Layer::Kind::kMaxPool:
        x = nn::maxpool2(x, trace.pool_argmax[i]);
        break;
      case Layer::Kind::kGlobalAvgPool:
        x = nn::global_avg_pool(x);
        break;
      case Layer::Kind::kFlatten:
        x = Tensor({x.dim(0), static_cast<int>(x.size() / x.dim(0))}, x.values());
        break;
      case Layer::Kind::kLinear:
        x = nn::linear(x, layer.w, layer.b);
        break;
    }
  }
  trace.output = std::move(x);
  return trace;
}

Tensor run_backward(const std::vector<Layer>& layers, const Trace& trace, Tensor gy,
                    GradientRule rule) {
  for (std::size_t idx = layers.size(); idx-- > 0;) {
    const Layer& layer = layers[idx];
    const Tensor& input = trace.inputs[idx];
    switch (layer.kind) {
      case Layer::Kind::kConv:
        gy = nn::conv2d_backward_input(gy, layer.w, input.shape(), layer.conv);
        break;
      case Layer::Kind::kRelu:
        gy = rule == GradientRule::kGuided ? nn::relu_backward_guided(gy, input)
                                           : nn::relu_backward(gy, input);
        break;
      case Layer::Kind::kMaxPool:
        gy = nn::maxpool2_backward(gy, trace.pool_argmax[idx], input.shape());
        break;
      case Layer::Kind::kGlobalAvgPool:
        gy = nn::global_avg_pool_backward(gy, input.shape());
        break;
      case Layer::Kind::kFlatten:
        gy = Tensor(input.shape(), gy.values());
        break;
      case Layer::Kind::kLinear:
        gy = nn::linear_backward_input(gy, layer.w);
        break;
    }
  }
  return gy;
}

void check_image(const ImageTensor& image) {
  if (image.width < 1 || image.height < 1)
    throw ShapeError("classifier input image has zero size");
  if (image.chw.rank() != 3 || image.chw.dim(0) != 3 ||
      image.chw.dim(1) != image.height || image.chw.dim(2) != image.width)
    throw ShapeError("classifier input image must be a [3,h,w] tensor");
}

// Shared preprocessing: optional bilinear resize to the backend's square
// input size, then per-channel mean/std normalization. Returns [1,3,h,w].
class SequentialBackend : public ClassifierBackend {
 public:
  SequentialBackend(BackendSpec spec, std::vector<Layer> layers)
      : spec_(std::move(spec)), layers_(std::move(layers)) {
    for (const Layer& layer : layers_)
      if (layer.kind == Layer::Kind::kConv) {
        first_conv_ = &layer;
        break;
      }
    if (first_conv_ == nullptr) throw ConfigError("classifier has no convolution layer");
    const Layer& last = layers_.back();
    num_classes_ = last.kind == Layer::Kind::kLinear ? last.w.dim(0) : 0;
    if (num_classes_ <= 0) throw ConfigError("classifier must end in a linear head");
  }

  const BackendSpec& spec() const override { return spec_; }
  int num_classes() const override { return num_classes_; }
  const Tensor& first_layer_weights() const override { return first_conv_->w; }

  std::vector<double> predict_logits(const ImageTensor& image) const override {
    check_image(image);
    Trace trace = run_forward(layers_, preprocess(image));
    return trace.output.values();
  }

  GradientTensor input_gradient(const ImageTensor& image, int class_index,
                                GradientRule rule) const override {
    check_image(image);
    if (class_index < 0 || class_index >= num_classes_)
      throw std::out_of_range("class index " + std::to_string(class_index) +
                              " outside vocabulary of size " + std::to_string(num_classes_));
    Trace trace = run_forward(layers_, preprocess(image));
    Tensor seed({1, num_classes_});
    seed.at(0, class_index) = 1.0;
    Tensor gx = run_backward(layers_, trace, std::move(seed), rule);

    GradientTensor grad;
    grad.height = gx.dim(2);
    grad.width = gx.dim(3);
    grad.chw = Tensor({3, grad.height, grad.width}, gx.values());
    // Chain through the normalization so the gradient refers to [0,1] pixels.
    for (int c = 0; c < 3; ++c)
      for (int y = 0; y < grad.height; ++y)
        for (int x = 0; x < grad.width; ++x) grad.chw.at(c, y, x) /= spec_.std[static_cast<std::size_t>(c)];
    return grad;
  }

 private:
  Tensor preprocess(const ImageTensor& image) const {
    Tensor x({1, 3, image.height, image.width}, image.chw.values());
    if (spec_.input_size > 0) x = nn::upsample_bilinear(x, spec_.input_size, spec_.input_size);
    const int h = x.dim(2), w = x.dim(3);
    for (int c = 0; c < 3; ++c) {
      const double m = spec_.mean[static_cast<std::size_t>(c)];
      const double s = spec_.std[static_cast<std::size_t>(c)];
      for (int y = 0; y < h; ++y)
        for (int xx = 0; xx < w; ++xx) {
          double& v = x[(static_cast<std::size_t>(c) * h + y) * w + xx];
          v = (v - m) / s;
        }
    }
    return x;
  }

  BackendSpec spec_;
  std::vector<Layer> layers_;
  const Layer* first_conv_ = nullptr;
  int num_classes_ = 0;
};

// The fixture network, fixed in closed form so tests need no weight files.
// conv1 responds to how strongly a pixel's color matches one of six palette
// colors (zero-mean center taps kill gray/desaturated pixels, bias -0.45
// kills mismatched colors); conv2 spreads the response over a 3x3 box; a
// global average pool and a cross-talking linear head produce logits. Each
// class weighs its complementary color negatively, which gives the backward
// pass genuinely negative upstream gradients, so the guided and plain rules
// disagree on real inputs.
constexpr double kFixtureConvBias = -0.45;
constexpr double kFixtureCrossTalk = 0.2;
constexpr double kFixtureComplementTalk = -0.2;
constexpr double kFixtureHeadBiasStep = 0.001;

int complement_class(int k) { return fixture::kNumClasses - 1 - k; }

std::vector<Layer> fixture_layers() {
  Tensor w1({fixture::kNumClasses, 3, 3, 3});
  Tensor b1({fixture::kNumClasses});
  for (int k = 0; k < fixture::kNumClasses; ++k) {
    std::array<double, 3> color = fixture::class_color(k);
    double mean = (color[0] + color[1] + color[2]) / 3.0;
    for (int c = 0; c < 3; ++c) w1.at(k, c, 1, 1) = color[static_cast<std::size_t>(c)] - mean;
    b1[k] = kFixtureConvBias;
  }

  Tensor w2({fixture::kNumClasses, fixture::kNumClasses, 3, 3});
  Tensor b2({fixture::kNumClasses});
  for (int k = 0; k < fixture::kNumClasses; ++k)
    for (int y = 0; y < 3; ++y)
      for (int x = 0; x < 3; ++x) w2.at(k, k, y, x) = 1.0;

  Tensor wh({fixture::kNumClasses, fixture::kNumClasses});
  Tensor bh({fixture::kNumClasses});
  for (int k = 0; k < fixture::kNumClasses; ++k) {
    for (int j = 0; j < fixture::kNumClasses; ++j) {
      if (j == k)
        wh.at(k, j) = 1.0;
      else
        wh.at(k, j) = j == complement_class(k) ? kFixtureComplementTalk : kFixtureCrossTalk;
    }
    bh[k] = kFixtureHeadBiasStep * k;
  }

  std::vector<Layer> layers;
  layers.push_back(make_conv(std::move(w1), std::move(b1), nn::ConvSpec{1, 1, 1}));
  layers.push_back(make_relu());
  layers.push_back(make_conv(std::move(w2), std::move(b2), nn::ConvSpec{1, 1, 1}));
  layers.push_back(make_relu());
  layers.push_back(make_gap());
  layers.push_back(make_linear(std::move(wh), std::move(bh)));
  return layers;
}

const Tensor& named_array(const io::NamedTensors& bundle, const std::string& name,
                          const std::string& path) {
  const Tensor* t = bundle.find(name);
  if (t == nullptr)
    throw ResourceError("weights container " + path + " is missing array '" + name + "'");
  return *t;
}

std::vector<Layer> vgg19_layers(const std::string& weights_path) {
  io::NamedTensors bundle = io::load_tensors(weights_path);
  const std::vector<std::vector<std::string>> blocks = {
      {"conv1_1", "conv1_2"},
      {"conv2_1", "conv2_2"},
      {"conv3_1", "conv3_2", "conv3_3", "conv3_4"},
      {"conv4_1", "conv4_2", "conv4_3", "conv4_4"},
      {"conv5_1", "conv5_2", "conv5_3", "conv5_4"},
  };
  std::vector<Layer> layers;
  for (const auto& block : blocks) {
    for (const std::string& name : block) {
      layers.push_back(make_conv(named_array(bundle, name + ".weight", weights_path),
                                 named_array(bundle, name + ".bias", weights_path),
                                 nn::ConvSpec{1, 1, 1}));
      layers.push_back(make_relu());
    }
    layers.push_back(make_maxpool());
  }
  layers.push_back(make_flatten());
  for (const std::string& name : {"fc6", "fc7"}) {
    layers.push_back(make_linear(named_array(bundle, name + ".weight", weights_path),
                                 named_array(bundle, name + ".bias", weights_path)));
    layers.push_back(make_relu());
  }
  layers.push_back(make_linear(named_array(bundle, "fc8.weight", weights_path),
                               named_array(bundle, "fc8.bias", weights_path)));
  return layers;
}

}  // namespace

ClassScores ClassifierBackend::predict_scores(const ImageTensor& image) const {
  return ClassScores{nn::softmax(predict_logits(image))};
}

namespace fixture {

const std::vector<std::string>& class_labels() {
  static const std::vector<std::string> kLabels = {"red",    "green",   "blue",
                                                   "yellow", "magenta", "cyan"};
  return kLabels;
}

std::array<double, 3> class_color(int class_index) {
  static constexpr std::array<std::array<double, 3>, kNumClasses> kPalette = {{
      {1.0, 0.0, 0.0},
      {0.0, 1.0, 0.0},
      {0.0, 0.0, 1.0},
      {1.0, 1.0, 0.0},
      {1.0, 0.0, 1.0},
      {0.0, 1.0, 1.0},
  }};
  if (class_index < 0 || class_index >= kNumClasses)
    throw std::out_of_range("fixture class index out of range");
  return kPalette[static_cast<std::size_t>(class_index)];
}

}  // namespace fixture

BackendSpec backend_spec_from_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open backend spec file " + path);
  nlohmann::json j;
  try {
    in >> j;
  } catch (const nlohmann::json::exception& e) {
    throw ConfigError("backend spec " + path + " is not valid JSON: " + e.what());
  }
  if (!j.contains("name")) throw ConfigError("backend spec " + path + " lacks a \"name\"");
  BackendSpec spec;
  spec.name = j.at("name").get<std::string>();
  spec.weights_path = j.value("weights", std::string());
  spec.input_size = j.value("input_size", 0);
  auto read3 = [&](const char* key, std::array<double, 3>& out) {
    if (!j.contains(key)) return;
    const auto& arr = j.at(key);
    if (!arr.is_array() || arr.size() != 3)
      throw ConfigError("backend spec " + path + " field \"" + key +
                        "\" must be an array of 3 numbers");
    for (int i = 0; i < 3; ++i) out[static_cast<std::size_t>(i)] = arr[static_cast<std::size_t>(i)].get<double>();
  };
  read3("mean", spec.mean);
  read3("std", spec.std);
  return spec;
}

std::unique_ptr<ClassifierBackend> load_backend(const BackendSpec& spec) {
  if (spec.name == "fixture") {
    BackendSpec fixed = spec;
    fixed.input_size = 0;
    fixed.mean = {0.0, 0.0, 0.0};
    fixed.std = {1.0, 1.0, 1.0};
    return std::make_unique<SequentialBackend>(std::move(fixed), fixture_layers());
  }
  if (spec.name == "vgg19-imagenet1k") {
    if (spec.weights_path.empty() || !fs::exists(spec.weights_path))
      throw ResourceError(
          "vgg19-imagenet1k weights not found at '" + spec.weights_path +
          "'; convert a torchvision checkpoint with tools/export_vgg19.py first");
    BackendSpec fixed = spec;
    if (fixed.input_size == 0) fixed.input_size = 224;
    if (fixed.mean == std::array<double, 3>{0.0, 0.0, 0.0})
      fixed.mean = {0.485, 0.456, 0.406};
    if (fixed.std == std::array<double, 3>{1.0, 1.0, 1.0})
      fixed.std = {0.229, 0.224, 0.225};
    return std::make_unique<SequentialBackend>(std::move(fixed), vgg19_layers(spec.weights_path));
  }
  throw ConfigError("unknown classifier backend '" + spec.name + "'");
}

}  // namespace lexseg
