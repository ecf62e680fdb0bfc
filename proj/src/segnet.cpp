#include "lexseg/segnet.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <sstream>
#include <utility>

#include "lexseg/classifier.hpp"
#include "lexseg/io.hpp"

namespace lexseg::segnet {

namespace {

constexpr int kTinyWidth = 6;  // pinned by the fixture backend's first layer
constexpr int kTinyAsppWidth = 3;
constexpr int kFullAsppWidth = 256;

Tensor reshape(const Tensor& t, std::vector<int> shape) {
  return Tensor(std::move(shape), t.values());
}

void add_into(Tensor& dst, const Tensor& src) {
  double* d = dst.data();
  const double* s = src.data();
  for (std::int64_t i = 0; i < dst.size(); ++i) d[i] += s[i];
}

ConvLayer make_layer(std::string name, int out, int in, int k, nn::ConvSpec spec,
                     bool relu_after = true, bool pool_after = false) {
  ConvLayer layer;
  layer.name = std::move(name);
  layer.w = Tensor({out, in, k, k});
  layer.b = Tensor({out});
  layer.spec = spec;
  layer.relu_after = relu_after;
  layer.pool_after = pool_after;
  return layer;
}

// Architecture with zero weights; initialization is layered on separately so
// checkpoint loading never touches pretrained sources.
Model make_skeleton(const ModelConfig& config) {
  config.validate();
  Model m;
  m.config = config;
  int feat_width = 0;
  int aspp_width = 0;
  if (config.backbone == "tiny") {
    m.trunk.push_back(make_layer("enc1", kTinyWidth, config.input_channels, 3, {1, 1, 1}));
    m.trunk.push_back(make_layer("enc2", kTinyWidth, kTinyWidth, 3, {config.output_stride, 1, 1}));
    feat_width = kTinyWidth;
    aspp_width = kTinyAsppWidth;
  } else {
    struct Block {
      int width;
      int convs;
      int dilation;
      bool pool;
    };
    const std::vector<Block> blocks = {
        {64, 2, 1, true}, {128, 2, 1, true}, {256, 4, 1, true}, {512, 4, 2, false},
        {512, 4, 4, false},
    };
    int in = config.input_channels;
    for (std::size_t bi = 0; bi < blocks.size(); ++bi) {
      const Block& blk = blocks[bi];
      for (int ci = 0; ci < blk.convs; ++ci) {
        std::string name = "conv" + std::to_string(bi + 1) + "_" + std::to_string(ci + 1);
        bool last_in_block = ci == blk.convs - 1;
        m.trunk.push_back(make_layer(std::move(name), blk.width, in, 3,
                                     {1, blk.dilation, blk.dilation}, true,
                                     last_in_block && blk.pool));
        in = blk.width;
      }
    }
    feat_width = 512;
    aspp_width = kFullAsppWidth;
  }
  m.aspp_proj = make_layer("aspp_proj", aspp_width, feat_width, 1, {1, 0, 1});
  for (int rate : config.atrous_rates)
    m.aspp_atrous.push_back(
        make_layer("aspp_rate" + std::to_string(rate), aspp_width, feat_width, 3, {1, rate, rate}));
  m.aspp_pool = make_layer("aspp_pool", aspp_width, feat_width, 1, {1, 0, 1});
  int cat_width = aspp_width * (2 + static_cast<int>(config.atrous_rates.size()));
  m.fuse = make_layer("fuse", feat_width, cat_width, 1, {1, 0, 1});
  m.head = make_layer("head", config.num_output_channels, feat_width, 1, {1, 0, 1}, false);
  return m;
}

void he_fill(Tensor& w, Rng& rng) {
  double fan_in = static_cast<double>(w.dim(1)) * w.dim(2) * w.dim(3);
  double sigma = std::sqrt(2.0 / fan_in);
  for (std::int64_t i = 0; i < w.size(); ++i) w[i] = sigma * rng.normal();
}

void init_first_layer(ConvLayer& conv1, const Tensor& pretrained, Rng& rng) {
  if (pretrained.rank() != 4 || pretrained.dim(1) != 3)
    throw ConfigError("initialization source first layer is not an RGB convolution kernel");
  if (pretrained.dim(0) != conv1.w.dim(0) || pretrained.dim(2) != conv1.w.dim(2) ||
      pretrained.dim(3) != conv1.w.dim(3))
    throw ConfigError("initialization source first layer has " +
                      std::to_string(pretrained.dim(0)) + " filters of " +
                      std::to_string(pretrained.dim(2)) + "x" + std::to_string(pretrained.dim(3)) +
                      "; the first encoder layer expects " + std::to_string(conv1.w.dim(0)) +
                      " of " + std::to_string(conv1.w.dim(2)) + "x" +
                      std::to_string(conv1.w.dim(3)));
  int out = conv1.w.dim(0);
  int in = conv1.w.dim(1);
  int k = conv1.w.dim(2);
  double sigma = std::sqrt(2.0 / (static_cast<double>(in) * k * k));
  for (int o = 0; o < out; ++o) {
    for (int c = 0; c < in; ++c) {
      for (int i = 0; i < k; ++i) {
        for (int j = 0; j < k; ++j) {
          conv1.w.at(o, c, i, j) = c < 3 ? pretrained.at(o, c, i, j) : sigma * rng.normal();
        }
      }
    }
  }
}

const Tensor& bundle_array(const io::NamedTensors& bundle, const std::string& name,
                           const std::string& path) {
  const Tensor* t = bundle.find(name);
  if (t == nullptr)
    throw ResourceError("weights container " + path + " is missing array '" + name + "'");
  return *t;
}

void initialize(Model& m) {
  const ModelConfig& config = m.config;
  Rng rng(config.seed);
  if (config.backbone == "full") {
    if (config.init_weights.empty() || !std::filesystem::exists(config.init_weights))
      throw ResourceError("full backbone needs pretrained weights at '" + config.init_weights +
                          "'; convert a torchvision checkpoint with tools/export_vgg19.py first");
    io::NamedTensors bundle = io::load_tensors(config.init_weights);
    init_first_layer(m.trunk[0], bundle_array(bundle, m.trunk[0].name + ".weight",
                                              config.init_weights), rng);
    m.trunk[0].b = bundle_array(bundle, m.trunk[0].name + ".bias", config.init_weights);
    for (std::size_t i = 1; i < m.trunk.size(); ++i) {
      const Tensor& w = bundle_array(bundle, m.trunk[i].name + ".weight", config.init_weights);
      const Tensor& b = bundle_array(bundle, m.trunk[i].name + ".bias", config.init_weights);
      if (!w.same_shape(m.trunk[i].w) || !b.same_shape(m.trunk[i].b))
        throw ShapeError("pretrained array '" + m.trunk[i].name + "' does not match the trunk");
      m.trunk[i].w = w;
      m.trunk[i].b = b;
    }
  } else {
    BackendSpec spec;
    spec.name = config.init_source;
    spec.weights_path = config.init_weights;
    auto backend = load_backend(spec);
    init_first_layer(m.trunk[0], backend->first_layer_weights(), rng);
    for (std::size_t i = 1; i < m.trunk.size(); ++i) he_fill(m.trunk[i].w, rng);
  }
  he_fill(m.aspp_proj.w, rng);
  for (ConvLayer& branch : m.aspp_atrous) he_fill(branch.w, rng);
  he_fill(m.aspp_pool.w, rng);
  he_fill(m.fuse.w, rng);
  he_fill(m.head.w, rng);
}

// Every intermediate a backward pass needs, stored by value.
struct Trace {
  std::vector<Tensor> in;    // per trunk layer: its input
  std::vector<Tensor> pre;   // per trunk layer: conv output
  std::vector<Tensor> act;   // per trunk layer: after relu, before pool
  std::vector<std::vector<std::int32_t>> pool_argmax;
  Tensor feat;
  Tensor proj_pre, proj_act;
  std::vector<Tensor> atr_pre, atr_act;
  Tensor pool_in, pool_pre, pool_act, pool_up;
  Tensor cat;
  Tensor fuse_pre, fuse_act;
  Tensor head_out;
  Tensor logits;
  bool upsampled = false;
};

Tensor forward(const Model& m, const Tensor& x, Trace& t) {
  int in_h = x.dim(2);
  int in_w = x.dim(3);
  Tensor cur = x;
  for (const ConvLayer& layer : m.trunk) {
    t.in.push_back(cur);
    Tensor pre = nn::conv2d(cur, layer.w, layer.b, layer.spec);
    cur = layer.relu_after ? nn::relu(pre) : pre;
    t.pre.push_back(std::move(pre));
    t.act.push_back(cur);
    t.pool_argmax.emplace_back();
    if (layer.pool_after) cur = nn::maxpool2(cur, t.pool_argmax.back());
  }
  t.feat = cur;
  int fh = t.feat.dim(2);
  int fw = t.feat.dim(3);

  t.proj_pre = nn::conv2d(t.feat, m.aspp_proj.w, m.aspp_proj.b, m.aspp_proj.spec);
  t.proj_act = nn::relu(t.proj_pre);
  for (const ConvLayer& branch : m.aspp_atrous) {
    t.atr_pre.push_back(nn::conv2d(t.feat, branch.w, branch.b, branch.spec));
    t.atr_act.push_back(nn::relu(t.atr_pre.back()));
  }
  t.pool_in = reshape(nn::global_avg_pool(t.feat), {1, t.feat.dim(1), 1, 1});
  t.pool_pre = nn::conv2d(t.pool_in, m.aspp_pool.w, m.aspp_pool.b, m.aspp_pool.spec);
  t.pool_act = nn::relu(t.pool_pre);
  t.pool_up = nn::upsample_bilinear(t.pool_act, fh, fw);

  std::vector<const Tensor*> parts = {&t.proj_act};
  for (const Tensor& a : t.atr_act) parts.push_back(&a);
  parts.push_back(&t.pool_up);
  t.cat = nn::concat_channels(parts);

  t.fuse_pre = nn::conv2d(t.cat, m.fuse.w, m.fuse.b, m.fuse.spec);
  t.fuse_act = nn::relu(t.fuse_pre);
  t.head_out = nn::conv2d(t.fuse_act, m.head.w, m.head.b, m.head.spec);
  t.upsampled = fh != in_h || fw != in_w;
  t.logits = t.upsampled ? nn::upsample_bilinear(t.head_out, in_h, in_w) : t.head_out;
  return t.logits;
}

Gradients backward(const Model& m, const Trace& t, const Tensor& grad_logits) {
  std::vector<const ConvLayer*> layers = m.layers();
  Gradients g;
  g.w.reserve(layers.size());
  g.b.reserve(layers.size());
  for (const ConvLayer* layer : layers) {
    g.w.emplace_back(layer->w.shape());
    g.b.emplace_back(layer->b.shape());
  }
  std::size_t n_trunk = m.trunk.size();
  std::size_t i_proj = n_trunk;
  std::size_t i_atr0 = i_proj + 1;
  std::size_t i_pool = i_atr0 + m.aspp_atrous.size();
  std::size_t i_fuse = i_pool + 1;
  std::size_t i_head = i_fuse + 1;

  Tensor g_head =
      t.upsampled ? nn::upsample_bilinear_backward(grad_logits, t.head_out.shape()) : grad_logits;
  nn::conv2d_backward_params(g_head, t.fuse_act, m.head.spec, g.w[i_head], g.b[i_head]);
  Tensor g_fuse_act =
      nn::conv2d_backward_input(g_head, m.head.w, t.fuse_act.shape(), m.head.spec);
  Tensor g_fuse_pre = nn::relu_backward(g_fuse_act, t.fuse_pre);
  nn::conv2d_backward_params(g_fuse_pre, t.cat, m.fuse.spec, g.w[i_fuse], g.b[i_fuse]);
  Tensor g_cat = nn::conv2d_backward_input(g_fuse_pre, m.fuse.w, t.cat.shape(), m.fuse.spec);

  std::vector<int> widths;
  widths.push_back(t.proj_act.dim(1));
  for (const Tensor& a : t.atr_act) widths.push_back(a.dim(1));
  widths.push_back(t.pool_up.dim(1));
  std::vector<Tensor> g_parts = nn::split_channels(g_cat, widths);

  Tensor g_feat(t.feat.shape());
  {
    Tensor gp = nn::relu_backward(g_parts[0], t.proj_pre);
    nn::conv2d_backward_params(gp, t.feat, m.aspp_proj.spec, g.w[i_proj], g.b[i_proj]);
    add_into(g_feat, nn::conv2d_backward_input(gp, m.aspp_proj.w, t.feat.shape(),
                                               m.aspp_proj.spec));
  }
  for (std::size_t k = 0; k < m.aspp_atrous.size(); ++k) {
    const ConvLayer& branch = m.aspp_atrous[k];
    Tensor gp = nn::relu_backward(g_parts[k + 1], t.atr_pre[k]);
    nn::conv2d_backward_params(gp, t.feat, branch.spec, g.w[i_atr0 + k], g.b[i_atr0 + k]);
    add_into(g_feat, nn::conv2d_backward_input(gp, branch.w, t.feat.shape(), branch.spec));
  }
  {
    Tensor gp = nn::upsample_bilinear_backward(g_parts.back(), t.pool_act.shape());
    gp = nn::relu_backward(gp, t.pool_pre);
    nn::conv2d_backward_params(gp, t.pool_in, m.aspp_pool.spec, g.w[i_pool], g.b[i_pool]);
    Tensor g_pool_in =
        nn::conv2d_backward_input(gp, m.aspp_pool.w, t.pool_in.shape(), m.aspp_pool.spec);
    Tensor g_gap = reshape(g_pool_in, {1, t.feat.dim(1)});
    add_into(g_feat, nn::global_avg_pool_backward(g_gap, t.feat.shape()));
  }

  Tensor g_cur = std::move(g_feat);
  for (std::size_t i = n_trunk; i-- > 0;) {
    const ConvLayer& layer = m.trunk[i];
    if (layer.pool_after)
      g_cur = nn::maxpool2_backward(g_cur, t.pool_argmax[i], t.act[i].shape());
    if (layer.relu_after) g_cur = nn::relu_backward(g_cur, t.pre[i]);
    nn::conv2d_backward_params(g_cur, t.in[i], layer.spec, g.w[i], g.b[i]);
    if (i > 0) g_cur = nn::conv2d_backward_input(g_cur, layer.w, t.in[i].shape(), layer.spec);
  }
  return g;
}

Tensor input_as_batch(const Model& model, const AttentionInput& input) {
  if (input.channels.rank() != 3)
    throw ShapeError("attention input must be channel-planar [c,h,w]");
  if (input.channels.dim(0) != model.config.input_channels)
    throw ShapeError("model expects " + std::to_string(model.config.input_channels) +
                     " input channels, got " + std::to_string(input.channels.dim(0)));
  if (input.channels.dim(1) != input.height || input.channels.dim(2) != input.width)
    throw ShapeError("attention input dimensions disagree with its channel tensor");
  return reshape(input.channels, {1, input.channels.dim(0), input.height, input.width});
}

std::string checkpoint_file(const std::string& dir, int step) {
  char name[48];
  std::snprintf(name, sizeof(name), "checkpoint-%06d.lexw", step);
  return dir + "/" + name;
}

TrainingExample crop_example(const TrainingExample& ex, int crop, Rng& rng) {
  int w = ex.input.width;
  int h = ex.input.height;
  if (crop <= 0 || (w <= crop && h <= crop)) return ex;
  int cw = std::min(crop, w);
  int ch = std::min(crop, h);
  int x0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(w - cw + 1)));
  int y0 = static_cast<int>(rng.uniform_index(static_cast<std::uint64_t>(h - ch + 1)));
  TrainingExample out;
  out.target_label = ex.target_label;
  out.input.width = cw;
  out.input.height = ch;
  int c = ex.input.channels.dim(0);
  out.input.channels = Tensor({c, ch, cw});
  for (int ci = 0; ci < c; ++ci)
    for (int y = 0; y < ch; ++y)
      for (int x = 0; x < cw; ++x)
        out.input.channels.at(ci, y, x) = ex.input.channels.at(ci, y0 + y, x0 + x);
  out.mask = SegmentationMask::zeros(cw, ch);
  for (int y = 0; y < ch; ++y)
    for (int x = 0; x < cw; ++x) out.mask.at(x, y) = ex.mask.at(x0 + x, y0 + y);
  return out;
}

std::string trimmed(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r");
  return s.substr(a, b - a + 1);
}

int parse_int(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    int v = std::stoi(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("training config key '" + key + "' needs an integer, got '" + value + "'");
  }
}

double parse_double(const std::string& value, const std::string& key) {
  try {
    std::size_t used = 0;
    double v = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return v;
  } catch (const std::exception&) {
    throw ConfigError("training config key '" + key + "' needs a number, got '" + value + "'");
  }
}

std::vector<int> parse_int_list(const std::string& value, const std::string& key) {
  std::vector<int> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trimmed(item);
    if (!item.empty()) out.push_back(parse_int(item, key));
  }
  if (out.empty())
    throw ConfigError("training config key '" + key + "' needs at least one integer");
  return out;
}

}  // namespace

void ModelConfig::validate() const {
  if (backbone != "tiny" && backbone != "full")
    throw ConfigError("unknown backbone '" + backbone + "' (expected tiny or full)");
  if (input_channels < 3 || input_channels > 5)
    throw ConfigError("input_channels must be 3, 4, or 5, got " +
                      std::to_string(input_channels));
  if (num_output_channels != 2)
    throw ConfigError("the network is two-channel; num_output_channels must be 2");
  if (atrous_rates.empty()) throw ConfigError("at least one atrous rate is required");
  for (int rate : atrous_rates)
    if (rate < 1) throw ConfigError("atrous rates must be positive");
  if (backbone == "tiny" && output_stride != 1 && output_stride != 2)
    throw ConfigError("tiny backbone supports output stride 1 or 2");
  if (backbone == "full" && output_stride != 8)
    throw ConfigError("full backbone is built at output stride 8");
}

ModelConfig tiny_config() { return ModelConfig{}; }

ModelConfig full_config() {
  ModelConfig config;
  config.backbone = "full";
  config.output_stride = 8;
  config.atrous_rates = {6, 12, 18};
  config.init_source = "vgg19-imagenet1k";
  return config;
}

AttentionInput make_attention_input(const ImageTensor& image, const SaliencyMap* positive,
                                    const SaliencyMap* negative) {
  if (negative != nullptr && positive == nullptr)
    throw ConfigError("a negative attention channel requires a positive one");
  for (const SaliencyMap* map : {positive, negative}) {
    if (map == nullptr) continue;
    if (map->width != image.width || map->height != image.height)
      throw ShapeError("attention map dimensions do not match the image");
    for (float v : map->values)
      if (!(v >= 0.0f && v <= 1.0f))
        throw ConfigError("attention channel values must lie in [0,1]");
  }
  int channels = 3 + (positive != nullptr ? 1 : 0) + (negative != nullptr ? 1 : 0);
  AttentionInput input;
  input.width = image.width;
  input.height = image.height;
  input.channels = Tensor({channels, image.height, image.width});
  std::copy(image.chw.values().begin(), image.chw.values().end(),
            input.channels.values().begin());
  std::int64_t plane = static_cast<std::int64_t>(image.height) * image.width;
  if (positive != nullptr)
    for (std::int64_t i = 0; i < plane; ++i)
      input.channels[3 * plane + i] = static_cast<double>(positive->values[static_cast<std::size_t>(i)]);
  if (negative != nullptr)
    for (std::int64_t i = 0; i < plane; ++i)
      input.channels[4 * plane + i] = static_cast<double>(negative->values[static_cast<std::size_t>(i)]);
  return input;
}

std::vector<ConvLayer*> Model::layers() {
  std::vector<ConvLayer*> out;
  for (ConvLayer& layer : trunk) out.push_back(&layer);
  out.push_back(&aspp_proj);
  for (ConvLayer& branch : aspp_atrous) out.push_back(&branch);
  out.push_back(&aspp_pool);
  out.push_back(&fuse);
  out.push_back(&head);
  return out;
}

std::vector<const ConvLayer*> Model::layers() const {
  std::vector<const ConvLayer*> out;
  for (const ConvLayer& layer : trunk) out.push_back(&layer);
  out.push_back(&aspp_proj);
  for (const ConvLayer& branch : aspp_atrous) out.push_back(&branch);
  out.push_back(&aspp_pool);
  out.push_back(&fuse);
  out.push_back(&head);
  return out;
}

std::int64_t Model::parameter_count() const {
  std::int64_t n = 0;
  for (const ConvLayer* layer : layers()) n += layer->w.size() + layer->b.size();
  return n;
}

Model build_model(const ModelConfig& config) {
  Model m = make_skeleton(config);
  initialize(m);
  return m;
}

Tensor predict_logits(const Model& model, const AttentionInput& input) {
  Tensor x = input_as_batch(model, input);
  Trace trace;
  Tensor logits = forward(model, x, trace);
  return reshape(logits, {logits.dim(1), logits.dim(2), logits.dim(3)});
}

LikelihoodImage predict_likelihood(const Model& model, const AttentionInput& input) {
  Tensor x = input_as_batch(model, input);
  Trace trace;
  Tensor logits = forward(model, x, trace);
  Tensor fg = nn::softmax2_foreground(logits);
  LikelihoodImage out = LikelihoodImage::zeros(input.width, input.height);
  for (std::int64_t i = 0; i < fg.size(); ++i)
    out.values[static_cast<std::size_t>(i)] = static_cast<float>(fg[i]);
  return out;
}

double training_loss(const Model& model, const TrainingExample& example, Gradients* grads) {
  Tensor x = input_as_batch(model, example.input);
  if (example.mask.width != example.input.width || example.mask.height != example.input.height)
    throw ShapeError("training mask dimensions do not match the input");
  Trace trace;
  Tensor logits = forward(model, x, trace);
  Tensor grad_logits;
  double loss = nn::softmax2_cross_entropy(logits, example.mask.values,
                                           grads != nullptr ? &grad_logits : nullptr);
  if (grads != nullptr) *grads = backward(model, trace, grad_logits);
  return loss;
}

void TrainHyper::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be positive");
  if (optimizer != "adam" && optimizer != "sgd-poly")
    throw ConfigError("unknown optimizer '" + optimizer + "' (expected adam or sgd-poly)");
  if (momentum < 0.0 || momentum >= 1.0) throw ConfigError("momentum must lie in [0,1)");
  if (!(poly_power > 0.0)) throw ConfigError("poly_power must be positive");
  if (weight_decay < 0.0) throw ConfigError("weight_decay must be non-negative");
  if (batch_size < 1) throw ConfigError("batch_size must be at least 1");
  if (crop_size < 0) throw ConfigError("crop_size must be non-negative");
  if (checkpoint_every < 0) throw ConfigError("checkpoint_every must be non-negative");
}

TrainState train(Model& model, const ExampleSource& next_example, int steps,
                 const TrainHyper& hyper) {
  hyper.validate();
  if (steps < 0) throw ConfigError("steps must be non-negative");
  TrainState state;
  if (steps == 0) return state;
  if (!hyper.checkpoint_dir.empty())
    std::filesystem::create_directories(hyper.checkpoint_dir);

  std::vector<ConvLayer*> layers = model.layers();
  std::size_t n = layers.size();
  std::vector<Tensor> mo_w(n), mo_b(n), vel_w(n), vel_b(n);
  for (std::size_t i = 0; i < n; ++i) {
    mo_w[i] = Tensor(layers[i]->w.shape());
    mo_b[i] = Tensor(layers[i]->b.shape());
    vel_w[i] = Tensor(layers[i]->w.shape());
    vel_b[i] = Tensor(layers[i]->b.shape());
  }
  Rng crop_rng(hyper.seed);

  auto apply = [&](Tensor& param, const Tensor& grad, Tensor& mo, Tensor& vel, int step) {
    for (std::int64_t i = 0; i < param.size(); ++i) {
      double g = grad[i] + hyper.weight_decay * param[i];
      if (hyper.optimizer == "adam") {
        mo[i] = hyper.adam_beta1 * mo[i] + (1.0 - hyper.adam_beta1) * g;
        vel[i] = hyper.adam_beta2 * vel[i] + (1.0 - hyper.adam_beta2) * g * g;
        double mhat = mo[i] / (1.0 - std::pow(hyper.adam_beta1, step));
        double vhat = vel[i] / (1.0 - std::pow(hyper.adam_beta2, step));
        param[i] -= hyper.learning_rate * mhat / (std::sqrt(vhat) + hyper.adam_eps);
      } else {
        double lr = hyper.learning_rate *
                    std::pow(1.0 - static_cast<double>(step - 1) / steps, hyper.poly_power);
        mo[i] = hyper.momentum * mo[i] + g;
        param[i] -= lr * mo[i];
      }
    }
  };

  for (int step = 1; step <= steps; ++step) {
    Gradients acc;
    double loss_sum = 0.0;
    for (int b = 0; b < hyper.batch_size; ++b) {
      TrainingExample example = next_example();
      for (const std::string& label : hyper.forbidden_labels)
        if (label == example.target_label)
          throw DataLeakError("training episode carries test-partition label '" + label + "'");
      if (hyper.crop_size > 0) example = crop_example(example, hyper.crop_size, crop_rng);
      Gradients g;
      loss_sum += training_loss(model, example, &g);
      if (acc.w.empty()) {
        acc = std::move(g);
      } else {
        for (std::size_t i = 0; i < n; ++i) {
          add_into(acc.w[i], g.w[i]);
          add_into(acc.b[i], g.b[i]);
        }
      }
    }
    double scale = 1.0 / hyper.batch_size;
    for (std::size_t i = 0; i < n; ++i) {
      for (std::int64_t j = 0; j < acc.w[i].size(); ++j) acc.w[i][j] *= scale;
      for (std::int64_t j = 0; j < acc.b[i].size(); ++j) acc.b[i][j] *= scale;
    }
    for (std::size_t i = 0; i < n; ++i) {
      apply(layers[i]->w, acc.w[i], mo_w[i], vel_w[i], step);
      apply(layers[i]->b, acc.b[i], mo_b[i], vel_b[i], step);
    }
    state.step = step;
    state.loss_history.push_back(loss_sum * scale);
    bool final_step = step == steps;
    bool periodic = hyper.checkpoint_every > 0 && step % hyper.checkpoint_every == 0;
    if (!hyper.checkpoint_dir.empty() && (final_step || periodic)) {
      state.checkpoint_path = checkpoint_file(hyper.checkpoint_dir, step);
      save_checkpoint(model, state.checkpoint_path, step);
    }
  }
  return state;
}

void save_checkpoint(const Model& model, const std::string& path, int step) {
  io::NamedTensors bundle;
  const ModelConfig& c = model.config;
  bundle.meta = {
      {"format", "segnet-checkpoint"},
      {"step", step},
      {"config",
       {{"backbone", c.backbone},
        {"output_stride", c.output_stride},
        {"atrous_rates", c.atrous_rates},
        {"input_channels", c.input_channels},
        {"num_output_channels", c.num_output_channels},
        {"init_source", c.init_source},
        {"init_weights", c.init_weights},
        {"seed", c.seed}}},
  };
  for (const ConvLayer* layer : model.layers()) {
    bundle.arrays.emplace_back(layer->name + ".weight", layer->w);
    bundle.arrays.emplace_back(layer->name + ".bias", layer->b);
  }
  io::save_tensors(path, bundle);
}

Checkpoint load_checkpoint(const std::string& path) {
  io::NamedTensors bundle = io::load_tensors(path);
  if (bundle.meta.value("format", "") != "segnet-checkpoint")
    throw ResourceError("not a segmentation checkpoint: " + path);
  const nlohmann::json& j = bundle.meta.at("config");
  ModelConfig config;
  config.backbone = j.at("backbone").get<std::string>();
  config.output_stride = j.at("output_stride").get<int>();
  config.atrous_rates = j.at("atrous_rates").get<std::vector<int>>();
  config.input_channels = j.at("input_channels").get<int>();
  config.num_output_channels = j.at("num_output_channels").get<int>();
  config.init_source = j.at("init_source").get<std::string>();
  config.init_weights = j.value("init_weights", std::string());
  config.seed = j.at("seed").get<std::uint64_t>();

  Checkpoint ckpt;
  ckpt.model = make_skeleton(config);
  ckpt.step = bundle.meta.value("step", 0);
  for (ConvLayer* layer : ckpt.model.layers()) {
    const Tensor& w = bundle_array(bundle, layer->name + ".weight", path);
    const Tensor& b = bundle_array(bundle, layer->name + ".bias", path);
    if (!w.same_shape(layer->w) || !b.same_shape(layer->b))
      throw ShapeError("checkpoint array '" + layer->name + "' does not match the architecture");
    layer->w = w;
    layer->b = b;
  }
  return ckpt;
}

TrainRunConfig parse_train_config(const std::string& path) {
  std::string text = io::read_file(path);
  TrainRunConfig rc;
  std::stringstream lines(text);
  std::string line;
  while (std::getline(lines, line)) {
    line = trimmed(line);
    if (line.empty() || line[0] == '#') continue;
    std::size_t eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("training config line is not key = value: '" + line + "'");
    std::string key = trimmed(line.substr(0, eq));
    std::string value = trimmed(line.substr(eq + 1));
    if (key == "backbone") {
      rc.model.backbone = value;
    } else if (key == "output_stride") {
      rc.model.output_stride = parse_int(value, key);
    } else if (key == "atrous_rates") {
      rc.model.atrous_rates = parse_int_list(value, key);
    } else if (key == "input_channels") {
      rc.model.input_channels = parse_int(value, key);
    } else if (key == "init_source") {
      rc.model.init_source = value;
    } else if (key == "init_weights") {
      rc.model.init_weights = value;
    } else if (key == "seed") {
      rc.model.seed = static_cast<std::uint64_t>(parse_int(value, key));
      rc.hyper.seed = rc.model.seed;
    } else if (key == "steps") {
      rc.steps = parse_int(value, key);
    } else if (key == "variant") {
      rc.variant = value;
    } else if (key == "learning_rate") {
      rc.hyper.learning_rate = parse_double(value, key);
    } else if (key == "optimizer") {
      rc.hyper.optimizer = value;
    } else if (key == "momentum") {
      rc.hyper.momentum = parse_double(value, key);
    } else if (key == "poly_power") {
      rc.hyper.poly_power = parse_double(value, key);
    } else if (key == "weight_decay") {
      rc.hyper.weight_decay = parse_double(value, key);
    } else if (key == "batch_size") {
      rc.hyper.batch_size = parse_int(value, key);
    } else if (key == "crop_size") {
      rc.hyper.crop_size = parse_int(value, key);
    } else if (key == "checkpoint_every") {
      rc.hyper.checkpoint_every = parse_int(value, key);
    } else if (key == "checkpoint_dir") {
      rc.hyper.checkpoint_dir = value;
    } else {
      throw ConfigError("unknown training config key '" + key + "' in " + path);
    }
  }
  if (rc.steps < 0) throw ConfigError("steps must be non-negative in " + path);
  rc.model.validate();
  rc.hyper.validate();
  return rc;
}

}  // namespace lexseg::segnet
