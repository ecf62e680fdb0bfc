#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "lexseg/nn.hpp"
#include "lexseg/rasters.hpp"
#include "lexseg/tensor.hpp"

// Class-agnostic two-channel segmentation network: RGB plus optional positive
// and negative attention channels in, per-pixel foreground likelihood out.
// Two backbones share one atrous-pyramid decoder: `tiny` (two-conv encoder,
// under a thousand parameters, for desk-scale runs) and `full` (VGG19 trunk
// with dilated final blocks at output stride 8).
namespace lexseg::segnet {

// Channel-planar [c,h,w] network input with c in {3,4,5}: RGB first, then the
// positive and negative attention rasters, which must lie in [0,1].
struct AttentionInput {
  int width = 0;
  int height = 0;
  Tensor channels;
};

// Passing a negative map without a positive one is rejected: the channel
// order would become ambiguous.
AttentionInput make_attention_input(const ImageTensor& image, const SaliencyMap* positive,
                                    const SaliencyMap* negative);

struct ModelConfig {
  std::string backbone = "tiny";
  int output_stride = 2;
  std::vector<int> atrous_rates = {2};
  int input_channels = 5;
  int num_output_channels = 2;
  std::string init_source = "fixture";  // classifier backend supplying the RGB kernel
  std::string init_weights;             // weights container path (full backbone only)
  std::uint64_t seed = 1;

  void validate() const;
};

ModelConfig tiny_config();
ModelConfig full_config();

struct ConvLayer {
  std::string name;
  Tensor w;  // [out, in, kh, kw]
  Tensor b;  // [out]
  nn::ConvSpec spec;
  bool relu_after = true;
  bool pool_after = false;
};

struct Model {
  ModelConfig config;
  std::vector<ConvLayer> trunk;
  ConvLayer aspp_proj;
  std::vector<ConvLayer> aspp_atrous;  // one branch per atrous rate
  ConvLayer aspp_pool;
  ConvLayer fuse;
  ConvLayer head;

  std::vector<ConvLayer*> layers();
  std::vector<const ConvLayer*> layers() const;
  std::int64_t parameter_count() const;
};

// First-layer RGB slice is copied bitwise from the initialization source;
// attention-channel slices and all remaining layers draw from Rng(seed).
// The full backbone additionally loads its trunk from `init_weights`.
Model build_model(const ModelConfig& config);

// Raw two-channel output, bilinearly resized to the input resolution: [2,h,w].
Tensor predict_logits(const Model& model, const AttentionInput& input);

// Per-pixel softmax over the two output channels; returns the foreground
// probability plane.
LikelihoodImage predict_likelihood(const Model& model, const AttentionInput& input);

struct TrainingExample {
  AttentionInput input;
  SegmentationMask mask;
  std::string target_label;
};

using ExampleSource = std::function<TrainingExample()>;

// Per-layer parameter gradients, ordered like Model::layers().
struct Gradients {
  std::vector<Tensor> w;
  std::vector<Tensor> b;
};

// Mean per-pixel two-class cross entropy of one example; fills analytic
// parameter gradients when `grads` is non-null.
double training_loss(const Model& model, const TrainingExample& example, Gradients* grads);

struct TrainHyper {
  double learning_rate = 1e-2;
  std::string optimizer = "adam";  // "adam" or "sgd-poly"
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  double momentum = 0.9;
  double poly_power = 0.9;
  double weight_decay = 0.0;
  int batch_size = 1;
  int crop_size = 0;  // 0 disables random cropping
  int checkpoint_every = 0;  // 0 writes only the final checkpoint
  std::string checkpoint_dir;  // empty disables checkpointing
  std::uint64_t seed = 7;  // crop jitter stream
  std::vector<std::string> forbidden_labels;  // test-partition labels; hard failure on sight

  void validate() const;
};

struct TrainState {
  int step = 0;
  std::vector<double> loss_history;  // one smoothed batch loss per step
  std::string checkpoint_path;       // last checkpoint written, if any
};

// Runs `steps` optimizer updates, pulling batch_size examples per step.
// Every example's target label is checked against hyper.forbidden_labels
// before it contributes a gradient; a match raises DataLeakError.
TrainState train(Model& model, const ExampleSource& next_example, int steps,
                 const TrainHyper& hyper);

void save_checkpoint(const Model& model, const std::string& path, int step);

struct Checkpoint {
  Model model;
  int step = 0;
};

// Rebuilds the architecture from the config echo and restores every weight
// array bitwise; never needs the original initialization weights.
Checkpoint load_checkpoint(const std::string& path);

// One training run profile parsed from a key=value file.
struct TrainRunConfig {
  ModelConfig model;
  TrainHyper hyper;
  int steps = 0;
  std::string variant = "SEM-2-C-NEG";
};

TrainRunConfig parse_train_config(const std::string& path);

}  // namespace lexseg::segnet
