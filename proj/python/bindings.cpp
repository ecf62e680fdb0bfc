// Python surface over the segmentation library. Images cross the boundary as
// (height, width, 3) uint8 or float arrays, masks as (height, width) bool
// arrays, and likelihoods and saliency maps as (height, width) float arrays.

#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstdint>
#include <filesystem>
#include <memory>
#include <string>
#include <utility>
#include <vector>

#include "lexseg/classifier.hpp"
#include "lexseg/common.hpp"
#include "lexseg/dataset.hpp"
#include "lexseg/eval.hpp"
#include "lexseg/io.hpp"
#include "lexseg/label_semantics.hpp"
#include "lexseg/postprocess.hpp"
#include "lexseg/saliency.hpp"
#include "lexseg/segnet.hpp"

namespace py = pybind11;

namespace {

using namespace lexseg;

ImageTensor image_from_array(const py::array& arr) {
  if (arr.ndim() != 3 || arr.shape(2) != 3)
    throw ShapeError("expected an image array shaped (height, width, 3)");
  int h = static_cast<int>(arr.shape(0));
  int w = static_cast<int>(arr.shape(1));
  ImageTensor image = ImageTensor::zeros(w, h);
  if (py::isinstance<py::array_t<std::uint8_t>>(arr)) {
    auto a = arr.cast<py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>>();
    auto r = a.unchecked<3>();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) image.at(c, y, x) = r(y, x, c) / 255.0;
  } else {
    auto a = arr.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
    auto r = a.unchecked<3>();
    for (int y = 0; y < h; ++y)
      for (int x = 0; x < w; ++x)
        for (int c = 0; c < 3; ++c) image.at(c, y, x) = r(y, x, c);
  }
  return image;
}

SegmentationMask mask_from_array(const py::array& arr) {
  if (arr.ndim() != 2) throw ShapeError("expected a mask array shaped (height, width)");
  auto a = arr.cast<py::array_t<bool, py::array::c_style | py::array::forcecast>>();
  auto r = a.unchecked<2>();
  int h = static_cast<int>(arr.shape(0));
  int w = static_cast<int>(arr.shape(1));
  SegmentationMask mask = SegmentationMask::zeros(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      mask.values[static_cast<std::size_t>(y) * w + x] = r(y, x) ? 1 : 0;
  return mask;
}

LikelihoodImage likelihood_from_array(const py::array& arr) {
  if (arr.ndim() != 2) throw ShapeError("expected a likelihood array shaped (height, width)");
  auto a = arr.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
  auto r = a.unchecked<2>();
  int h = static_cast<int>(arr.shape(0));
  int w = static_cast<int>(arr.shape(1));
  LikelihoodImage p = LikelihoodImage::zeros(w, h);
  for (int y = 0; y < h; ++y)
    for (int x = 0; x < w; ++x)
      p.values[static_cast<std::size_t>(y) * w + x] = static_cast<float>(r(y, x));
  return p;
}

py::array_t<bool> mask_to_array(const SegmentationMask& mask) {
  py::array_t<bool> out({mask.height, mask.width});
  auto r = out.mutable_unchecked<2>();
  for (int y = 0; y < mask.height; ++y)
    for (int x = 0; x < mask.width; ++x)
      r(y, x) = mask.values[static_cast<std::size_t>(y) * mask.width + x] != 0;
  return out;
}

py::array_t<double> plane_to_array(int width, int height, const std::vector<float>& values) {
  py::array_t<double> out({height, width});
  auto r = out.mutable_unchecked<2>();
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x) r(y, x) = values[static_cast<std::size_t>(y) * width + x];
  return out;
}

py::array_t<std::uint8_t> codes_to_array(const AnnotationImage& annotation) {
  py::array_t<std::uint8_t> out({annotation.height, annotation.width});
  auto r = out.mutable_unchecked<2>();
  for (int y = 0; y < annotation.height; ++y)
    for (int x = 0; x < annotation.width; ++x)
      r(y, x) = static_cast<std::uint8_t>(
          annotation.codes[static_cast<std::size_t>(y) * annotation.width + x]);
  return out;
}

const VocabEntry& entry_of(const ClassifierVocabulary& vocab, int class_index) {
  for (const auto& entry : vocab.entries)
    if (entry.class_index == class_index) return entry;
  throw ConfigError("class index " + std::to_string(class_index) + " is not in the vocabulary");
}

GrabCutParams params_from(double t_fg, double t_unk, double t_bg, int iterations) {
  GrabCutParams params;
  params.t_fg = t_fg;
  params.t_unk = t_unk;
  params.t_bg = t_bg;
  params.iterations = iterations;
  params.validate();
  return params;
}

// Bundles the proxy-label resources behind one handle so the pipeline calls
// below stay single-argument. Either the built-in shapes world or explicit
// vocabulary/ontology/embedding files.
struct World {
  eval::ShapeWorld shape_world;
  bool is_shapes = false;
  std::unique_ptr<ClassifierBackend> classifier;
  ClassifierVocabulary vocab;
  OntologyIndex ontology;
  EmbeddingTable embeddings;
  MapperKind mapper = MapperKind::kWordNet;
  int k = 5;
  GrabCutParams grabcut;

  eval::PipelineResources resources() const {
    eval::PipelineResources res;
    if (is_shapes) {
      res = shape_world.resources();
    } else {
      res.classifier = classifier.get();
      res.vocab = &vocab;
      res.ontology = &ontology;
      res.embeddings = &embeddings;
    }
    res.mapper = mapper;
    res.k = k;
    res.grabcut = grabcut;
    return res;
  }

  const ClassifierVocabulary& active_vocab() const {
    return is_shapes ? shape_world.vocab : vocab;
  }
};

std::shared_ptr<World> make_world(const std::string& vocab_path, const std::string& ontology_path,
                                  const std::string& embeddings_path, const std::string& backend,
                                  const std::string& mapper, int k) {
  auto world = std::make_shared<World>();
  world->vocab = load_vocabulary(vocab_path);
  if (!ontology_path.empty()) {
    if (std::filesystem::is_directory(ontology_path))
      world->ontology = load_wordnet_dir(ontology_path);
    else
      world->ontology = load_ontology_tsv(ontology_path);
  }
  if (!embeddings_path.empty()) world->embeddings = load_embeddings(embeddings_path);
  if (backend == "fixture") {
    BackendSpec spec;
    spec.name = "fixture";
    world->classifier = load_backend(spec);
  } else if (!backend.empty()) {
    world->classifier = load_backend(backend_spec_from_file(backend));
  }
  world->mapper = mapper_from_name(mapper);
  world->k = k;
  return world;
}

std::shared_ptr<World> make_shapes(const std::string& mapper, int k) {
  auto world = std::make_shared<World>();
  world->shape_world = eval::make_shape_world();
  world->is_shapes = true;
  world->mapper = mapper_from_name(mapper);
  world->k = k;
  return world;
}

struct Model {
  segnet::Model net;
  int step = 0;
};

py::dict proxy_labels(const World& world, const std::string& label, py::object image) {
  eval::PipelineResources res = world.resources();
  py::list positives, negatives, warnings;
  auto row = [&](int class_index, py::object score) {
    return py::make_tuple(class_index, entry_of(*res.vocab, class_index).label.text, score);
  };

  if (image.is_none()) {
    ClassLabel target = tokenize_label(label);
    if (res.mapper == MapperKind::kWordNet) {
      for (int index : wordnet_candidates(target, *res.vocab, *res.ontology))
        positives.append(row(index, py::none()));
    } else {
      for (const auto& s : word2vec_candidates(target, *res.vocab, *res.embeddings, res.k))
        positives.append(row(s.class_index, py::float_(s.score)));
    }
  } else {
    if (res.classifier == nullptr)
      throw ConfigError("this world has no classifier backend; pass image=None");
    ImageTensor img = image_from_array(image.cast<py::array>());
    ProxyLabelSet set = build_proxy_set(label, img, res.mapper, *res.vocab, *res.ontology,
                                        *res.embeddings, *res.classifier, res.k);
    for (const auto& s : set.positives) positives.append(row(s.class_index, py::float_(s.score)));
    for (const auto& s : set.negatives) negatives.append(row(s.class_index, py::float_(s.score)));
    for (const auto& w : set.warnings) warnings.append(w);
  }

  py::dict out;
  out["positives"] = positives;
  out["negatives"] = negatives;
  out["warnings"] = warnings;
  return out;
}

py::dict saliency_maps(const World& world, const py::array& image, const std::string& label) {
  eval::PipelineResources res = world.resources();
  if (res.classifier == nullptr) throw ConfigError("this world has no classifier backend");
  ImageTensor img = image_from_array(image);
  ProxyLabelSet set = build_proxy_set(label, img, res.mapper, *res.vocab, *res.ontology,
                                      *res.embeddings, *res.classifier, res.k);
  AttentionMaps maps = generate_attention_maps(img, set, *res.classifier, res.cache);
  py::dict out;
  out["positive"] = plane_to_array(maps.positive.width, maps.positive.height, maps.positive.values);
  out["negative"] = plane_to_array(maps.negative.width, maps.negative.height, maps.negative.values);
  py::list warnings;
  for (const auto& w : set.warnings) warnings.append(w);
  for (const auto& w : maps.warnings) warnings.append(w);
  out["warnings"] = warnings;
  return out;
}

Model train_synth(const World& world, const std::string& corpus_dir,
                  const std::string& variant_name, int steps, std::uint64_t seed,
                  double learning_rate) {
  if (!world.is_shapes)
    throw ConfigError("train_synth drives the synthetic corpus; build the world with shapes()");
  eval::Variant variant = eval::variant_from_name(variant_name);
  PartitionSpec partition = eval::shape_partition();
  SampleStore corpus = load_synth_corpus(corpus_dir);

  Model out;
  out.net = segnet::build_model(eval::variant_model_config(variant, seed));
  if (steps == 0) return out;

  Rng base(seed);
  EpisodeStream stream = sample_episodes(corpus, partition, Split::kTrain,
                                         eval::variant_name(variant), base.fork(101));
  Rng source_rng(base.fork(102));
  eval::PipelineResources res = world.resources();
  segnet::ExampleSource source =
      eval::make_training_source(corpus, stream, variant, res, source_rng);

  segnet::TrainHyper hyper;
  hyper.learning_rate = learning_rate;
  hyper.seed = seed;
  hyper.forbidden_labels = partition.test_labels;
  segnet::TrainState state = segnet::train(out.net, source, steps, hyper);
  out.step = state.step;
  return out;
}

py::dict evaluate_synth(const World& world, const std::string& corpus_dir, const Model& model,
                        const std::string& variant_name, std::uint64_t seed, int max_episodes,
                        int workers) {
  if (!world.is_shapes)
    throw ConfigError("evaluate_synth drives the synthetic corpus; build the world with shapes()");
  eval::Variant variant = eval::variant_from_name(variant_name);
  SampleStore corpus = load_synth_corpus(corpus_dir);
  eval::EvalOptions options;
  options.seed = seed;
  options.max_episodes = max_episodes;
  options.workers = workers;
  eval::PartitionMetrics metrics = eval::evaluate_store(corpus, eval::shape_partition(), variant,
                                                        model.net, world.resources(), options);
  py::dict classes;
  for (const auto& c : metrics.classes) classes[py::str(c.label)] = c.iou();
  py::dict out;
  out["miou"] = metrics.miou();
  out["classes"] = classes;
  py::list warnings;
  for (const auto& w : metrics.warnings) warnings.append(w);
  out["warnings"] = warnings;
  return out;
}

py::dict segment_image(const World& world, const Model& model, const py::array& image,
                       const std::string& label, const std::string& variant_name,
                       std::uint64_t seed, py::object gt) {
  eval::Variant variant = eval::variant_from_name(variant_name);
  ImageTensor img = image_from_array(image);
  SegmentationMask gt_mask;
  if (!gt.is_none()) gt_mask = mask_from_array(gt.cast<py::array>());
  Rng rng(seed);
  eval::SegmentOutcome outcome = eval::run_pipeline(img, label, variant, model.net,
                                                    world.resources(), rng,
                                                    gt.is_none() ? nullptr : &gt_mask);
  py::dict out;
  out["mask"] = mask_to_array(outcome.mask);
  out["likelihood"] =
      plane_to_array(outcome.likelihood.width, outcome.likelihood.height, outcome.likelihood.values);
  out["annotation"] = outcome.annotation.width > 0 ? py::object(codes_to_array(outcome.annotation))
                                                   : py::object(py::none());
  py::list warnings;
  for (const auto& w : outcome.warnings) warnings.append(w);
  out["warnings"] = warnings;
  return out;
}

}  // namespace

PYBIND11_MODULE(_lexseg, m) {
  m.doc() = "zero-annotation semantic segmentation: proxy labels, saliency, "
            "attention-conditioned masking, and refinement";

  py::register_exception<Error>(m, "Error");

  m.def("tokenize", [](const std::string& text) { return tokenize_label(text).tokens; },
        py::arg("text"), "Lowercased tokens split on whitespace, commas, and hyphens.");

  m.def("variant_names", [] {
    std::vector<std::string> names;
    for (eval::Variant v : {eval::Variant::kSem0CNone, eval::Variant::kSem1CRand,
                            eval::Variant::kSem1CGt, eval::Variant::kSem2CRand,
                            eval::Variant::kSem2CMean, eval::Variant::kSem2CNeg,
                            eval::Variant::kOracle, eval::Variant::kNoGrabcut})
      names.push_back(eval::variant_name(v));
    return names;
  });

  m.def("binary_iou",
        [](const py::array& pred, const py::array& gt) {
          return eval::binary_iou(mask_from_array(pred), mask_from_array(gt));
        },
        py::arg("pred"), py::arg("gt"));

  m.def("synth_corpus",
        [](int count, std::uint64_t seed, const std::string& out_dir) {
          SampleStore store = synth_shapes_corpus(count, seed, out_dir);
          py::list out;
          for (std::size_t i = 0; i < store.size(); ++i) {
            const Sample& s = store.at(i);
            py::dict row;
            row["image_id"] = s.image_id;
            row["image_path"] = s.image_path;
            row["labels"] = s.labels;
            out.append(row);
          }
          return out;
        },
        py::arg("count"), py::arg("seed"), py::arg("out_dir"));

  m.def("annotate",
        [](const py::array& likelihood, double t_fg, double t_unk, double t_bg) {
          LikelihoodImage p = likelihood_from_array(likelihood);
          return codes_to_array(annotate_from_likelihood(p, params_from(t_fg, t_unk, t_bg, 5)));
        },
        py::arg("likelihood"), py::arg("t_fg") = 0.7, py::arg("t_unk") = 0.5,
        py::arg("t_bg") = 0.15,
        "Four-way codes: 0 sure background, 1 probable background, 2 probable "
        "foreground, 3 sure foreground.");

  m.def("grabcut",
        [](const py::array& image, const py::array& likelihood, double t_fg, double t_unk,
           double t_bg, int iterations) {
          ImageTensor img = image_from_array(image);
          LikelihoodImage p = likelihood_from_array(likelihood);
          GrabCutParams params = params_from(t_fg, t_unk, t_bg, iterations);
          AnnotationImage annotation = annotate_from_likelihood(p, params);
          return mask_to_array(grabcut_refine(img, annotation, params, &p, nullptr));
        },
        py::arg("image"), py::arg("likelihood"), py::arg("t_fg") = 0.7, py::arg("t_unk") = 0.5,
        py::arg("t_bg") = 0.15, py::arg("iterations") = 5);

  m.def("threshold_mask",
        [](const py::array& likelihood, double t) {
          return mask_to_array(threshold_baseline(likelihood_from_array(likelihood), t));
        },
        py::arg("likelihood"), py::arg("t") = 0.5);

  py::class_<World, std::shared_ptr<World>>(m, "World")
      .def(py::init(&make_world), py::arg("vocab"), py::arg("ontology") = "",
           py::arg("embeddings") = "", py::arg("backend") = "", py::arg("mapper") = "wordnet",
           py::arg("k") = 5)
      .def_static("shapes", &make_shapes, py::arg("mapper") = "wordnet", py::arg("k") = 5,
                  "The built-in synthetic world: fixture classifier over six color classes.")
      .def_property_readonly("class_labels",
                             [](const World& w) {
                               std::vector<std::string> out;
                               for (const auto& e : w.active_vocab().entries)
                                 out.push_back(e.label.text);
                               return out;
                             })
      .def("proxy_labels", &proxy_labels, py::arg("label"), py::arg("image") = py::none())
      .def("saliency", &saliency_maps, py::arg("image"), py::arg("label"))
      .def("train_synth", &train_synth, py::arg("corpus_dir"),
           py::arg("variant") = "SEM-2-C-NEG", py::arg("steps") = 50, py::arg("seed") = 7,
           py::arg("learning_rate") = 1e-2)
      .def("evaluate_synth", &evaluate_synth, py::arg("corpus_dir"), py::arg("model"),
           py::arg("variant") = "SEM-2-C-NEG", py::arg("seed") = 1, py::arg("max_episodes") = 0,
           py::arg("workers") = 1)
      .def("segment", &segment_image, py::arg("model"), py::arg("image"), py::arg("label"),
           py::arg("variant") = "SEM-2-C-NEG", py::arg("seed") = 1, py::arg("gt") = py::none());

  py::class_<Model>(m, "Model")
      .def_static("build",
                  [](const std::string& variant, std::uint64_t seed) {
                    Model model;
                    model.net = segnet::build_model(
                        eval::variant_model_config(eval::variant_from_name(variant), seed));
                    return model;
                  },
                  py::arg("variant") = "SEM-2-C-NEG", py::arg("seed") = 7)
      .def_static("load",
                  [](const std::string& path) {
                    segnet::Checkpoint checkpoint = segnet::load_checkpoint(path);
                    Model model;
                    model.net = std::move(checkpoint.model);
                    model.step = checkpoint.step;
                    return model;
                  },
                  py::arg("path"))
      .def("save",
           [](const Model& model, const std::string& path) {
             segnet::save_checkpoint(model.net, path, model.step);
           },
           py::arg("path"))
      .def_property_readonly("step", [](const Model& model) { return model.step; })
      .def_property_readonly("parameter_count",
                             [](const Model& model) { return model.net.parameter_count(); })
      .def_property_readonly("input_channels",
                             [](const Model& model) {
                               return model.net.layers().front()->w.dim(1);
                             })
      .def("likelihood", [](const Model& model, const py::array& channels) {
        auto a = channels.cast<py::array_t<double, py::array::c_style | py::array::forcecast>>();
        if (a.ndim() != 3) throw ShapeError("expected channels shaped (c, height, width)");
        int c = static_cast<int>(a.shape(0));
        int h = static_cast<int>(a.shape(1));
        int w = static_cast<int>(a.shape(2));
        segnet::AttentionInput input;
        input.width = w;
        input.height = h;
        input.channels = Tensor({c, h, w},
                                std::vector<double>(a.data(), a.data() + a.size()));
        LikelihoodImage p = segnet::predict_likelihood(model.net, input);
        return plane_to_array(p.width, p.height, p.values);
      }, py::arg("channels"));
}
