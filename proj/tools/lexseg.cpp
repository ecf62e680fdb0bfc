// Command-line front end over the segmentation library: proxy-label
// inspection, saliency dumps, single-image segmentation, training runs, and
// fold evaluation. Exit codes: 0 success, 1 runtime or resource failure,
// 2 usage error.

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdlib>
#include <filesystem>
#include <memory>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "CLI11.hpp"
#include "lexseg/classifier.hpp"
#include "lexseg/common.hpp"
#include "lexseg/dataset.hpp"
#include "lexseg/eval.hpp"
#include "lexseg/io.hpp"
#include "lexseg/label_semantics.hpp"
#include "lexseg/postprocess.hpp"
#include "lexseg/saliency.hpp"
#include "lexseg/segnet.hpp"

namespace fs = std::filesystem;

namespace {

using namespace lexseg;

struct UsageError : std::runtime_error {
  explicit UsageError(const std::string& what) : std::runtime_error(what) {}
};

void print_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::fprintf(stderr, "warning: %s\n", w.c_str());
}

std::string trim(const std::string& s) {
  std::size_t a = s.find_first_not_of(" \t\r\n");
  if (a == std::string::npos) return "";
  std::size_t b = s.find_last_not_of(" \t\r\n");
  return s.substr(a, b - a + 1);
}

eval::Variant parse_variant(const std::string& name) {
  try {
    return eval::variant_from_name(name);
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
}

MapperKind parse_mapper(const std::string& name) {
  if (name == "wordnet") return MapperKind::kWordNet;
  if (name == "word2vec") return MapperKind::kWord2Vec;
  throw UsageError("unknown mapper '" + name + "'; expected wordnet or word2vec");
}

struct ResourceFlags {
  bool shapes = false;
  std::string backend = "fixture";
  std::string vocab;
  std::string ontology;
  std::string embeddings;
  std::string mapper = "wordnet";
  int k = 5;
  std::string cache_dir;
  double t_fg = 0.7;
  double t_unk = 0.5;
  double t_bg = 0.15;
  int grabcut_iters = 5;
};

void add_resource_flags(CLI::App* cmd, ResourceFlags* f, bool with_grabcut) {
  cmd->add_flag("--shapes", f->shapes,
                "use the built-in synthetic-shapes world (fixture classifier, color vocabulary)");
  cmd->add_option("--backend", f->backend, "'fixture' or a backend spec JSON file");
  cmd->add_option("--vocab", f->vocab, "classifier vocabulary TSV");
  cmd->add_option("--ontology", f->ontology, "WordNet directory (data.noun) or ontology TSV");
  cmd->add_option("--embeddings", f->embeddings, "word embedding text file");
  cmd->add_option("--mapper", f->mapper, "proxy-label mapper: wordnet or word2vec");
  cmd->add_option("--k", f->k, "proxy labels per polarity");
  cmd->add_option("--saliency-cache", f->cache_dir, "directory for cached saliency maps");
  if (with_grabcut) {
    cmd->add_option("--t-fg", f->t_fg, "sure-foreground likelihood threshold");
    cmd->add_option("--t-unk", f->t_unk, "probable-foreground likelihood threshold");
    cmd->add_option("--t-bg", f->t_bg, "sure-background likelihood threshold");
    cmd->add_option("--grabcut-iters", f->grabcut_iters, "refinement iterations");
  }
}

struct LoadedWorld {
  eval::ShapeWorld shapes;
  std::unique_ptr<ClassifierBackend> classifier;
  ClassifierVocabulary vocab;
  OntologyIndex ontology;
  EmbeddingTable embeddings;
  std::unique_ptr<SaliencyCache> cache;
  eval::PipelineResources res;
};

std::unique_ptr<LoadedWorld> load_world(const ResourceFlags& f, bool need_classifier) {
  if (f.k < 1) throw UsageError("--k must be at least 1");
  MapperKind mapper = parse_mapper(f.mapper);

  auto w = std::make_unique<LoadedWorld>();
  if (f.shapes) {
    if (!f.vocab.empty() || !f.ontology.empty() || !f.embeddings.empty())
      throw UsageError("--shapes already bundles its resources; drop --vocab/--ontology/--embeddings");
    w->shapes = eval::make_shape_world();
    w->res = w->shapes.resources();
  } else {
    if (need_classifier || !f.vocab.empty()) {
      if (f.vocab.empty())
        throw UsageError("pass --vocab (or --shapes for the synthetic world)");
      w->vocab = load_vocabulary(f.vocab);
      if (need_classifier) {
        BackendSpec spec;
        if (f.backend == "fixture")
          spec.name = "fixture";
        else
          spec = backend_spec_from_file(f.backend);
        w->classifier = load_backend(spec);
        w->res.classifier = w->classifier.get();
      }
    }
    if (!f.ontology.empty())
      w->ontology = fs::is_directory(f.ontology) ? load_wordnet_dir(f.ontology)
                                                 : load_ontology_tsv(f.ontology);
    if (!f.embeddings.empty()) w->embeddings = load_embeddings(f.embeddings);
    w->res.vocab = &w->vocab;
    w->res.ontology = &w->ontology;
    w->res.embeddings = &w->embeddings;
  }

  w->res.mapper = mapper;
  w->res.k = f.k;
  GrabCutParams params;
  params.t_fg = f.t_fg;
  params.t_unk = f.t_unk;
  params.t_bg = f.t_bg;
  params.iterations = f.grabcut_iters;
  try {
    params.validate();
  } catch (const ConfigError& e) {
    throw UsageError(e.what());
  }
  w->res.grabcut = params;
  if (!f.cache_dir.empty()) {
    w->cache = std::make_unique<SaliencyCache>(f.cache_dir);
    w->res.cache = w->cache.get();
  }
  return w;
}

void require_mapper_inputs(const LoadedWorld& w) {
  if (w.res.vocab == nullptr || w.res.vocab->entries.empty())
    throw UsageError("pass --vocab (or --shapes for the synthetic world)");
  if (w.res.mapper == MapperKind::kWordNet && !w.res.ontology->loaded())
    throw UsageError("the wordnet mapper needs --ontology (or --shapes)");
  if (w.res.mapper == MapperKind::kWord2Vec && w.res.embeddings->rows.empty())
    throw UsageError("the word2vec mapper needs --embeddings");
}

struct DataFlags {
  std::string data_root;
  std::string voc_root;
  std::string sbd_root;
  int partition = 0;
  std::string partition_file;
};

void add_data_flags(CLI::App* cmd, DataFlags* f) {
  cmd->add_option("--data-root", f->data_root,
                  "synthetic corpus directory, or a root holding voc/ and sbd/ "
                  "(default: $LEXSEG_DATA_ROOT)");
  cmd->add_option("--voc-root", f->voc_root, "explicit VOC root (overrides --data-root)");
  cmd->add_option("--sbd-root", f->sbd_root, "explicit SBD root (overrides --data-root)");
  cmd->add_option("--partition", f->partition, "fold index");
  cmd->add_option("--partition-file", f->partition_file,
                  "custom fold: lines 'train<TAB>a,b,...' and 'test<TAB>c,d,...'");
}

PartitionSpec parse_partition_file(const std::string& path, int index) {
  PartitionSpec spec;
  spec.index = index;
  std::istringstream in(io::read_file(path));
  std::string line;
  while (std::getline(in, line)) {
    line = trim(line);
    if (line.empty() || line[0] == '#') continue;
    std::size_t mark = line.find_first_of("\t:");
    if (mark == std::string::npos)
      throw ConfigError("partition line '" + line + "' has no train/test marker");
    std::string side = trim(line.substr(0, mark));
    std::vector<std::string>* labels = nullptr;
    if (side == "train")
      labels = &spec.train_labels;
    else if (side == "test")
      labels = &spec.test_labels;
    else
      throw ConfigError("partition side '" + side + "' is neither train nor test");
    std::istringstream rest(line.substr(mark + 1));
    std::string label;
    while (std::getline(rest, label, ',')) {
      label = trim(label);
      if (!label.empty()) labels->push_back(label);
    }
  }
  if (spec.train_labels.empty() || spec.test_labels.empty())
    throw ConfigError("partition file '" + path + "' needs both a train and a test line");
  for (const auto& label : spec.test_labels)
    if (std::count(spec.train_labels.begin(), spec.train_labels.end(), label))
      throw DataLeakError("label '" + label + "' sits on both sides of '" + path + "'");
  return spec;
}

struct LoadedData {
  DatasetStores stores;
  bool synthetic = false;
  PartitionSpec partition;
};

LoadedData load_data(const DataFlags& f) {
  LoadedData d;
  if (!f.voc_root.empty() || !f.sbd_root.empty()) {
    if (f.voc_root.empty() || f.sbd_root.empty())
      throw UsageError("--voc-root and --sbd-root go together");
    d.stores = ingest_voc_sbd(f.voc_root, f.sbd_root);
  } else {
    std::string root = f.data_root;
    if (root.empty()) {
      const char* env = std::getenv("LEXSEG_DATA_ROOT");
      if (env != nullptr) root = env;
    }
    if (root.empty()) throw UsageError("pass --data-root (or set LEXSEG_DATA_ROOT)");
    if (fs::exists(fs::path(root) / "manifest.tsv")) {
      SampleStore corpus = load_synth_corpus(root);
      d.stores.train = corpus;
      d.stores.test = std::move(corpus);
      d.synthetic = true;
    } else if (fs::exists(fs::path(root) / "voc") && fs::exists(fs::path(root) / "sbd")) {
      d.stores = ingest_voc_sbd((fs::path(root) / "voc").string(),
                                (fs::path(root) / "sbd").string());
    } else {
      throw ResourceError("'" + root + "' holds neither a manifest.tsv nor voc/ and sbd/ subtrees");
    }
  }

  if (!f.partition_file.empty()) {
    d.partition = parse_partition_file(f.partition_file, f.partition);
  } else if (d.synthetic) {
    if (f.partition != 0)
      throw UsageError("the synthetic corpus has a single fold; use --partition 0");
    d.partition = eval::shape_partition();
  } else {
    std::vector<PartitionSpec> folds = load_partitions();
    if (f.partition < 0 || f.partition >= static_cast<int>(folds.size()))
      throw UsageError("--partition must lie in [0, " + std::to_string(folds.size()) + ")");
    d.partition = folds[f.partition];
  }
  return d;
}

const VocabEntry& vocab_entry(const ClassifierVocabulary& vocab, int class_index) {
  for (const auto& entry : vocab.entries)
    if (entry.class_index == class_index) return entry;
  throw ConfigError("class index " + std::to_string(class_index) + " is not in the vocabulary");
}

void print_label_row(const ClassifierVocabulary& vocab, const std::string& role, int class_index,
                     double score, bool scored) {
  const VocabEntry& entry = vocab_entry(vocab, class_index);
  if (scored)
    std::printf("%s\t%.6f\t%d\t%s\n", role.c_str(), score, class_index, entry.label.text.c_str());
  else
    std::printf("%s\t-\t%d\t%s\n", role.c_str(), class_index, entry.label.text.c_str());
}

// --- map-labels ------------------------------------------------------------

struct MapLabelsArgs {
  ResourceFlags res;
  std::string label;
  std::string image;
};

int cmd_map_labels(const MapLabelsArgs& args) {
  auto world = load_world(args.res, !args.image.empty());
  require_mapper_inputs(*world);
  const eval::PipelineResources& res = world->res;

  std::printf("role\tscore\tclass\tlabel\n");
  if (args.image.empty()) {
    ClassLabel target = tokenize_label(args.label);
    if (res.mapper == MapperKind::kWordNet) {
      std::vector<int> candidates = wordnet_candidates(target, *res.vocab, *res.ontology);
      if (candidates.empty())
        throw InvalidLabelError("label '" + args.label + "' resolves to no vocabulary candidates");
      for (int index : candidates) print_label_row(*res.vocab, "candidate", index, 0.0, false);
    } else {
      std::vector<ScoredLabel> candidates =
          word2vec_candidates(target, *res.vocab, *res.embeddings, res.k);
      if (candidates.empty())
        throw InvalidLabelError("label '" + args.label + "' resolves to no vocabulary candidates");
      for (const auto& c : candidates)
        print_label_row(*res.vocab, "candidate", c.class_index, c.score, true);
    }
    return 0;
  }

  ImageTensor image = to_image_tensor(io::read_image(args.image));
  ProxyLabelSet set = build_proxy_set(args.label, image, res.mapper, *res.vocab, *res.ontology,
                                      *res.embeddings, *res.classifier, res.k);
  print_warnings(set.warnings);
  if (set.positives.empty())
    throw InvalidLabelError("label '" + args.label + "' resolves to no vocabulary candidates");
  for (const auto& s : set.positives) print_label_row(*res.vocab, "positive", s.class_index, s.score, true);
  for (const auto& s : set.negatives) print_label_row(*res.vocab, "negative", s.class_index, s.score, true);
  return 0;
}

// --- saliency ----------------------------------------------------------------

struct SaliencyArgs {
  ResourceFlags res;
  std::string label;
  std::string image;
  std::string out_dir = ".";
};

int cmd_saliency(const SaliencyArgs& args) {
  auto world = load_world(args.res, true);
  require_mapper_inputs(*world);
  const eval::PipelineResources& res = world->res;

  ImageTensor image = to_image_tensor(io::read_image(args.image));
  ProxyLabelSet set = build_proxy_set(args.label, image, res.mapper, *res.vocab, *res.ontology,
                                      *res.embeddings, *res.classifier, res.k);
  AttentionMaps maps = generate_attention_maps(image, set, *res.classifier, res.cache);
  print_warnings(set.warnings);
  print_warnings(maps.warnings);

  fs::create_directories(args.out_dir);
  std::string positive_path = (fs::path(args.out_dir) / "positive.salmap").string();
  std::string negative_path = (fs::path(args.out_dir) / "negative.salmap").string();
  io::write_salmap(positive_path, maps.positive);
  io::write_salmap(negative_path, maps.negative);
  std::printf("positive\t%s\t%zu source labels\n", positive_path.c_str(),
              maps.positive.source_labels.size());
  std::printf("negative\t%s\t%zu source labels\n", negative_path.c_str(),
              maps.negative.source_labels.size());
  return 0;
}

// --- segment -----------------------------------------------------------------

struct SegmentArgs {
  ResourceFlags res;
  std::string image;
  std::string label;
  std::string checkpoint;
  std::string out;
  std::string variant = "SEM-2-C-NEG";
  bool no_grabcut = false;
  std::string gt_mask;
  std::string overlay;
  std::string dump_saliency;
  std::string dump_annotation;
  std::string dump_likelihood;
  std::uint64_t seed = 1;
};

int cmd_segment(const SegmentArgs& args) {
  eval::Variant variant = parse_variant(args.variant);
  if (variant == eval::Variant::kOracle && args.gt_mask.empty())
    throw UsageError("--variant oracle needs --gt-mask");
  if (!args.overlay.empty() && args.gt_mask.empty())
    throw UsageError("--overlay needs --gt-mask");

  auto world = load_world(args.res, variant != eval::Variant::kSem0CNone);
  const eval::PipelineResources& res = world->res;

  ImageU8 image_u8 = io::read_image(args.image);
  ImageTensor image = to_image_tensor(image_u8);
  SegmentationMask gt;
  if (!args.gt_mask.empty()) gt = io::read_mask_png(args.gt_mask);

  segnet::Checkpoint checkpoint = segnet::load_checkpoint(args.checkpoint);
  Rng rng(args.seed);
  std::vector<std::string> warnings;
  eval::EpisodeChannels channels = eval::build_episode_channels(
      image, args.label, variant, res, rng, args.gt_mask.empty() ? nullptr : &gt);
  warnings.insert(warnings.end(), channels.warnings.begin(), channels.warnings.end());

  if (checkpoint.model.layers().front()->w.dim(1) != channels.input.channels.dim(0))
    throw ConfigError("variant " + eval::variant_name(variant) + " wires " +
                      std::to_string(channels.input.channels.dim(0)) +
                      " input channels but the checkpoint expects " +
                      std::to_string(checkpoint.model.layers().front()->w.dim(1)));

  LikelihoodImage likelihood = segnet::predict_likelihood(checkpoint.model, channels.input);
  AnnotationImage annotation;
  SegmentationMask mask;
  bool refine = eval::variant_uses_grabcut(variant) && !args.no_grabcut;
  if (refine) {
    annotation = annotate_from_likelihood(likelihood, res.grabcut);
    mask = grabcut_refine(image, annotation, res.grabcut, &likelihood, &warnings);
  } else {
    mask = threshold_baseline(likelihood, 0.5);
  }
  print_warnings(warnings);

  if (!args.dump_saliency.empty()) {
    fs::create_directories(args.dump_saliency);
    if (channels.positive.width > 0)
      io::write_salmap((fs::path(args.dump_saliency) / "positive.salmap").string(),
                       channels.positive);
    if (channels.negative.width > 0)
      io::write_salmap((fs::path(args.dump_saliency) / "negative.salmap").string(),
                       channels.negative);
    if (channels.positive.width == 0)
      std::fprintf(stderr, "warning: variant %s wires no saliency channels; nothing to dump\n",
                   eval::variant_name(variant).c_str());
  }
  if (!args.dump_likelihood.empty()) {
    SaliencyMap wrapped = SaliencyMap::zeros(likelihood.width, likelihood.height,
                                             Polarity::kPositive);
    wrapped.values = likelihood.values;
    io::write_salmap(args.dump_likelihood, wrapped);
  }
  if (!args.dump_annotation.empty()) {
    if (annotation.width > 0) {
      fs::create_directories(args.dump_annotation);
      io::write_annotation_png((fs::path(args.dump_annotation) / "annotation.png").string(),
                               annotation);
    } else {
      std::fprintf(stderr, "warning: no refinement ran; there is no annotation to dump\n");
    }
  }

  io::write_mask_png(args.out, mask);
  if (!args.overlay.empty()) io::write_image(args.overlay, eval::render_overlay(image_u8, gt, mask));

  std::int64_t fg = 0;
  for (std::uint8_t v : mask.values) fg += v != 0;
  std::printf("mask\t%s\t%dx%d\t%.4f foreground\n", args.out.c_str(), mask.width, mask.height,
              mask.values.empty() ? 0.0 : static_cast<double>(fg) / mask.values.size());
  return 0;
}

// --- train -------------------------------------------------------------------

struct TrainArgs {
  ResourceFlags res;
  DataFlags data;
  std::string config;
  std::string variant;
  int steps = -1;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out = "checkpoint.lexw";
  std::string run_dir;
  int checkpoint_every = -1;
};

int cmd_train(const TrainArgs& args) {
  segnet::TrainRunConfig cfg;
  if (!args.config.empty()) cfg = segnet::parse_train_config(args.config);
  if (!args.variant.empty()) cfg.variant = eval::variant_name(parse_variant(args.variant));
  if (args.steps >= 0) cfg.steps = args.steps;
  if (args.seed_given) {
    cfg.model.seed = args.seed;
    cfg.hyper.seed = args.seed;
  }
  if (args.checkpoint_every >= 0) cfg.hyper.checkpoint_every = args.checkpoint_every;
  if (cfg.steps < 0) throw UsageError("--steps is required when the config file sets none");

  eval::Variant variant = parse_variant(cfg.variant);
  int channels = eval::variant_channels(variant);
  if (cfg.model.input_channels != channels) {
    std::fprintf(stderr, "warning: variant %s wires %d input channels; overriding the configured %d\n",
                 cfg.variant.c_str(), channels, cfg.model.input_channels);
    cfg.model.input_channels = channels;
  }

  LoadedData data = load_data(args.data);
  auto world = load_world(args.res, variant != eval::Variant::kSem0CNone);
  cfg.hyper.forbidden_labels = data.partition.test_labels;
  cfg.hyper.checkpoint_dir = args.run_dir;

  segnet::Model model = segnet::build_model(cfg.model);
  if (!fs::path(args.out).parent_path().empty())
    fs::create_directories(fs::path(args.out).parent_path());

  if (cfg.steps == 0) {
    segnet::save_checkpoint(model, args.out, 0);
    std::printf("checkpoint\t%s\tstep 0 (initialization only)\n", args.out.c_str());
    return 0;
  }

  Rng base(cfg.hyper.seed);
  EpisodeStream stream = sample_episodes(data.stores.train, data.partition, Split::kTrain,
                                         cfg.variant, base.fork(101));
  Rng source_rng(base.fork(102));
  segnet::ExampleSource source =
      eval::make_training_source(data.stores.train, stream, variant, world->res, source_rng);

  segnet::TrainState state = segnet::train(model, source, cfg.steps, cfg.hyper);
  segnet::save_checkpoint(model, args.out, state.step);
  std::printf("checkpoint\t%s\tstep %d\tloss %.6f\n", args.out.c_str(), state.step,
              state.loss_history.empty() ? 0.0 : state.loss_history.back());
  return 0;
}

// --- eval --------------------------------------------------------------------

struct EvalArgs {
  ResourceFlags res;
  DataFlags data;
  std::string variant = "SEM-2-C-NEG";
  std::string checkpoint;
  std::string report;
  std::uint64_t seed = 1;
  int max_episodes = 0;
  int workers = 0;
};

int cmd_eval(const EvalArgs& args) {
  eval::Variant variant = parse_variant(args.variant);
  LoadedData data = load_data(args.data);
  auto world = load_world(args.res, variant != eval::Variant::kSem0CNone);

  eval::EvalOptions options;
  options.seed = args.seed;
  options.max_episodes = args.max_episodes;
  options.workers = args.workers > 0
                        ? args.workers
                        : static_cast<int>(std::max(1u, std::thread::hardware_concurrency()));

  eval::VariantRun run;
  run.variant = variant;
  run.checkpoint = args.checkpoint;
  std::vector<eval::MetricsReport> reports =
      eval::run_ablation({run}, {data.partition}, data.stores.test, world->res, options);
  for (const auto& report : reports)
    for (const auto& partition : report.partitions) print_warnings(partition.warnings);

  if (!args.report.empty()) eval::write_reports(reports, args.report);
  std::fputs(eval::report_tsv(reports).c_str(), stdout);
  return 0;
}

// --- synth-data ----------------------------------------------------------------

struct SynthArgs {
  int count = 24;
  std::uint64_t seed = 7;
  std::string out;
};

int cmd_synth_data(const SynthArgs& args) {
  SampleStore corpus = synth_shapes_corpus(args.count, args.seed, args.out);
  std::printf("corpus\t%s\t%zu images\n", args.out.c_str(), corpus.size());
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"zero-annotation semantic segmentation pipeline"};
  app.require_subcommand(1);

  MapLabelsArgs map_args;
  CLI::App* map_cmd = app.add_subcommand("map-labels", "resolve a target label to proxy labels");
  map_cmd->add_option("--label", map_args.label, "target label text")->required();
  map_cmd->add_option("--image", map_args.image, "image for classifier pruning (optional)");
  add_resource_flags(map_cmd, &map_args.res, false);

  SaliencyArgs sal_args;
  CLI::App* sal_cmd = app.add_subcommand("saliency", "write positive and negative saliency maps");
  sal_cmd->add_option("--image", sal_args.image, "input image")->required();
  sal_cmd->add_option("--label", sal_args.label, "target label text")->required();
  sal_cmd->add_option("--out-dir", sal_args.out_dir, "output directory");
  add_resource_flags(sal_cmd, &sal_args.res, false);

  SegmentArgs seg_args;
  CLI::App* seg_cmd = app.add_subcommand("segment", "segment one image for a target label");
  seg_cmd->add_option("--image", seg_args.image, "input image")->required();
  seg_cmd->add_option("--label", seg_args.label, "target label text")->required();
  seg_cmd->add_option("--checkpoint", seg_args.checkpoint, "trained model checkpoint")->required();
  seg_cmd->add_option("--out", seg_args.out, "output mask PNG")->required();
  seg_cmd->add_option("--variant", seg_args.variant, "channel wiring tag");
  seg_cmd->add_flag("--no-grabcut", seg_args.no_grabcut, "threshold the likelihood at 0.5 instead");
  seg_cmd->add_option("--gt-mask", seg_args.gt_mask, "ground-truth mask (oracle variant, overlays)");
  seg_cmd->add_option("--overlay", seg_args.overlay, "write image|gt|prediction panel PNG");
  seg_cmd->add_option("--dump-saliency", seg_args.dump_saliency, "directory for the saliency maps");
  seg_cmd->add_option("--dump-annotation", seg_args.dump_annotation,
                      "directory for the 4-way annotation");
  seg_cmd->add_option("--dump-likelihood", seg_args.dump_likelihood, "likelihood map file");
  seg_cmd->add_option("--seed", seg_args.seed, "random stream seed");
  add_resource_flags(seg_cmd, &seg_args.res, true);

  TrainArgs train_args;
  CLI::App* train_cmd = app.add_subcommand("train", "train a segmentation model on one fold");
  train_cmd->add_option("--config", train_args.config, "key=value training profile");
  train_cmd->add_option("--variant", train_args.variant, "channel wiring tag");
  train_cmd->add_option("--steps", train_args.steps, "optimizer updates (0 = init checkpoint only)");
  CLI::Option* train_seed =
      train_cmd->add_option("--seed", train_args.seed, "model init and data-order seed");
  train_cmd->add_option("--out", train_args.out, "final checkpoint path");
  train_cmd->add_option("--run-dir", train_args.run_dir, "directory for periodic checkpoints");
  train_cmd->add_option("--checkpoint-every", train_args.checkpoint_every,
                        "steps between periodic checkpoints");
  add_data_flags(train_cmd, &train_args.data);
  add_resource_flags(train_cmd, &train_args.res, true);

  EvalArgs eval_args;
  CLI::App* eval_cmd = app.add_subcommand("eval", "score a checkpoint over a fold's test side");
  eval_cmd->add_option("--checkpoint", eval_args.checkpoint, "trained model checkpoint")->required();
  eval_cmd->add_option("--variant", eval_args.variant, "channel wiring tag");
  eval_cmd->add_option("--report", eval_args.report, "directory for report.tsv and report.json");
  eval_cmd->add_option("--seed", eval_args.seed, "episode stream seed");
  eval_cmd->add_option("--max-episodes", eval_args.max_episodes, "cap on (image, label) pairs");
  eval_cmd->add_option("--workers", eval_args.workers, "episode threads (default: processor count)");
  add_data_flags(eval_cmd, &eval_args.data);
  add_resource_flags(eval_cmd, &eval_args.res, true);

  SynthArgs synth_args;
  CLI::App* synth_cmd = app.add_subcommand("synth-data", "write a synthetic shapes corpus");
  synth_cmd->add_option("--count", synth_args.count, "number of images");
  synth_cmd->add_option("--seed", synth_args.seed, "corpus seed");
  synth_cmd->add_option("--out", synth_args.out, "output directory")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    train_args.seed_given = train_seed->count() > 0;
    if (map_cmd->parsed()) return cmd_map_labels(map_args);
    if (sal_cmd->parsed()) return cmd_saliency(sal_args);
    if (seg_cmd->parsed()) return cmd_segment(seg_args);
    if (train_cmd->parsed()) return cmd_train(train_args);
    if (eval_cmd->parsed()) return cmd_eval(eval_args);
    if (synth_cmd->parsed()) return cmd_synth_data(synth_args);
  } catch (const UsageError& e) {
    std::fprintf(stderr, "usage error: %s\n", e.what());
    return 2;
  } catch (const Error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 2;
}
