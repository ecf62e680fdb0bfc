#include "lexseg/eval.hpp"

#include <algorithm>
#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <limits>
#include <mutex>
#include <set>
#include <sstream>
#include <thread>
#include <utility>

#include "lexseg/io.hpp"

namespace lexseg::eval {

namespace {

struct VariantInfo {
  Variant variant;
  std::string name;
  int channels;
  bool grabcut;
};

const std::vector<VariantInfo>& variant_table() {
  static const std::vector<VariantInfo> table = {
      {Variant::kSem0CNone, "SEM-0-C-NONE", 3, true},
      {Variant::kSem1CRand, "SEM-1-C-RAND", 4, true},
      {Variant::kSem1CGt, "SEM-1-C-GT", 4, true},
      {Variant::kSem2CRand, "SEM-2-C-RAND", 5, true},
      {Variant::kSem2CMean, "SEM-2-C-MEAN", 5, true},
      {Variant::kSem2CNeg, "SEM-2-C-NEG", 5, true},
      {Variant::kOracle, "ORACLE", 5, true},
      {Variant::kNoGrabcut, "NO-GRABCUT", 5, false},
  };
  return table;
}

const VariantInfo& info_of(Variant variant) {
  for (const auto& info : variant_table())
    if (info.variant == variant) return info;
  throw ConfigError("unknown variant tag");
}

void append(std::vector<std::string>& into, const std::vector<std::string>& more) {
  into.insert(into.end(), more.begin(), more.end());
}

bool is_zero_map_fallback(const std::string& warning, Polarity side) {
  const char* prefix =
      side == Polarity::kPositive ? "no positive proxy labels" : "no negative proxy labels";
  return warning.rfind(prefix, 0) == 0;
}

// Appends `more`, dropping the zero-map fallback notice for a side the
// variant deliberately leaves unwired (or overrides).
void append_except(std::vector<std::string>& into, const std::vector<std::string>& more,
                   Polarity dropped_side) {
  for (const auto& w : more)
    if (!is_zero_map_fallback(w, dropped_side)) into.push_back(w);
}

std::vector<int> random_label_draw(Rng& rng, const ClassifierVocabulary& vocab, int k,
                                   const std::vector<ScoredLabel>& exclude) {
  std::set<int> skip;
  for (const auto& s : exclude) skip.insert(s.class_index);
  std::vector<int> pool;
  pool.reserve(vocab.entries.size());
  for (const auto& entry : vocab.entries)
    if (!skip.count(entry.class_index)) pool.push_back(entry.class_index);
  std::sort(pool.begin(), pool.end());
  std::size_t take = std::min<std::size_t>(static_cast<std::size_t>(k), pool.size());
  for (std::size_t i = 0; i < take; ++i) {
    std::size_t j = i + rng.uniform_index(pool.size() - i);
    std::swap(pool[i], pool[j]);
  }
  pool.resize(take);
  return pool;
}

ProxyLabelSet random_positive_set(const std::string& target, Rng& rng,
                                  const ClassifierVocabulary& vocab, int k) {
  ProxyLabelSet set;
  set.target = tokenize_label(target);
  set.k_max = k;
  for (int idx : random_label_draw(rng, vocab, k, {})) set.positives.push_back({idx, 1.0});
  return set;
}

ProxyLabelSet target_proxies(const std::string& target, const ImageTensor& image,
                             const PipelineResources& res) {
  static const OntologyIndex kNoOntology;
  static const EmbeddingTable kNoEmbeddings;
  const OntologyIndex& ontology = res.ontology ? *res.ontology : kNoOntology;
  const EmbeddingTable& table = res.embeddings ? *res.embeddings : kNoEmbeddings;
  return build_proxy_set(target, image, res.mapper, *res.vocab, ontology, table, *res.classifier,
                         res.k);
}

SaliencyMap mask_as_saliency(const SegmentationMask& mask) {
  SaliencyMap map = SaliencyMap::zeros(mask.width, mask.height, Polarity::kPositive);
  for (std::size_t i = 0; i < mask.values.size(); ++i)
    map.values[i] = mask.values[i] ? 1.0f : 0.0f;
  return map;
}

std::string percent(double value) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f", value);
  return buf;
}

}  // namespace

double binary_iou(const SegmentationMask& pred, const SegmentationMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw ShapeError("IoU operands differ in size");
  std::int64_t inter = 0;
  std::int64_t uni = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    bool p = pred.values[i] != 0;
    bool g = gt.values[i] != 0;
    inter += p && g;
    uni += p || g;
  }
  if (uni == 0) return 1.0;
  return static_cast<double>(inter) / static_cast<double>(uni);
}

double ClassResult::iou() const {
  std::int64_t denom = tp + fp + fn;
  if (denom == 0) return 1.0;
  return static_cast<double>(tp) / static_cast<double>(denom);
}

double PartitionMetrics::miou() const {
  double sum = 0.0;
  int n = 0;
  for (const auto& c : classes) {
    if (c.images == 0) continue;
    sum += c.iou();
    ++n;
  }
  return n ? sum / n : 0.0;
}

MetricsAccumulator::MetricsAccumulator(const PartitionSpec& partition)
    : partition_(partition.index) {
  for (const auto& label : partition.test_labels) {
    ClassResult c;
    c.label = label;
    classes_.push_back(std::move(c));
  }
}

void MetricsAccumulator::add(const std::string& label, const SegmentationMask& pred,
                             const SegmentationMask& gt) {
  if (pred.width != gt.width || pred.height != gt.height)
    throw ShapeError("prediction and ground truth differ in size for class '" + label + "'");
  std::int64_t tp = 0, fp = 0, fn = 0;
  for (std::size_t i = 0; i < pred.values.size(); ++i) {
    bool p = pred.values[i] != 0;
    bool g = gt.values[i] != 0;
    tp += p && g;
    fp += p && !g;
    fn += !p && g;
  }
  add_counts(label, tp, fp, fn);
}

void MetricsAccumulator::add_counts(const std::string& label, std::int64_t tp, std::int64_t fp,
                                    std::int64_t fn) {
  auto it = std::find_if(classes_.begin(), classes_.end(),
                         [&](const ClassResult& c) { return c.label == label; });
  if (it == classes_.end())
    throw ConfigError("class '" + label + "' is not on partition " + std::to_string(partition_) +
                      "'s test side");
  it->tp += tp;
  it->fp += fp;
  it->fn += fn;
  ++it->images;
}

PartitionMetrics MetricsAccumulator::finish() const {
  PartitionMetrics m;
  m.partition = partition_;
  for (const auto& c : classes_) {
    if (c.images == 0)
      m.warnings.push_back("class '" + c.label +
                           "' had no test images; excluded from the partition mean");
    else
      m.classes.push_back(c);
  }
  return m;
}

PartitionMetrics per_class_miou(
    const std::vector<std::tuple<std::string, SegmentationMask, SegmentationMask>>& results,
    const PartitionSpec& partition) {
  MetricsAccumulator acc(partition);
  for (const auto& [label, pred, gt] : results) acc.add(label, pred, gt);
  return acc.finish();
}

Variant variant_from_name(const std::string& name) {
  auto canon = [](const std::string& s) {
    std::string out;
    for (char ch : s)
      if (ch != '-' && ch != '_')
        out += static_cast<char>(std::toupper(static_cast<unsigned char>(ch)));
    return out;
  };
  const std::string want = canon(name);
  for (const auto& info : variant_table())
    if (canon(info.name) == want) return info.variant;
  throw ConfigError("unknown variant '" + name + "'");
}

const std::string& variant_name(Variant variant) { return info_of(variant).name; }

int variant_channels(Variant variant) { return info_of(variant).channels; }

bool variant_uses_grabcut(Variant variant) { return info_of(variant).grabcut; }

segnet::ModelConfig variant_model_config(Variant variant, std::uint64_t seed) {
  segnet::ModelConfig config = segnet::tiny_config();
  config.input_channels = variant_channels(variant);
  config.seed = seed;
  return config;
}

PipelineResources ShapeWorld::resources() const {
  PipelineResources r;
  r.classifier = classifier.get();
  r.vocab = &vocab;
  r.ontology = &ontology;
  r.embeddings = &embeddings;
  r.mapper = MapperKind::kWordNet;
  r.grabcut = grabcut;
  return r;
}

ShapeWorld make_shape_world() {
  ShapeWorld world;
  BackendSpec spec;
  spec.name = "fixture";
  world.classifier = load_backend(spec);
  for (int i = 0; i < fixture::kNumClasses; ++i) {
    const std::string& text = fixture::class_labels()[static_cast<std::size_t>(i)];
    VocabEntry entry;
    entry.class_index = i;
    entry.synset_id = "fx9000000" + std::to_string(i + 1);
    entry.label = tokenize_label(text);
    world.vocab.entries.push_back(std::move(entry));
    SynsetRecord record;
    record.id = "fx9000000" + std::to_string(i + 1);
    record.lemmas = {text};
    world.ontology.add(std::move(record));
  }
  return world;
}

PartitionSpec shape_partition() {
  PartitionSpec spec;
  spec.index = 0;
  const auto& labels = fixture::class_labels();
  for (int i = 0; i < fixture::kNumClasses; ++i) {
    auto& side = i < fixture::kNumClasses / 2 ? spec.train_labels : spec.test_labels;
    side.push_back(labels[static_cast<std::size_t>(i)]);
  }
  return spec;
}

EpisodeChannels build_episode_channels(const ImageTensor& image, const std::string& target_label,
                                       Variant variant, const PipelineResources& res, Rng& rng,
                                       const SegmentationMask* ground_truth) {
  if (variant != Variant::kSem0CNone) {
    if (!res.classifier)
      throw ConfigError("variant " + variant_name(variant) + " needs a classifier backend");
    if (!res.vocab)
      throw ConfigError("variant " + variant_name(variant) + " needs a classifier vocabulary");
  }

  EpisodeChannels out;
  switch (variant) {
    case Variant::kSem0CNone: {
      out.input = segnet::make_attention_input(image, nullptr, nullptr);
      break;
    }
    case Variant::kSem1CRand: {
      ProxyLabelSet set = random_positive_set(target_label, rng, *res.vocab, res.k);
      AttentionMaps maps = generate_attention_maps(image, set, *res.classifier, res.cache);
      out.positive = std::move(maps.positive);
      out.input = segnet::make_attention_input(image, &out.positive, nullptr);
      append_except(out.warnings, maps.warnings, Polarity::kNegative);
      break;
    }
    case Variant::kSem1CGt: {
      ProxyLabelSet proxies = target_proxies(target_label, image, res);
      proxies.negatives.clear();
      append(out.warnings, proxies.warnings);
      AttentionMaps maps = generate_attention_maps(image, proxies, *res.classifier, res.cache);
      out.positive = std::move(maps.positive);
      out.input = segnet::make_attention_input(image, &out.positive, nullptr);
      append_except(out.warnings, maps.warnings, Polarity::kNegative);
      break;
    }
    case Variant::kSem2CRand: {
      ProxyLabelSet proxies = target_proxies(target_label, image, res);
      proxies.negatives.clear();
      for (int idx : random_label_draw(rng, *res.vocab, res.k, proxies.positives))
        proxies.negatives.push_back({idx, 1.0});
      append(out.warnings, proxies.warnings);
      AttentionMaps maps = generate_attention_maps(image, proxies, *res.classifier, res.cache);
      out.positive = std::move(maps.positive);
      out.negative = std::move(maps.negative);
      out.input = segnet::make_attention_input(image, &out.positive, &out.negative);
      append(out.warnings, maps.warnings);
      break;
    }
    case Variant::kSem2CMean: {
      ProxyLabelSet proxies = target_proxies(target_label, image, res);
      proxies.negatives =
          select_negative_labels(image, *res.classifier, {}, res.k, &out.warnings);
      append(out.warnings, proxies.warnings);
      AttentionMaps maps = generate_attention_maps(image, proxies, *res.classifier, res.cache);
      out.positive = std::move(maps.positive);
      out.negative = std::move(maps.negative);
      out.input = segnet::make_attention_input(image, &out.positive, &out.negative);
      append(out.warnings, maps.warnings);
      break;
    }
    case Variant::kSem2CNeg:
    case Variant::kNoGrabcut: {
      ProxyLabelSet proxies = target_proxies(target_label, image, res);
      append(out.warnings, proxies.warnings);
      AttentionMaps maps = generate_attention_maps(image, proxies, *res.classifier, res.cache);
      out.positive = std::move(maps.positive);
      out.negative = std::move(maps.negative);
      out.input = segnet::make_attention_input(image, &out.positive, &out.negative);
      append(out.warnings, maps.warnings);
      break;
    }
    case Variant::kOracle: {
      if (!ground_truth)
        throw ConfigError("the oracle variant needs a ground-truth mask for the positive channel");
      if (ground_truth->width != image.width || ground_truth->height != image.height)
        throw ShapeError("ground-truth mask size does not match the image");
      ProxyLabelSet proxies = target_proxies(target_label, image, res);
      proxies.positives.clear();
      append(out.warnings, proxies.warnings);
      AttentionMaps maps = generate_attention_maps(image, proxies, *res.classifier, res.cache);
      out.positive = mask_as_saliency(*ground_truth);
      out.negative = std::move(maps.negative);
      out.input = segnet::make_attention_input(image, &out.positive, &out.negative);
      append_except(out.warnings, maps.warnings, Polarity::kPositive);
      break;
    }
  }

  if (out.input.channels.dim(0) != variant_channels(variant))
    throw ShapeError("variant " + variant_name(variant) + " wired " +
                     std::to_string(out.input.channels.dim(0)) + " channels, expected " +
                     std::to_string(variant_channels(variant)));
  return out;
}

SegmentOutcome run_pipeline(const ImageTensor& image, const std::string& target_label,
                            Variant variant, const segnet::Model& model,
                            const PipelineResources& res, Rng& rng,
                            const SegmentationMask* ground_truth) {
  if (model.config.input_channels != variant_channels(variant))
    throw ConfigError("variant " + variant_name(variant) + " wires " +
                      std::to_string(variant_channels(variant)) +
                      " input channels but the model expects " +
                      std::to_string(model.config.input_channels));
  SegmentOutcome out;
  out.channels = build_episode_channels(image, target_label, variant, res, rng, ground_truth);
  out.warnings = out.channels.warnings;
  out.likelihood = segnet::predict_likelihood(model, out.channels.input);
  if (variant_uses_grabcut(variant)) {
    out.annotation = annotate_from_likelihood(out.likelihood, res.grabcut);
    out.mask = grabcut_refine(image, out.annotation, res.grabcut, &out.likelihood, &out.warnings);
  } else {
    out.mask = threshold_baseline(out.likelihood, 0.5);
  }
  return out;
}

segnet::ExampleSource make_training_source(const SampleStore& store, EpisodeStream& stream,
                                           Variant variant, const PipelineResources& res,
                                           Rng& rng) {
  const SampleStore* store_ptr = &store;
  EpisodeStream* stream_ptr = &stream;
  Rng* rng_ptr = &rng;
  return [store_ptr, stream_ptr, variant, res, rng_ptr]() {
    Episode episode = stream_ptr->next();
    const Sample& sample = store_ptr->at(episode.sample_index);
    ImageTensor image = load_sample_image(sample);
    SegmentationMask gt = load_binary_mask(sample, episode.target_label);
    EpisodeChannels channels =
        build_episode_channels(image, episode.target_label, variant, res, *rng_ptr, &gt);
    segnet::TrainingExample example;
    example.input = std::move(channels.input);
    example.mask = std::move(gt);
    example.target_label = episode.target_label;
    return example;
  };
}

namespace {

struct EpisodeWork {
  std::size_t sample_index = 0;
  std::string label;
};

struct EpisodeCounts {
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
};

EpisodeCounts score_episode(const SampleStore& store, const EpisodeWork& work,
                            std::uint64_t episode_seed, Variant variant,
                            const segnet::Model& model, const PipelineResources& res) {
  const Sample& sample = store.at(work.sample_index);
  ImageTensor image = load_sample_image(sample);
  SegmentationMask gt = load_binary_mask(sample, work.label);
  Rng episode_rng(episode_seed);
  SegmentOutcome outcome = run_pipeline(image, work.label, variant, model, res, episode_rng, &gt);
  if (outcome.mask.width != gt.width || outcome.mask.height != gt.height)
    throw ShapeError("prediction and ground truth differ in size for class '" + work.label + "'");
  EpisodeCounts counts;
  for (std::size_t i = 0; i < gt.values.size(); ++i) {
    bool p = outcome.mask.values[i] != 0;
    bool g = gt.values[i] != 0;
    counts.tp += p && g;
    counts.fp += p && !g;
    counts.fn += !p && g;
  }
  return counts;
}

}  // namespace

PartitionMetrics evaluate_store(const SampleStore& store, const PartitionSpec& partition,
                                Variant variant, const segnet::Model& model,
                                const PipelineResources& res, const EvalOptions& options) {
  std::set<std::string> test_side(partition.test_labels.begin(), partition.test_labels.end());
  std::size_t cap = options.max_episodes > 0 ? static_cast<std::size_t>(options.max_episodes)
                                             : std::numeric_limits<std::size_t>::max();
  std::vector<EpisodeWork> work;
  for (std::size_t i = 0; i < store.size() && work.size() < cap; ++i) {
    const Sample& sample = store.at(i);
    for (const auto& label : sample.labels) {
      if (!test_side.count(label)) continue;
      if (work.size() >= cap) break;
      work.push_back({i, label});
    }
  }

  Rng base(options.seed);
  std::vector<EpisodeCounts> counts(work.size());
  int workers = std::min<int>(std::max(options.workers, 1), static_cast<int>(work.size()));
  if (workers <= 1) {
    for (std::size_t i = 0; i < work.size(); ++i)
      counts[i] = score_episode(store, work[i], base.fork(i), variant, model, res);
  } else {
    std::atomic<std::size_t> next{0};
    std::mutex failure_mutex;
    std::exception_ptr failure;
    auto run_worker = [&] {
      for (;;) {
        std::size_t i = next.fetch_add(1);
        if (i >= work.size()) return;
        try {
          counts[i] = score_episode(store, work[i], base.fork(i), variant, model, res);
        } catch (...) {
          std::lock_guard<std::mutex> lock(failure_mutex);
          if (!failure) failure = std::current_exception();
          return;
        }
      }
    };
    std::vector<std::thread> pool;
    pool.reserve(workers);
    for (int t = 0; t < workers; ++t) pool.emplace_back(run_worker);
    for (auto& thread : pool) thread.join();
    if (failure) std::rethrow_exception(failure);
  }

  MetricsAccumulator acc(partition);
  for (std::size_t i = 0; i < work.size(); ++i)
    acc.add_counts(work[i].label, counts[i].tp, counts[i].fp, counts[i].fn);
  return acc.finish();
}

const std::vector<ReferenceRow>& reference_rows() {
  static const std::vector<ReferenceRow> rows = {
      {"OSLSM: 1-shot", 1, {33.6, 55.3, 40.9, 33.5}, 40.8},
      {"coFCN: 1-shot", 1, {36.7, 50.6, 44.9, 32.3}, 41.1},
      {"SG: 1-shot", 1, {40.2, 58.4, 48.4, 38.4}, 46.3},
      {"OSLSM: 5-shot", 5, {35.9, 58.1, 42.7, 39.1}, 43.9},
      {"coFCN: 5-shot", 5, {37.5, 50.0, 44.1, 33.9}, 41.4},
      {"SG: 5-shot", 5, {41.9, 58.6, 48.6, 39.4}, 47.1},
      {"SEM-0-C-NONE", 0, {39.6, 40.3, 37.4, 31.6}, 37.2},
      {"SEM-1-C-RAND", 0, {31.2, 31.8, 41.8, 31.2}, 34.0},
      {"SEM-1-C-GT", 0, {37.3, 42.8, 45.4, 43.3}, 42.2},
      {"SEM-2-C-RAND", 0, {40.8, 57.9, 47.7, 38.5}, 46.2},
      {"SEM-2-C-MEAN", 0, {43.1, 56.2, 47.12, 47.0}, 48.4},
      {"SEM-2-C-NEG", 0, {48.7, 57.6, 48.9, 46.0}, 50.3},
      {"NO-GRABCUT", 0, {}, 48.1},
  };
  return rows;
}

const ReferenceRow& reference_row(const std::string& method) {
  for (const auto& row : reference_rows())
    if (row.method == method) return row;
  throw ConfigError("no stored reference row for '" + method + "'");
}

double MetricsReport::overall_mean() const {
  if (partitions.empty()) return 0.0;
  double sum = 0.0;
  for (const auto& p : partitions) sum += p.miou();
  return sum / static_cast<double>(partitions.size());
}

std::string report_tsv(const std::vector<MetricsReport>& reports) {
  std::ostringstream out;
  out << "section\tvariant\tpartition\tclass\tiou\n";
  for (const auto& report : reports) {
    for (const auto& part : report.partitions) {
      for (const auto& cls : part.classes)
        out << "result\t" << report.variant << '\t' << part.partition << '\t' << cls.label << '\t'
            << percent(100.0 * cls.iou()) << '\n';
      out << "partition-mean\t" << report.variant << '\t' << part.partition << "\t-\t"
          << percent(100.0 * part.miou()) << '\n';
    }
    out << "overall-mean\t" << report.variant << "\t-\t-\t"
        << percent(100.0 * report.overall_mean()) << '\n';
  }
  for (const auto& row : reference_rows()) {
    for (std::size_t i = 0; i < row.partition_miou.size(); ++i)
      out << "reference\t" << row.method << '\t' << i << "\t-\t" << percent(row.partition_miou[i])
          << '\n';
    out << "reference\t" << row.method << "\t-\t-\t" << percent(row.mean) << '\n';
  }
  return out.str();
}

nlohmann::json report_json(const std::vector<MetricsReport>& reports) {
  nlohmann::json doc;
  doc["variants"] = nlohmann::json::array();
  for (const auto& report : reports) {
    nlohmann::json v;
    v["variant"] = report.variant;
    v["metadata"] = report.metadata.is_null() ? nlohmann::json::object() : report.metadata;
    v["partitions"] = nlohmann::json::array();
    for (const auto& part : report.partitions) {
      nlohmann::json p;
      p["partition"] = part.partition;
      p["miou"] = 100.0 * part.miou();
      p["classes"] = nlohmann::json::array();
      for (const auto& cls : part.classes)
        p["classes"].push_back(
            {{"class", cls.label}, {"iou", 100.0 * cls.iou()}, {"images", cls.images}});
      p["warnings"] = part.warnings;
      v["partitions"].push_back(std::move(p));
    }
    v["overall_mean"] = 100.0 * report.overall_mean();
    doc["variants"].push_back(std::move(v));
  }
  doc["references"] = nlohmann::json::array();
  for (const auto& row : reference_rows())
    doc["references"].push_back({{"method", row.method},
                                 {"shots", row.shots},
                                 {"partition_miou", row.partition_miou},
                                 {"mean", row.mean}});
  return doc;
}

void write_reports(const std::vector<MetricsReport>& reports, const std::string& dir) {
  std::filesystem::create_directories(dir);
  io::atomic_write_file((std::filesystem::path(dir) / "report.tsv").string(), report_tsv(reports));
  io::atomic_write_file((std::filesystem::path(dir) / "report.json").string(),
                        report_json(reports).dump(2) + "\n");
}

std::vector<MetricsReport> run_ablation(const std::vector<VariantRun>& runs,
                                        const std::vector<PartitionSpec>& partitions,
                                        const SampleStore& test_store,
                                        const PipelineResources& res, const EvalOptions& options) {
  std::vector<MetricsReport> reports;
  for (const auto& run : runs) {
    if (run.checkpoint.empty() || !std::filesystem::exists(run.checkpoint))
      throw ResourceError("variant " + variant_name(run.variant) + " has no checkpoint at '" +
                          run.checkpoint + "'");
    segnet::Checkpoint checkpoint = segnet::load_checkpoint(run.checkpoint);
    MetricsReport report;
    report.variant = variant_name(run.variant);
    report.metadata = {{"checkpoint", run.checkpoint},
                       {"step", checkpoint.step},
                       {"backbone", checkpoint.model.config.backbone},
                       {"seed", options.seed},
                       {"max_episodes", options.max_episodes}};
    for (const auto& partition : partitions)
      report.partitions.push_back(
          evaluate_store(test_store, partition, run.variant, checkpoint.model, res, options));
    reports.push_back(std::move(report));
  }
  return reports;
}

const std::vector<MapperExpectation>& mapper_expectations() {
  static const std::vector<MapperExpectation> expectations = {
      {"bottle", {"beer bottle", "pill bottle", "soda bottle", "water bottle"}, {}},
      {"car", {"racer", "sports car", "streetcar", "freight car"}, {}},
      {"dog", {"pug", "terrier", "shepherd", "tibetan terrier"}, {}},
      {"chair", {"folding chair", "barber chair"}, {}},
      {"cat",
       {"tabby cat", "tiger cat", "siamese cat"},
       {"tabby cat", "tiger cat", "fox terrier", "toy terrier", "hamster"}},
      {"train", {"bullet train"}, {"steam locomotive"}},
      {"sofa",
       {"studio couch"},
       {"folding chair", "pillow", "desk", "bookcase", "studio couch"}},
  };
  return expectations;
}

bool MapperComparison::all_passed() const {
  for (const auto& row : rows)
    if (!row.passed) return false;
  return true;
}

MapperComparison compare_mappers(const std::vector<std::string>& targets,
                                 const ClassifierVocabulary& vocab, const OntologyIndex& ontology,
                                 const EmbeddingTable& table) {
  std::vector<const VocabEntry*> by_index(static_cast<std::size_t>(vocab.size()), nullptr);
  for (const auto& entry : vocab.entries)
    by_index[static_cast<std::size_t>(entry.class_index)] = &entry;

  auto entry_of = [&](int class_index) -> const VocabEntry& {
    return *by_index[static_cast<std::size_t>(class_index)];
  };
  // Vocabulary rows carry synonym lists ("tabby, tabby cat"), so a fixture
  // label counts as present when some candidate's token set covers it.
  auto covers = [&](const std::vector<int>& candidates, const std::string& wanted) {
    ClassLabel want = tokenize_label(wanted);
    for (int idx : candidates) {
      const auto& have = entry_of(idx).label.tokens;
      bool all = std::all_of(want.tokens.begin(), want.tokens.end(), [&](const std::string& tok) {
        return std::find(have.begin(), have.end(), tok) != have.end();
      });
      if (all) return true;
    }
    return false;
  };

  MapperComparison comparison;
  for (const auto& target : targets) {
    MapperRow row;
    row.target = target;
    ClassLabel label = tokenize_label(target);
    std::vector<int> wordnet_idx = wordnet_candidates(label, vocab, ontology);
    std::vector<int> word2vec_idx;
    try {
      for (const auto& scored : word2vec_candidates(label, vocab, table, 5))
        word2vec_idx.push_back(scored.class_index);
    } catch (const EmbeddingError&) {
      // An unembeddable target scores no candidates; the expectation check
      // below marks the row accordingly.
    }
    for (int idx : wordnet_idx) row.wordnet.push_back(entry_of(idx).label.text);
    for (int idx : word2vec_idx) row.word2vec.push_back(entry_of(idx).label.text);
    for (const auto& expected : mapper_expectations()) {
      if (expected.target != target) continue;
      for (const auto& need : expected.wordnet_required)
        if (!covers(wordnet_idx, need)) row.missing.push_back("wordnet: " + need);
      for (const auto& need : expected.word2vec_top5)
        if (!covers(word2vec_idx, need)) row.missing.push_back("word2vec: " + need);
    }
    row.passed = row.missing.empty();
    comparison.rows.push_back(std::move(row));
  }
  return comparison;
}

std::string mapper_report_text(const MapperComparison& comparison) {
  auto join = [](const std::vector<std::string>& items) {
    std::string out;
    for (std::size_t i = 0; i < items.size(); ++i) {
      if (i) out += ", ";
      out += items[i];
    }
    return out.empty() ? std::string("(none)") : out;
  };

  std::ostringstream out;
  int passed = 0;
  for (const auto& row : comparison.rows) {
    out << row.target << ": " << (row.passed ? "pass" : "FAIL") << '\n';
    out << "  wordnet:  " << join(row.wordnet) << '\n';
    out << "  word2vec: " << join(row.word2vec) << '\n';
    if (!row.missing.empty()) out << "  missing:  " << join(row.missing) << '\n';
    passed += row.passed;
  }
  out << passed << "/" << comparison.rows.size() << " targets passed\n";
  return out.str();
}

ImageU8 render_overlay(const ImageU8& image, const SegmentationMask& ground_truth,
                       const SegmentationMask& prediction) {
  if (ground_truth.width != image.width || ground_truth.height != image.height ||
      prediction.width != image.width || prediction.height != image.height)
    throw ShapeError("overlay panels differ in size");

  const int sep = 2;
  ImageU8 out = ImageU8::filled(image.width * 3 + sep * 2, image.height, 255, 255, 255);
  auto blit = [&](int panel, const SegmentationMask* mask, bool green) {
    int x0 = panel * (image.width + sep);
    for (int y = 0; y < image.height; ++y) {
      for (int x = 0; x < image.width; ++x) {
        const std::uint8_t* src = image.px(x, y);
        std::uint8_t* dst = out.px(x0 + x, y);
        if (mask && mask->at(x, y)) {
          dst[0] = static_cast<std::uint8_t>((src[0] + (green ? 0 : 255)) / 2);
          dst[1] = static_cast<std::uint8_t>((src[1] + (green ? 255 : 0)) / 2);
          dst[2] = static_cast<std::uint8_t>(src[2] / 2);
        } else {
          dst[0] = src[0];
          dst[1] = src[1];
          dst[2] = src[2];
        }
      }
    }
  };
  blit(0, nullptr, false);
  blit(1, &ground_truth, true);
  blit(2, &prediction, false);
  return out;
}

}  // namespace lexseg::eval
