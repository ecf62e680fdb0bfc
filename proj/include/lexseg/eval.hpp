#pragma once

#include <cstdint>
#include <memory>
#include <string>
#include <tuple>
#include <vector>

#include <json.hpp>

#include "lexseg/classifier.hpp"
#include "lexseg/dataset.hpp"
#include "lexseg/label_semantics.hpp"
#include "lexseg/postprocess.hpp"
#include "lexseg/rasters.hpp"
#include "lexseg/saliency.hpp"
#include "lexseg/segnet.hpp"
#include "lexseg/tensor.hpp"

// Benchmark harness: binary IoU with per-class aggregate counts, partition
// means, the ablation variant matrix, stored prior-work reference rows, and
// report/overlay writers. IoU values are fractions in [0,1] everywhere in
// this API; reports render them as percentages to line up with the stored
// reference numbers.
namespace lexseg::eval {

// |pred AND gt| / |pred OR gt|; 1.0 when both masks are empty.
double binary_iou(const SegmentationMask& pred, const SegmentationMask& gt);

struct ClassResult {
  std::string label;
  std::int64_t tp = 0;
  std::int64_t fp = 0;
  std::int64_t fn = 0;
  int images = 0;

  double iou() const;  // aggregate-count IoU; 1.0 when tp+fp+fn == 0
};

struct PartitionMetrics {
  int partition = -1;
  std::vector<ClassResult> classes;
  std::vector<std::string> warnings;

  // Mean IoU over the classes that had test images.
  double miou() const;
};

// Aggregates (label, pred, gt) results into per-class counts. Labels must
// belong to the partition's test side.
class MetricsAccumulator {
 public:
  explicit MetricsAccumulator(const PartitionSpec& partition);

  void add(const std::string& label, const SegmentationMask& pred, const SegmentationMask& gt);
  // Reducer entry for callers that counted pixels elsewhere, e.g. worker
  // threads that drop their masks after counting.
  void add_counts(const std::string& label, std::int64_t tp, std::int64_t fp, std::int64_t fn);
  PartitionMetrics finish() const;

 private:
  int partition_;
  std::vector<ClassResult> classes_;
};

PartitionMetrics per_class_miou(
    const std::vector<std::tuple<std::string, SegmentationMask, SegmentationMask>>& results,
    const PartitionSpec& partition);

// The ablation matrix. The tag fixes how the attention channels are sourced
// and how the likelihood is post-processed.
enum class Variant {
  kSem0CNone,   // RGB only
  kSem1CRand,   // one map composed from random labels
  kSem1CGt,     // one map from the target's proxy labels
  kSem2CRand,   // target map + random-label map
  kSem2CMean,   // target map + mean over the classifier's top-5 labels
  kSem2CNeg,    // target map + negative-label map
  kOracle,      // ground-truth mask as the positive channel + negative map
  kNoGrabcut,   // channels as kSem2CNeg; likelihood thresholded at 0.5
};

// Case- and separator-insensitive, so sem-2c-neg resolves like SEM-2-C-NEG.
Variant variant_from_name(const std::string& name);
const std::string& variant_name(Variant variant);
int variant_channels(Variant variant);      // 3, 4, or 5
bool variant_uses_grabcut(Variant variant);

// Tiny-backbone model configuration matching a variant's channel count.
segnet::ModelConfig variant_model_config(Variant variant, std::uint64_t seed);

// Shared handles for assembling per-episode inputs. Non-owning.
struct PipelineResources {
  const ClassifierBackend* classifier = nullptr;
  const ClassifierVocabulary* vocab = nullptr;
  const OntologyIndex* ontology = nullptr;
  const EmbeddingTable* embeddings = nullptr;
  MapperKind mapper = MapperKind::kWordNet;
  int k = 5;
  GrabCutParams grabcut;
  const SaliencyCache* cache = nullptr;
};

struct EpisodeChannels {
  segnet::AttentionInput input;
  SaliencyMap positive;
  SaliencyMap negative;
  std::vector<std::string> warnings;
};

// Builds the network input for one (image, target) episode under a variant's
// wiring rules. `rng` feeds the random-label draws; the oracle variant needs
// `ground_truth`. The result always has variant_channels(variant) channels.
EpisodeChannels build_episode_channels(const ImageTensor& image, const std::string& target_label,
                                       Variant variant, const PipelineResources& res, Rng& rng,
                                       const SegmentationMask* ground_truth = nullptr);

struct SegmentOutcome {
  SegmentationMask mask;
  LikelihoodImage likelihood;
  AnnotationImage annotation;  // untouched default for the threshold variant
  EpisodeChannels channels;
  std::vector<std::string> warnings;
};

// Channels -> likelihood -> annotation -> refined mask (or the 0.5-threshold
// baseline for the no-GrabCut variant).
SegmentOutcome run_pipeline(const ImageTensor& image, const std::string& target_label,
                            Variant variant, const segnet::Model& model,
                            const PipelineResources& res, Rng& rng,
                            const SegmentationMask* ground_truth = nullptr);

// Adapts an episode stream into segnet training examples: loads the episode
// image and mask, then wires channels per the variant.
segnet::ExampleSource make_training_source(const SampleStore& store, EpisodeStream& stream,
                                           Variant variant, const PipelineResources& res,
                                           Rng& rng);

struct EvalOptions {
  std::uint64_t seed = 1;
  int max_episodes = 0;  // cap on (image, label) pairs; 0 = every pair once
  int workers = 1;       // episode threads; results match any worker count
};

// Deterministic sweep: every store sample, every present test label.
PartitionMetrics evaluate_store(const SampleStore& store, const PartitionSpec& partition,
                                Variant variant, const segnet::Model& model,
                                const PipelineResources& res, const EvalOptions& options);

// Published results this harness compares against. Stored as printed;
// partition entries are percentages, rows with only a mean keep partitions
// empty. Never recomputed.
struct ReferenceRow {
  std::string method;
  int shots = 0;  // annotated support images the method consumes
  std::vector<double> partition_miou;
  double mean = 0.0;
};

const std::vector<ReferenceRow>& reference_rows();
const ReferenceRow& reference_row(const std::string& method);

struct MetricsReport {
  std::string variant;
  nlohmann::json metadata;
  std::vector<PartitionMetrics> partitions;

  double overall_mean() const;  // arithmetic mean of the partition mIOUs
};

std::string report_tsv(const std::vector<MetricsReport>& reports);
nlohmann::json report_json(const std::vector<MetricsReport>& reports);

// Writes report.tsv and report.json under `dir`.
void write_reports(const std::vector<MetricsReport>& reports, const std::string& dir);

struct VariantRun {
  Variant variant = Variant::kSem2CNeg;
  std::string checkpoint;
};

// Evaluates each pretrained variant over each partition's test side.
std::vector<MetricsReport> run_ablation(const std::vector<VariantRun>& runs,
                                        const std::vector<PartitionSpec>& partitions,
                                        const SampleStore& test_store,
                                        const PipelineResources& res, const EvalOptions& options);

// Proxy-label quality fixtures: the curated expectations each mapper must
// reproduce. wordnet_required lists labels the WordNet candidate set must
// contain; word2vec_top5, when non-empty, is the exact expected top-5 set.
struct MapperExpectation {
  std::string target;
  std::vector<std::string> wordnet_required;
  std::vector<std::string> word2vec_top5;
};

const std::vector<MapperExpectation>& mapper_expectations();

struct MapperRow {
  std::string target;
  std::vector<std::string> wordnet;
  std::vector<std::string> word2vec;
  std::vector<std::string> missing;  // required labels the mappers failed to produce
  bool passed = true;
};

struct MapperComparison {
  std::vector<MapperRow> rows;

  bool all_passed() const;
};

// Side-by-side WordNet vs Word2Vec proxy sets, checked against the curated
// expectations where one exists for the target.
MapperComparison compare_mappers(const std::vector<std::string>& targets,
                                 const ClassifierVocabulary& vocab, const OntologyIndex& ontology,
                                 const EmbeddingTable& table);

std::string mapper_report_text(const MapperComparison& comparison);

// Side-by-side qualitative panel: image | ground truth | prediction.
ImageU8 render_overlay(const ImageU8& image, const SegmentationMask& ground_truth,
                       const SegmentationMask& prediction);

// Self-contained resources for the synthetic shapes pipeline: the fixture
// classifier with a color-word vocabulary and a flat one-synset-per-class
// ontology.
struct ShapeWorld {
  std::unique_ptr<ClassifierBackend> classifier;
  ClassifierVocabulary vocab;
  OntologyIndex ontology;
  EmbeddingTable embeddings;  // empty; the shape vocabulary maps by token
  GrabCutParams grabcut;

  PipelineResources resources() const;
};

ShapeWorld make_shape_world();

// Even split of the fixture palette: first three colors train, last three
// test.
PartitionSpec shape_partition();

}  // namespace lexseg::eval
