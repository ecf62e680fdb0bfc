#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "lexseg/common.hpp"
#include "lexseg/rasters.hpp"
#include "lexseg/tensor.hpp"

namespace lexseg {

// The 20 segmentation classes in alphabetical order. Spellings follow the
// benchmark's class list ("potted plant", "tv/monitor"); path_safe_label
// gives the directory-safe form used on disk.
const std::vector<std::string>& voc_class_labels();
std::string path_safe_label(const std::string& label);
int voc_class_index(const std::string& label);  // 1-based index in the mask palette

struct PartitionSpec {
  int index = 0;
  std::vector<std::string> test_labels;
  std::vector<std::string> train_labels;
};

// The four fixed five-class folds: classes sorted alphabetically, five
// consecutive per fold held out for testing, the other fifteen for training.
std::vector<PartitionSpec> load_partitions();

enum class MaskEncoding {
  kIndexedPng,   // one palette PNG holding every class of the image
  kPerClassPng,  // <mask_path>/<class>/<image_id>.png, one binary PNG per class
};

struct Sample {
  std::string image_id;
  std::string image_path;
  MaskEncoding mask_encoding = MaskEncoding::kIndexedPng;
  std::string mask_path;
  std::vector<std::string> labels;  // sorted; every entry has >= 1 mask pixel
};

class SampleStore {
 public:
  SampleStore() = default;
  explicit SampleStore(std::vector<Sample> samples);

  std::size_t size() const { return samples_.size(); }
  const Sample& at(std::size_t i) const { return samples_.at(i); }
  const std::vector<Sample>& samples() const { return samples_; }
  const Sample* find(const std::string& image_id) const;

  std::size_t count_with(const std::string& label) const;
  std::size_t count_with_both(const std::string& a, const std::string& b) const;
  std::vector<std::size_t> indices_with(const std::string& label) const;

 private:
  std::vector<Sample> samples_;
  std::map<std::string, std::size_t> by_id_;
};

struct DatasetStores {
  SampleStore train;
  SampleStore test;
};

// Train store: converted-SBD records plus the VOC train split, deduplicated
// by image id (a VOC annotation wins over an SBD one) with every VOC val id
// removed. Test store: the VOC val split.
DatasetStores ingest_voc_sbd(const std::string& voc_root, const std::string& sbd_root);

// Union of two stores, deduplicated by image id (first store wins).
SampleStore merge_stores(const SampleStore& a, const SampleStore& b);

ImageTensor load_sample_image(const Sample& sample);

// Binary mask for one class of the sample; the label must be present.
SegmentationMask load_binary_mask(const Sample& sample, const std::string& label);

// Fraction of the images containing `a` that also contain `b`.
double cooccurrence(const SampleStore& store, const std::string& a, const std::string& b);

enum class Split { kTrain, kTest };

struct Episode {
  std::string image_id;
  std::size_t sample_index = 0;
  std::string target_label;
  std::string variant;
  std::uint64_t seed = 0;  // derived stream value for downstream randomness
};

// Endless deterministic episode source: a uniformly random eligible image,
// then a uniformly random present label from the split's side of the
// partition. Copies of the stream with the same seed yield the same
// sequence.
class EpisodeStream {
 public:
  EpisodeStream(const SampleStore* store, const PartitionSpec& partition, Split split,
                std::string variant, std::uint64_t seed);

  Episode next();
  // Episodes restricted to one target; a label outside the split's side of
  // the partition is a data leak and is refused.
  Episode next_for(const std::string& target_label);

  const std::vector<std::string>& allowed_labels() const { return allowed_; }

 private:
  const SampleStore* store_;
  std::string variant_;
  Rng rng_;
  std::vector<std::string> allowed_;
  std::vector<std::size_t> eligible_;
  std::map<std::string, std::vector<std::size_t>> by_label_;

  Episode make_episode(std::size_t sample_index, const std::string& target);
};

EpisodeStream sample_episodes(const SampleStore& store, const PartitionSpec& partition, Split split,
                              const std::string& variant, std::uint64_t seed);

// Deterministic synthetic corpus: image i carries 1 + (i mod 3) flat-colored
// shapes from the fixture classifier's palette on a textured near-gray
// background; single-shape images cycle through the palette. Written as a
// self-describing directory (images/, masks/, manifest.tsv) and returned as
// a per-class-PNG store.
SampleStore synth_shapes_corpus(int n, std::uint64_t seed, const std::string& out_dir);
SampleStore load_synth_corpus(const std::string& dir);

}  // namespace lexseg
