#include "lexseg/dataset.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <set>
#include <sstream>
#include <utility>

#include "lexseg/classifier.hpp"
#include "lexseg/io.hpp"

namespace fs = std::filesystem;

namespace lexseg {
namespace {

// Color table used by the benchmark's indexed annotation PNGs: entry i is
// built by distributing the bits of i across the channels, high bit first.
std::array<std::uint8_t, 3> palette_color(int index) {
  std::array<std::uint8_t, 3> rgb = {0, 0, 0};
  int c = index;
  for (int j = 0; j < 8 && c != 0; ++j) {
    rgb[0] = static_cast<std::uint8_t>(rgb[0] | ((c >> 0) & 1) << (7 - j));
    rgb[1] = static_cast<std::uint8_t>(rgb[1] | ((c >> 1) & 1) << (7 - j));
    rgb[2] = static_cast<std::uint8_t>(rgb[2] | ((c >> 2) & 1) << (7 - j));
    c >>= 3;
  }
  return rgb;
}

int packed(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  return (static_cast<int>(r) << 16) | (static_cast<int>(g) << 8) | b;
}

// Maps a palette color back to its class index; -1 for colors outside the
// class range (the void border color among them).
int palette_index(std::uint8_t r, std::uint8_t g, std::uint8_t b) {
  static const std::map<int, int> kInverse = [] {
    std::map<int, int> m;
    for (int i = 20; i >= 0; --i) {
      const std::array<std::uint8_t, 3> c = palette_color(i);
      m[packed(c[0], c[1], c[2])] = i;
    }
    return m;
  }();
  const auto it = kInverse.find(packed(r, g, b));
  return it == kInverse.end() ? -1 : it->second;
}

std::vector<std::string> read_id_list(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open split list " + path);
  std::vector<std::string> ids;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n' || line.back() == ' '))
      line.pop_back();
    if (!line.empty()) ids.push_back(line);
  }
  return ids;
}

std::string find_image_file(const std::vector<std::string>& dirs, const std::string& image_id) {
  for (const std::string& dir : dirs) {
    for (const char* ext : {".jpg", ".png"}) {
      const std::string candidate = dir + "/" + image_id + ext;
      if (fs::exists(candidate)) return candidate;
    }
  }
  throw ResourceError("no image file found for id '" + image_id + "'");
}

std::vector<std::string> scan_indexed_mask_labels(const std::string& mask_path) {
  const ImageU8 mask = io::read_image(mask_path);
  std::set<int> present;
  for (std::size_t i = 0; i + 2 < mask.rgb.size(); i += 3) {
    const int idx = palette_index(mask.rgb[i], mask.rgb[i + 1], mask.rgb[i + 2]);
    if (idx >= 1 && idx <= 20) present.insert(idx);
  }
  std::vector<std::string> labels;
  for (int idx : present) labels.push_back(voc_class_labels()[static_cast<std::size_t>(idx - 1)]);
  return labels;
}

const std::map<std::string, std::string>& safe_to_canonical() {
  static const std::map<std::string, std::string> kMap = [] {
    std::map<std::string, std::string> m;
    for (const std::string& label : voc_class_labels()) m[path_safe_label(label)] = label;
    return m;
  }();
  return kMap;
}

}  // namespace

const std::vector<std::string>& voc_class_labels() {
  static const std::vector<std::string> kLabels = {
      "aeroplane", "bicycle", "bird",         "boat",  "bottle", "bus",   "car",
      "cat",       "chair",   "cow",          "diningtable", "dog",   "horse", "motorbike",
      "person",    "potted plant", "sheep",   "sofa",  "train",  "tv/monitor",
  };
  return kLabels;
}

std::string path_safe_label(const std::string& label) {
  std::string safe;
  for (char c : label) {
    if (c != ' ' && c != '/') safe.push_back(c);
  }
  return safe;
}

int voc_class_index(const std::string& label) {
  const std::vector<std::string>& labels = voc_class_labels();
  const auto it = std::find(labels.begin(), labels.end(), label);
  if (it == labels.end()) throw ConfigError("unknown class label '" + label + "'");
  return static_cast<int>(it - labels.begin()) + 1;
}

std::vector<PartitionSpec> load_partitions() {
  const std::vector<std::string>& labels = voc_class_labels();
  std::vector<PartitionSpec> partitions;
  for (int i = 0; i < 4; ++i) {
    PartitionSpec p;
    p.index = i;
    for (int j = 0; j < 20; ++j) {
      const std::string& label = labels[static_cast<std::size_t>(j)];
      if (j / 5 == i)
        p.test_labels.push_back(label);
      else
        p.train_labels.push_back(label);
    }
    partitions.push_back(std::move(p));
  }
  return partitions;
}

SampleStore::SampleStore(std::vector<Sample> samples) : samples_(std::move(samples)) {
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    Sample& s = samples_[i];
    std::sort(s.labels.begin(), s.labels.end());
    s.labels.erase(std::unique(s.labels.begin(), s.labels.end()), s.labels.end());
    if (!by_id_.emplace(s.image_id, i).second)
      throw ConfigError("duplicate image id '" + s.image_id + "' in sample store");
  }
}

const Sample* SampleStore::find(const std::string& image_id) const {
  const auto it = by_id_.find(image_id);
  return it == by_id_.end() ? nullptr : &samples_[it->second];
}

std::size_t SampleStore::count_with(const std::string& label) const {
  std::size_t n = 0;
  for (const Sample& s : samples_)
    n += std::binary_search(s.labels.begin(), s.labels.end(), label);
  return n;
}

std::size_t SampleStore::count_with_both(const std::string& a, const std::string& b) const {
  std::size_t n = 0;
  for (const Sample& s : samples_) {
    n += std::binary_search(s.labels.begin(), s.labels.end(), a) &&
         std::binary_search(s.labels.begin(), s.labels.end(), b);
  }
  return n;
}

std::vector<std::size_t> SampleStore::indices_with(const std::string& label) const {
  std::vector<std::size_t> out;
  for (std::size_t i = 0; i < samples_.size(); ++i) {
    if (std::binary_search(samples_[i].labels.begin(), samples_[i].labels.end(), label))
      out.push_back(i);
  }
  return out;
}

DatasetStores ingest_voc_sbd(const std::string& voc_root, const std::string& sbd_root) {
  const std::string jpeg_dir = voc_root + "/JPEGImages";
  const std::string seg_dir = voc_root + "/SegmentationClass";
  const std::string split_dir = voc_root + "/ImageSets/Segmentation";
  if (!fs::is_directory(jpeg_dir) || !fs::is_directory(seg_dir) ||
      !fs::exists(split_dir + "/train.txt") || !fs::exists(split_dir + "/val.txt")) {
    throw ResourceError("VOC layout not found under '" + voc_root +
                        "' (expected JPEGImages/, SegmentationClass/, and "
                        "ImageSets/Segmentation/{train,val}.txt)");
  }
  const std::string sbd_masks = sbd_root + "/masks";
  const std::string sbd_index = sbd_root + "/index.txt";
  if (!fs::is_directory(sbd_masks) || !fs::exists(sbd_index)) {
    throw ResourceError("converted SBD layout not found under '" + sbd_root +
                        "' (expected masks/<class>/<image_id>.png and index.txt; run "
                        "tools/convert_sbd.py on a raw SBD checkout first)");
  }

  const std::vector<std::string> train_ids = read_id_list(split_dir + "/train.txt");
  const std::vector<std::string> val_ids = read_id_list(split_dir + "/val.txt");
  const std::set<std::string> val_set(val_ids.begin(), val_ids.end());

  auto voc_sample = [&](const std::string& id) {
    Sample s;
    s.image_id = id;
    s.image_path = find_image_file({jpeg_dir}, id);
    s.mask_encoding = MaskEncoding::kIndexedPng;
    s.mask_path = seg_dir + "/" + id + ".png";
    if (!fs::exists(s.mask_path)) throw ResourceError("missing annotation " + s.mask_path);
    s.labels = scan_indexed_mask_labels(s.mask_path);
    return s;
  };

  std::vector<Sample> train_samples;
  std::set<std::string> train_seen;
  for (const std::string& id : train_ids) {
    if (val_set.count(id) || !train_seen.insert(id).second) continue;
    train_samples.push_back(voc_sample(id));
  }

  std::ifstream index(sbd_index);
  std::string line;
  while (std::getline(index, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ConfigError("malformed SBD index line (expected <id>\\t<classes>): " + line);
    const std::string id = line.substr(0, tab);
    if (val_set.count(id) || !train_seen.insert(id).second) continue;
    Sample s;
    s.image_id = id;
    s.image_path = find_image_file({sbd_root + "/images", jpeg_dir}, id);
    s.mask_encoding = MaskEncoding::kPerClassPng;
    s.mask_path = sbd_masks;
    std::istringstream classes(line.substr(tab + 1));
    std::string name;
    while (classes >> name) {
      const auto it = safe_to_canonical().find(name);
      if (it == safe_to_canonical().end())
        throw ConfigError("unknown class '" + name + "' in SBD index for id '" + id + "'");
      s.labels.push_back(it->second);
    }
    train_samples.push_back(std::move(s));
  }

  std::vector<Sample> test_samples;
  std::set<std::string> test_seen;
  for (const std::string& id : val_ids) {
    if (!test_seen.insert(id).second) continue;
    test_samples.push_back(voc_sample(id));
  }

  DatasetStores stores;
  stores.train = SampleStore(std::move(train_samples));
  stores.test = SampleStore(std::move(test_samples));
  return stores;
}

SampleStore merge_stores(const SampleStore& a, const SampleStore& b) {
  std::vector<Sample> merged = a.samples();
  for (const Sample& s : b.samples()) {
    if (a.find(s.image_id) == nullptr) merged.push_back(s);
  }
  return SampleStore(std::move(merged));
}

ImageTensor load_sample_image(const Sample& sample) {
  return to_image_tensor(io::read_image(sample.image_path));
}

SegmentationMask load_binary_mask(const Sample& sample, const std::string& label) {
  if (!std::binary_search(sample.labels.begin(), sample.labels.end(), label))
    throw ConfigError("label '" + label + "' is not present in sample '" + sample.image_id + "'");
  if (sample.mask_encoding == MaskEncoding::kPerClassPng) {
    return io::read_mask_png(sample.mask_path + "/" + path_safe_label(label) + "/" +
                             sample.image_id + ".png");
  }
  const ImageU8 raw = io::read_image(sample.mask_path);
  const int target = voc_class_index(label);
  SegmentationMask mask = SegmentationMask::zeros(raw.width, raw.height);
  for (int y = 0; y < raw.height; ++y) {
    for (int x = 0; x < raw.width; ++x) {
      const std::uint8_t* p = raw.px(x, y);
      mask.at(x, y) = palette_index(p[0], p[1], p[2]) == target ? 1 : 0;
    }
  }
  return mask;
}

double cooccurrence(const SampleStore& store, const std::string& a, const std::string& b) {
  const std::size_t with_a = store.count_with(a);
  if (with_a == 0)
    throw ConfigError("co-occurrence undefined: no images contain label '" + a + "'");
  return static_cast<double>(store.count_with_both(a, b)) / static_cast<double>(with_a);
}

EpisodeStream::EpisodeStream(const SampleStore* store, const PartitionSpec& partition, Split split,
                             std::string variant, std::uint64_t seed)
    : store_(store), variant_(std::move(variant)), rng_(seed) {
  if (partition.test_labels.empty() || partition.train_labels.empty())
    throw ConfigError("partition must list test and train labels");
  std::set<std::string> test_set(partition.test_labels.begin(), partition.test_labels.end());
  if (test_set.size() != partition.test_labels.size())
    throw ConfigError("partition test labels contain duplicates");
  for (const std::string& label : partition.train_labels) {
    if (test_set.count(label))
      throw ConfigError("label '" + label + "' appears on both sides of the partition");
  }

  allowed_ = split == Split::kTest ? partition.test_labels : partition.train_labels;
  std::sort(allowed_.begin(), allowed_.end());
  allowed_.erase(std::unique(allowed_.begin(), allowed_.end()), allowed_.end());

  for (std::size_t i = 0; i < store_->size(); ++i) {
    const Sample& s = store_->at(i);
    std::vector<std::string> usable;
    std::set_intersection(s.labels.begin(), s.labels.end(), allowed_.begin(), allowed_.end(),
                          std::back_inserter(usable));
    if (usable.empty()) continue;
    eligible_.push_back(i);
    for (const std::string& label : usable) by_label_[label].push_back(i);
  }
}

Episode EpisodeStream::make_episode(std::size_t sample_index, const std::string& target) {
  Episode e;
  e.image_id = store_->at(sample_index).image_id;
  e.sample_index = sample_index;
  e.target_label = target;
  e.variant = variant_;
  e.seed = rng_.next_u64();
  return e;
}

Episode EpisodeStream::next() {
  if (eligible_.empty())
    throw ResourceError("store has no samples carrying this split's labels");
  const std::size_t index = eligible_[rng_.uniform_index(eligible_.size())];
  const Sample& s = store_->at(index);
  std::vector<std::string> usable;
  std::set_intersection(s.labels.begin(), s.labels.end(), allowed_.begin(), allowed_.end(),
                        std::back_inserter(usable));
  const std::string& target = usable[rng_.uniform_index(usable.size())];
  return make_episode(index, target);
}

Episode EpisodeStream::next_for(const std::string& target_label) {
  if (!std::binary_search(allowed_.begin(), allowed_.end(), target_label)) {
    throw DataLeakError("target label '" + target_label +
                        "' belongs to the other side of this partition split");
  }
  const auto it = by_label_.find(target_label);
  if (it == by_label_.end() || it->second.empty())
    throw ResourceError("store has no samples with label '" + target_label + "'");
  const std::size_t index = it->second[rng_.uniform_index(it->second.size())];
  return make_episode(index, target_label);
}

EpisodeStream sample_episodes(const SampleStore& store, const PartitionSpec& partition, Split split,
                              const std::string& variant, std::uint64_t seed) {
  return EpisodeStream(&store, partition, split, variant, seed);
}

namespace {

struct ShapeSpot {
  int cx = 0, cy = 0, r = 0, kind = 0;

  bool contains(int x, int y) const {
    const int dx = x - cx, dy = y - cy;
    switch (kind) {
      case 0:  // disc
        return dx * dx + dy * dy <= r * r;
      case 1: {  // square
        const int half = std::max(1, (r * 4) / 5);
        return std::abs(dx) <= half && std::abs(dy) <= half;
      }
      default:  // upright triangle
        return dy >= -r && dy <= r && std::abs(dx) * 2 <= dy + r;
    }
  }

  bool overlaps(const ShapeSpot& other) const {
    return std::abs(cx - other.cx) <= r + other.r + 1 &&
           std::abs(cy - other.cy) <= r + other.r + 1;
  }
};

}  // namespace

SampleStore synth_shapes_corpus(int n, std::uint64_t seed, const std::string& out_dir) {
  if (n < 1) throw ConfigError("synthetic corpus size must be at least 1");
  fs::create_directories(out_dir + "/images");
  Rng rng(seed);

  std::string manifest = "# image_id\tlabels\n";
  std::vector<Sample> samples;
  for (int i = 0; i < n; ++i) {
    char id_buf[32];
    std::snprintf(id_buf, sizeof(id_buf), "synth_%05d", i);
    const std::string id = id_buf;

    const int w = 36 + static_cast<int>(rng.uniform_index(9));
    const int h = 36 + static_cast<int>(rng.uniform_index(9));
    ImageTensor image = ImageTensor::zeros(w, h);
    const double base = rng.uniform(0.35, 0.65);
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double gray = std::clamp(base + rng.uniform(-0.06, 0.06), 0.05, 0.95);
        for (int c = 0; c < 3; ++c)
          image.at(c, y, x) = std::clamp(gray + rng.uniform(-0.02, 0.02), 0.0, 1.0);
      }
    }

    const int shape_count = 1 + i % 3;
    std::array<int, fixture::kNumClasses> order = {0, 1, 2, 3, 4, 5};
    for (int j = fixture::kNumClasses - 1; j > 0; --j) {
      std::swap(order[static_cast<std::size_t>(j)],
                order[rng.uniform_index(static_cast<std::uint64_t>(j) + 1)]);
    }
    if (shape_count == 1) order[0] = (i / 3) % fixture::kNumClasses;

    std::vector<ShapeSpot> placed;
    std::vector<int> colors;
    for (int s = 0; s < shape_count; ++s) {
      ShapeSpot spot;
      bool ok = false;
      for (int attempt = 0; attempt < 40 && !ok; ++attempt) {
        spot.r = 5 + static_cast<int>(rng.uniform_index(4));
        spot.kind = static_cast<int>(rng.uniform_index(3));
        spot.cx = spot.r + 1 + static_cast<int>(rng.uniform_index(
                                    static_cast<std::uint64_t>(w - 2 * spot.r - 2)));
        spot.cy = spot.r + 1 + static_cast<int>(rng.uniform_index(
                                    static_cast<std::uint64_t>(h - 2 * spot.r - 2)));
        ok = std::none_of(placed.begin(), placed.end(),
                          [&](const ShapeSpot& p) { return p.overlaps(spot); });
      }
      if (!ok) continue;
      placed.push_back(spot);
      colors.push_back(order[static_cast<std::size_t>(s)]);
    }

    std::vector<std::string> labels;
    for (std::size_t s = 0; s < placed.size(); ++s) {
      const std::array<double, 3> tone = fixture::class_color(colors[s]);
      const std::string& label = fixture::class_labels()[static_cast<std::size_t>(colors[s])];
      SegmentationMask mask = SegmentationMask::zeros(w, h);
      for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
          if (!placed[s].contains(x, y)) continue;
          mask.at(x, y) = 1;
          for (int c = 0; c < 3; ++c) image.at(c, y, x) = tone[static_cast<std::size_t>(c)];
        }
      }
      io::write_mask_png(out_dir + "/masks/" + path_safe_label(label) + "/" + id + ".png", mask);
      labels.push_back(label);
    }

    io::write_image(out_dir + "/images/" + id + ".png", to_image_u8(image));
    std::sort(labels.begin(), labels.end());
    manifest += id;
    manifest += '\t';
    for (std::size_t s = 0; s < labels.size(); ++s) {
      if (s) manifest += ' ';
      manifest += labels[s];
    }
    manifest += '\n';

    Sample sample;
    sample.image_id = id;
    sample.image_path = out_dir + "/images/" + id + ".png";
    sample.mask_encoding = MaskEncoding::kPerClassPng;
    sample.mask_path = out_dir + "/masks";
    sample.labels = std::move(labels);
    samples.push_back(std::move(sample));
  }

  io::atomic_write_file(out_dir + "/manifest.tsv", manifest);
  return SampleStore(std::move(samples));
}

SampleStore load_synth_corpus(const std::string& dir) {
  std::ifstream in(dir + "/manifest.tsv");
  if (!in) throw ResourceError("cannot open corpus manifest " + dir + "/manifest.tsv");
  std::vector<Sample> samples;
  std::string line;
  while (std::getline(in, line)) {
    while (!line.empty() && (line.back() == '\r' || line.back() == '\n')) line.pop_back();
    if (line.empty() || line[0] == '#') continue;
    const std::size_t tab = line.find('\t');
    if (tab == std::string::npos)
      throw ConfigError("malformed manifest line (expected <id>\\t<labels>): " + line);
    Sample s;
    s.image_id = line.substr(0, tab);
    s.image_path = dir + "/images/" + s.image_id + ".png";
    if (!fs::exists(s.image_path))
      throw ResourceError("corpus manifest names missing image " + s.image_path);
    s.mask_encoding = MaskEncoding::kPerClassPng;
    s.mask_path = dir + "/masks";
    std::istringstream labels(line.substr(tab + 1));
    std::string label;
    while (labels >> label) s.labels.push_back(label);
    samples.push_back(std::move(s));
  }
  return SampleStore(std::move(samples));
}

}  // namespace lexseg
