#include "lexseg/label_semantics.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <set>
#include <string>
#include <vector>

#include "doctest.h"
#include "lexseg/common.hpp"

namespace lexseg {
namespace {

const char* kFixtureDir = LEXSEG_FIXTURE_DIR;

std::string fixture_path(const std::string& rel) {
  return std::string(kFixtureDir) + "/" + rel;
}

class TempFile {
 public:
  explicit TempFile(const std::string& contents, const std::string& name = "") {
    static int counter = 0;
    auto base = "lexseg_labels_" + std::to_string(::getpid()) + "_" + std::to_string(counter++);
    path_ = (std::filesystem::temp_directory_path() / (name.empty() ? base : name)).string();
    std::ofstream out(path_);
    out << contents;
  }
  ~TempFile() { std::remove(path_.c_str()); }
  const std::string& path() const { return path_; }

 private:
  std::string path_;
};

// Returns scripted per-class scores without looking at the image; the logits
// are chosen so softmax preserves their ordering exactly.
class ScriptedBackend : public ClassifierBackend {
 public:
  explicit ScriptedBackend(std::vector<double> logits) : logits_(std::move(logits)) {
    spec_.name = "scripted";
    first_ = Tensor({1, 3, 1, 1});
  }

  const BackendSpec& spec() const override { return spec_; }
  int num_classes() const override { return static_cast<int>(logits_.size()); }
  std::vector<double> predict_logits(const ImageTensor&) const override { return logits_; }
  GradientTensor input_gradient(const ImageTensor& image, int, GradientRule) const override {
    GradientTensor g;
    g.width = image.width;
    g.height = image.height;
    g.chw = Tensor({3, image.height, image.width});
    return g;
  }
  const Tensor& first_layer_weights() const override { return first_; }

 private:
  BackendSpec spec_;
  std::vector<double> logits_;
  Tensor first_;
};

ImageTensor blank_image(int w = 4, int h = 4) {
  ImageTensor im;
  im.width = w;
  im.height = h;
  im.chw = Tensor({3, h, w});
  return im;
}

bool subset_tokens(const std::vector<std::string>& small, const std::vector<std::string>& big) {
  for (const auto& t : small) {
    if (std::find(big.begin(), big.end(), t) == big.end()) return false;
  }
  return true;
}

// True when some candidate's label contains every token of `row`, the
// matching rule used to compare published mapping tables against vocabulary
// entries whose full label strings list several synonyms.
bool has_row(const std::vector<int>& candidates, const ClassifierVocabulary& vocab,
             const std::string& row) {
  auto want = tokenize_label(row);
  for (int idx : candidates) {
    if (subset_tokens(want.tokens, vocab.entries[idx].label.tokens)) return true;
  }
  return false;
}

int index_of_row(const ClassifierVocabulary& vocab, const std::string& row) {
  auto want = tokenize_label(row);
  for (const auto& entry : vocab.entries) {
    if (subset_tokens(want.tokens, entry.label.tokens)) return entry.class_index;
  }
  FAIL("vocabulary has no entry matching ", row);
  return -1;
}

const ClassifierVocabulary& imagenet_vocab() {
  static ClassifierVocabulary vocab = load_vocabulary(fixture_path("imagenet_vocab.tsv"));
  return vocab;
}

const OntologyIndex& wordnet_ontology() {
  static OntologyIndex index = load_wordnet_dir(fixture_path("wordnet"));
  return index;
}

const EmbeddingTable& embeddings() {
  static EmbeddingTable table = load_embeddings(fixture_path("embeddings_300d.txt"));
  return table;
}

TEST_CASE("tokenize_label splits on whitespace, commas and hyphens") {
  auto label = tokenize_label("bottle-screw");
  CHECK(label.tokens == std::vector<std::string>{"bottle", "screw"});

  label = tokenize_label("tabby, tabby cat");
  CHECK(label.tokens == std::vector<std::string>{"tabby", "cat"});

  label = tokenize_label("Wire-haired Fox  Terrier");
  CHECK(label.tokens == std::vector<std::string>{"wire", "haired", "fox", "terrier"});
  CHECK(label.text == "wire-haired fox  terrier");

  label = tokenize_label("tv/monitor");
  CHECK(label.tokens == std::vector<std::string>{"tv/monitor"});

  CHECK_THROWS_AS(tokenize_label(""), InvalidLabelError);
  CHECK_THROWS_AS(tokenize_label(" ,- "), InvalidLabelError);
}

TEST_CASE("vocabulary loads with contiguous indices and unique synsets") {
  const auto& vocab = imagenet_vocab();
  CHECK(vocab.size() == 117);
  std::set<std::string> synsets;
  for (int i = 0; i < vocab.size(); ++i) {
    CHECK(vocab.entries[i].class_index == i);
    synsets.insert(vocab.entries[i].synset_id);
    CHECK(!vocab.entries[i].label.tokens.empty());
  }
  CHECK(static_cast<int>(synsets.size()) == vocab.size());
}

TEST_CASE("vocabulary loader rejects malformed input") {
  CHECK_THROWS_AS(load_vocabulary(fixture_path("no_such_vocab.tsv")), ResourceError);

  TempFile gap("0\tn1\talpha\n2\tn2\tbeta\n");
  CHECK_THROWS_AS(load_vocabulary(gap.path()), ConfigError);

  TempFile dup_synset("0\tn1\talpha\n1\tn1\tbeta\n");
  CHECK_THROWS_AS(load_vocabulary(dup_synset.path()), ConfigError);

  TempFile two_fields("0\tn1\n");
  CHECK_THROWS_AS(load_vocabulary(two_fields.path()), ConfigError);

  TempFile ok("# comment\n1\tn2\tbeta, beta prime\n0\tn1\talpha\n");
  auto vocab = load_vocabulary(ok.path());
  CHECK(vocab.size() == 2);
  CHECK(vocab.entries[1].label.tokens == std::vector<std::string>{"beta", "prime"});
}

TEST_CASE("wordnet flat files and ontology tsv describe the same graph") {
  const auto& wn = wordnet_ontology();
  auto tsv = load_ontology_tsv(fixture_path("ontology.tsv"));
  REQUIRE(wn.loaded());
  REQUIRE(tsv.loaded());
  CHECK(wn.synset_count() == tsv.synset_count());
  for (const auto& record : tsv.records()) {
    const auto* other = wn.find(record.id);
    REQUIRE_MESSAGE(other != nullptr, record.id);
    CHECK(other->lemmas == record.lemmas);
    auto a = record.hypernym_ids;
    auto b = other->hypernym_ids;
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    CHECK(a == b);
  }
}

TEST_CASE("hypernym closure includes the start and survives cycles") {
  TempFile cyclic(
      "a\talpha\tb\n"
      "b\tbeta\tc\n"
      "c\tgamma\ta\n"
      "d\tdelta\t\n");
  auto index = load_ontology_tsv(cyclic.path());
  auto closure = index.hypernym_closure("a");
  std::sort(closure.begin(), closure.end());
  CHECK(closure == std::vector<std::string>{"a", "b", "c"});
  CHECK(index.hypernym_closure("d") == std::vector<std::string>{"d"});
  CHECK(index.hypernym_closure("missing").empty());
  CHECK(index.synsets_of_lemma("beta") == std::vector<std::string>{"b"});
  CHECK(index.synsets_of_lemma("nope").empty());
}

TEST_CASE("ontology loader errors") {
  CHECK_THROWS_AS(load_wordnet_dir("/no/such/dir"), ResourceError);
  CHECK_THROWS_AS(load_ontology_tsv("/no/such/file.tsv"), ResourceError);
  TempFile bad("just-one-field\n");
  CHECK_THROWS_AS(load_ontology_tsv(bad.path()), ConfigError);
}

TEST_CASE("ontology candidates cover the documented mapping rows") {
  const auto& vocab = imagenet_vocab();
  const auto& wn = wordnet_ontology();

  auto bottle = wordnet_candidates(tokenize_label("bottle"), vocab, wn);
  for (const char* row : {"beer bottle", "pill bottle", "soda bottle", "water bottle",
                          "bottle-screw"}) {
    CHECK_MESSAGE(has_row(bottle, vocab, row), row);
  }

  auto car = wordnet_candidates(tokenize_label("car"), vocab, wn);
  for (const char* row : {"racer", "sports car", "streetcar", "freight car", "car wheel",
                          "car mirror"}) {
    CHECK_MESSAGE(has_row(car, vocab, row), row);
  }

  auto dog = wordnet_candidates(tokenize_label("dog"), vocab, wn);
  for (const char* row : {"pug", "terrier", "shepherd", "tibetan terrier", "monkey dog"}) {
    CHECK_MESSAGE(has_row(dog, vocab, row), row);
  }

  auto chair = wordnet_candidates(tokenize_label("chair"), vocab, wn);
  for (const char* row : {"folding chair", "barber chair"}) {
    CHECK_MESSAGE(has_row(chair, vocab, row), row);
  }

  auto cat = wordnet_candidates(tokenize_label("cat"), vocab, wn);
  for (const char* row : {"tabby cat", "tiger cat", "siamese cat", "cat bear"}) {
    CHECK_MESSAGE(has_row(cat, vocab, row), row);
  }
  CHECK(!has_row(cat, vocab, "panthera tigris"));
  CHECK(!has_row(cat, vocab, "hamster"));

  auto train = wordnet_candidates(tokenize_label("train"), vocab, wn);
  CHECK(has_row(train, vocab, "bullet train"));
  CHECK(!has_row(train, vocab, "steam locomotive"));
  CHECK(!has_row(train, vocab, "electric locomotive"));

  auto sofa = wordnet_candidates(tokenize_label("sofa"), vocab, wn);
  CHECK(has_row(sofa, vocab, "studio couch"));
}

TEST_CASE("candidates come back in vocabulary order without duplicates") {
  const auto& vocab = imagenet_vocab();
  auto car = wordnet_candidates(tokenize_label("car"), vocab, wordnet_ontology());
  REQUIRE(!car.empty());
  for (std::size_t i = 1; i < car.size(); ++i) CHECK(car[i - 1] < car[i]);
}

TEST_CASE("candidate search requires a loaded ontology") {
  OntologyIndex empty;
  CHECK_THROWS_AS(wordnet_candidates(tokenize_label("car"), imagenet_vocab(), empty),
                  ConfigError);
}

TEST_CASE("embedding table parses with full dimensionality") {
  const auto& table = embeddings();
  CHECK(table.dimension == 300);
  CHECK(table.rows.size() == 232);
  CHECK(table.rows.count("sofa") == 1);
  CHECK_THROWS_AS(load_embeddings(fixture_path("no_such_embeddings.txt")), ResourceError);
  TempFile ragged("alpha 1 2 3\nbeta 1 2\n");
  CHECK_THROWS_AS(load_embeddings(ragged.path()), ConfigError);
}

TEST_CASE("embedding candidates reproduce the documented nearest labels") {
  const auto& vocab = imagenet_vocab();
  const auto& table = embeddings();

  auto as_set = [](const std::vector<ScoredLabel>& scored) {
    std::set<int> out;
    for (const auto& s : scored) out.insert(s.class_index);
    return out;
  };

  auto sofa = word2vec_candidates(tokenize_label("sofa"), vocab, table, 5);
  REQUIRE(sofa.size() == 5);
  for (std::size_t i = 1; i < sofa.size(); ++i) CHECK(sofa[i - 1].score >= sofa[i].score);
  std::set<int> want_sofa = {
      index_of_row(vocab, "folding chair"), index_of_row(vocab, "pillow"),
      index_of_row(vocab, "desk"), index_of_row(vocab, "bookcase"),
      index_of_row(vocab, "studio couch")};
  CHECK(as_set(sofa) == want_sofa);

  auto cat = word2vec_candidates(tokenize_label("cat"), vocab, table, 5);
  std::set<int> want_cat = {
      index_of_row(vocab, "tabby cat"), index_of_row(vocab, "tiger cat"),
      index_of_row(vocab, "fox terrier"), index_of_row(vocab, "toy terrier"),
      index_of_row(vocab, "hamster")};
  CHECK(as_set(cat) == want_cat);

  auto train = word2vec_candidates(tokenize_label("train"), vocab, table, 5);
  CHECK(as_set(train).count(index_of_row(vocab, "steam locomotive")) == 1);

  auto all = word2vec_candidates(tokenize_label("cat"), vocab, table, vocab.size() + 10);
  CHECK(static_cast<int>(all.size()) == vocab.size());

  CHECK_THROWS_AS(word2vec_candidates(tokenize_label("cat"), vocab, table, 0), ConfigError);
  CHECK_THROWS_AS(word2vec_candidates(tokenize_label("qqzzqq"), vocab, table, 5),
                  EmbeddingError);
}

TEST_CASE("embedding candidates skip entries with no embeddable tokens") {
  TempFile emb("alpha 1 0\nbeta 0 1\n");
  auto table = load_embeddings(emb.path());
  TempFile voc("0\tn1\talpha\n1\tn2\tmystery word\n2\tn3\tbeta\n");
  auto vocab = load_vocabulary(voc.path());
  auto got = word2vec_candidates(tokenize_label("alpha"), vocab, table, 3);
  REQUIRE(got.size() == 2);
  CHECK(got[0].class_index == 0);
  CHECK(got[0].score == doctest::Approx(1.0));
  CHECK(got[1].class_index == 2);
}

TEST_CASE("classifier pruning keeps the strongest candidates") {
  ScriptedBackend backend({0.1, 2.0, -1.0, 3.0, 0.5, 2.0});
  auto image = blank_image();

  auto kept = prune_by_classifier({0, 1, 2, 3, 4, 5}, image, backend, 3);
  REQUIRE(kept.size() == 3);
  CHECK(kept[0].class_index == 3);
  CHECK(kept[1].class_index == 1);  // tie with 5 resolves to the lower index
  CHECK(kept[2].class_index == 5);
  CHECK(kept[0].score > kept[1].score);
  CHECK(kept[1].score == doctest::Approx(kept[2].score));

  auto fewer = prune_by_classifier({4, 2}, image, backend, 5);
  REQUIRE(fewer.size() == 2);
  CHECK(fewer[0].class_index == 4);

  auto deduped = prune_by_classifier({1, 1, 1}, image, backend, 2);
  CHECK(deduped.size() == 1);

  std::vector<std::string> warnings;
  auto none = prune_by_classifier({}, image, backend, 3, &warnings);
  CHECK(none.empty());
  CHECK(warnings.size() == 1);

  CHECK_THROWS_AS(prune_by_classifier({0}, image, backend, 0), ConfigError);
  CHECK_THROWS_AS(prune_by_classifier({6}, image, backend, 1), std::out_of_range);
}

TEST_CASE("negative selection avoids the positive set") {
  ScriptedBackend backend({5.0, 4.0, 3.0, 2.0, 1.0, 0.0});
  auto image = blank_image();

  auto negatives = select_negative_labels(image, backend, {0, 2}, 3);
  REQUIRE(negatives.size() == 3);
  CHECK(negatives[0].class_index == 1);
  CHECK(negatives[1].class_index == 3);
  CHECK(negatives[2].class_index == 4);

  CHECK(select_negative_labels(image, backend, {0}, 0).empty());

  std::vector<std::string> warnings;
  auto most = select_negative_labels(image, backend, {0, 1, 2, 3}, 5, &warnings);
  CHECK(most.size() == 2);
  CHECK(warnings.size() == 1);

  CHECK_THROWS_AS(select_negative_labels(image, backend, {9}, 2), std::out_of_range);
}

TEST_CASE("mapper names resolve") {
  CHECK(mapper_from_name("wordnet") == MapperKind::kWordNet);
  CHECK(mapper_from_name("word2vec") == MapperKind::kWord2Vec);
  CHECK_THROWS_AS(mapper_from_name("glove?"), ConfigError);
}

TEST_CASE("proxy set assembly prunes, ranks and separates polarities") {
  const auto& vocab = imagenet_vocab();
  std::vector<double> logits(vocab.size());
  for (int i = 0; i < vocab.size(); ++i) {
    logits[i] = static_cast<double>((i * 2654435761u) % 997u) / 997.0;
  }
  ScriptedBackend backend(logits);
  auto image = blank_image();

  for (auto mapper : {MapperKind::kWordNet, MapperKind::kWord2Vec}) {
    auto set = build_proxy_set("cat", image, mapper, vocab, wordnet_ontology(), embeddings(),
                               backend, 5);
    CHECK(set.k_max == 5);
    CHECK(set.target.tokens == std::vector<std::string>{"cat"});
    CHECK(!set.positives.empty());
    CHECK(set.positives.size() <= 5);
    CHECK(set.negatives.size() == 5);
    std::set<int> pos;
    for (const auto& p : set.positives) pos.insert(p.class_index);
    for (const auto& n : set.negatives) CHECK(pos.count(n.class_index) == 0);
    for (std::size_t i = 1; i < set.positives.size(); ++i) {
      CHECK(set.positives[i - 1].score >= set.positives[i].score);
    }
  }

  ClassifierVocabulary tiny;
  tiny.entries.push_back({0, "n1", tokenize_label("alpha")});
  CHECK_THROWS_AS(build_proxy_set("cat", image, MapperKind::kWordNet, tiny, wordnet_ontology(),
                                  embeddings(), backend, 5),
                  ConfigError);
}

TEST_CASE("unknown targets produce an empty positive set with a warning") {
  const auto& vocab = imagenet_vocab();
  std::vector<double> logits(vocab.size(), 0.0);
  ScriptedBackend backend(logits);
  auto set = build_proxy_set("xylophone", blank_image(), MapperKind::kWordNet, vocab,
                             wordnet_ontology(), embeddings(), backend, 5);
  CHECK(set.positives.empty());
  CHECK(set.negatives.size() == 5);
  CHECK(!set.warnings.empty());
}

}  // namespace
}  // namespace lexseg
