#pragma once

#include <string>
#include <unordered_map>
#include <vector>

#include "lexseg/classifier.hpp"
#include "lexseg/tensor.hpp"

namespace lexseg {

struct ClassLabel {
  std::string text;                  // lowercase original text
  std::vector<std::string> tokens;   // lowercase, deduplicated, order-preserving
};

// Splits on whitespace, commas, and hyphens; lowercases; drops empty tokens
// and duplicates. Throws InvalidLabelError on empty/whitespace-only text.
ClassLabel tokenize_label(const std::string& text);

struct VocabEntry {
  int class_index = 0;
  std::string synset_id;
  ClassLabel label;
};

struct ClassifierVocabulary {
  std::vector<VocabEntry> entries;
  int size() const { return static_cast<int>(entries.size()); }
};

// TSV with columns class_index, synset_id, label_text. Indices must be unique
// and contiguous from 0; synset ids must be unique.
ClassifierVocabulary load_vocabulary(const std::string& path);

struct SynsetRecord {
  std::string id;
  std::vector<std::string> lemmas;        // lowercase, spaces instead of underscores
  std::vector<std::string> hypernym_ids;
};

class OntologyIndex {
 public:
  void add(SynsetRecord record);

  bool loaded() const { return !synsets_.empty(); }
  std::size_t synset_count() const { return synsets_.size(); }
  const SynsetRecord* find(const std::string& id) const;
  const std::vector<std::string>& synsets_of_lemma(const std::string& lemma) const;

  // All synset ids reachable by hypernym edges, including `id` itself.
  // Cycle-safe; ids absent from the ontology yield an empty list.
  std::vector<std::string> hypernym_closure(const std::string& id) const;

  const std::vector<SynsetRecord>& records() const { return synsets_; }

 private:
  std::vector<SynsetRecord> synsets_;
  std::unordered_map<std::string, std::size_t> by_id_;
  std::unordered_map<std::string, std::vector<std::string>> by_lemma_;
};

// Reads `data.noun` (WordNet 3.0 flat format) from a directory; lemma and
// hypernym information both live there, so `index.noun` is not consulted.
OntologyIndex load_wordnet_dir(const std::string& dir);

// Preprocessed alternative: TSV with columns synset_id, |-separated lemmas,
// |-separated hypernym ids.
OntologyIndex load_ontology_tsv(const std::string& path);

struct EmbeddingTable {
  int dimension = 0;
  std::unordered_map<std::string, std::vector<double>> rows;
};

// Text embeddings, one entry per line: word then `dimension` decimal floats.
EmbeddingTable load_embeddings(const std::string& path);

struct ScoredLabel {
  int class_index = 0;
  double score = 0.0;
};

struct ProxyLabelSet {
  ClassLabel target;
  std::vector<ScoredLabel> positives;  // non-increasing score
  std::vector<ScoredLabel> negatives;  // non-increasing score
  int k_max = 5;
  std::vector<std::string> warnings;
};

// Every vocabulary entry related to the target under either rule:
// (a) token overlap with the target text, its synset lemmas, or any hypernym
//     lemma; (b) the target synset appears in the entry synset's hypernym
//     closure. Result in vocabulary order.
std::vector<int> wordnet_candidates(const ClassLabel& target, const ClassifierVocabulary& vocab,
                                    const OntologyIndex& ontology);

// Top-k vocabulary entries by cosine similarity between mean token
// embeddings; descending cosine, ties by ascending class_index.
std::vector<ScoredLabel> word2vec_candidates(const ClassLabel& target,
                                             const ClassifierVocabulary& vocab,
                                             const EmbeddingTable& table, int k);

// Keeps the min(k, |candidates|) candidates with the highest classifier
// probability on the image; descending score, ties by ascending class_index.
std::vector<ScoredLabel> prune_by_classifier(const std::vector<int>& candidates,
                                             const ImageTensor& image,
                                             const ClassifierBackend& classifier, int k,
                                             std::vector<std::string>* warnings = nullptr);

// The k highest-probability classes on the image excluding `positives`.
std::vector<ScoredLabel> select_negative_labels(const ImageTensor& image,
                                                const ClassifierBackend& classifier,
                                                const std::vector<int>& positives, int k,
                                                std::vector<std::string>* warnings = nullptr);

enum class MapperKind { kWordNet, kWord2Vec };

MapperKind mapper_from_name(const std::string& name);

// Candidate generation for the chosen mapper, classifier pruning, then
// negative selection with the same k (default 5).
ProxyLabelSet build_proxy_set(const std::string& target_text, const ImageTensor& image,
                              MapperKind mapper, const ClassifierVocabulary& vocab,
                              const OntologyIndex& ontology, const EmbeddingTable& table,
                              const ClassifierBackend& classifier, int k = 5);

}  // namespace lexseg
