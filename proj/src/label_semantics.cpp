#include "lexseg/label_semantics.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>
#include <unordered_set>

#include "lexseg/common.hpp"

namespace lexseg {
namespace {

std::string to_lower(std::string s) {
  for (char& c : s) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  return s;
}

bool is_separator(char c) {
  return std::isspace(static_cast<unsigned char>(c)) || c == ',' || c == '-';
}

std::vector<std::string> split_fields(const std::string& line, char sep) {
  std::vector<std::string> out;
  std::string field;
  std::istringstream in(line);
  while (std::getline(in, field, sep)) out.push_back(field);
  return out;
}

// Lemma strings as WordNet stores them: lowercase with underscores for
// spaces, occasionally a trailing sense marker in parentheses.
std::string normalize_lemma(std::string lemma) {
  lemma = to_lower(std::move(lemma));
  for (char& c : lemma)
    if (c == '_') c = ' ';
  auto paren = lemma.find('(');
  if (paren != std::string::npos) lemma.erase(paren);
  while (!lemma.empty() && lemma.back() == ' ') lemma.pop_back();
  return lemma;
}

std::string joined_tokens(const ClassLabel& label) {
  std::string out;
  for (const std::string& t : label.tokens) {
    if (!out.empty()) out += ' ';
    out += t;
  }
  return out;
}

void sort_scored(std::vector<ScoredLabel>& scored) {
  std::stable_sort(scored.begin(), scored.end(), [](const ScoredLabel& a, const ScoredLabel& b) {
    if (a.score != b.score) return a.score > b.score;
    return a.class_index < b.class_index;
  });
}

}  // namespace

ClassLabel tokenize_label(const std::string& text) {
  ClassLabel label;
  label.text = to_lower(text);
  std::string token;
  std::unordered_set<std::string> seen;
  auto flush = [&] {
    if (!token.empty() && seen.insert(token).second) label.tokens.push_back(token);
    token.clear();
  };
  for (char c : label.text) {
    if (is_separator(c))
      flush();
    else
      token += c;
  }
  flush();
  if (label.tokens.empty())
    throw InvalidLabelError("label text '" + text + "' contains no word tokens");
  return label;
}

ClassifierVocabulary load_vocabulary(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open vocabulary file " + path);
  ClassifierVocabulary vocab;
  std::unordered_set<std::string> synsets;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields = split_fields(line, '\t');
    if (fields.size() != 3)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected 3 tab-separated fields (class_index, synset_id, label)");
    VocabEntry entry;
    entry.class_index = std::stoi(fields[0]);
    entry.synset_id = fields[1];
    entry.label = tokenize_label(fields[2]);
    if (!synsets.insert(entry.synset_id).second)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": duplicate synset id " +
                        entry.synset_id);
    vocab.entries.push_back(std::move(entry));
  }
  if (vocab.entries.empty()) throw ConfigError("vocabulary file " + path + " has no entries");
  std::sort(vocab.entries.begin(), vocab.entries.end(),
            [](const VocabEntry& a, const VocabEntry& b) { return a.class_index < b.class_index; });
  for (int i = 0; i < vocab.size(); ++i) {
    if (vocab.entries[static_cast<std::size_t>(i)].class_index != i)
      throw ConfigError("vocabulary file " + path + ": class indices must be contiguous from 0");
  }
  return vocab;
}

void OntologyIndex::add(SynsetRecord record) {
  if (by_id_.count(record.id)) throw ConfigError("duplicate synset id " + record.id);
  by_id_[record.id] = synsets_.size();
  for (const std::string& lemma : record.lemmas) by_lemma_[lemma].push_back(record.id);
  synsets_.push_back(std::move(record));
}

const SynsetRecord* OntologyIndex::find(const std::string& id) const {
  auto it = by_id_.find(id);
  return it == by_id_.end() ? nullptr : &synsets_[it->second];
}

const std::vector<std::string>& OntologyIndex::synsets_of_lemma(const std::string& lemma) const {
  static const std::vector<std::string> kEmpty;
  auto it = by_lemma_.find(lemma);
  return it == by_lemma_.end() ? kEmpty : it->second;
}

std::vector<std::string> OntologyIndex::hypernym_closure(const std::string& id) const {
  std::vector<std::string> out;
  if (find(id) == nullptr) return out;
  std::unordered_set<std::string> seen;
  std::vector<std::string> stack = {id};
  while (!stack.empty()) {
    std::string cur = stack.back();
    stack.pop_back();
    if (!seen.insert(cur).second) continue;
    out.push_back(cur);
    if (const SynsetRecord* rec = find(cur))
      for (const std::string& up : rec->hypernym_ids) stack.push_back(up);
  }
  return out;
}

OntologyIndex load_wordnet_dir(const std::string& dir) {
  const std::string data_path = dir + "/data.noun";
  std::ifstream in(data_path);
  if (!in)
    throw ResourceError("cannot open " + data_path +
                        " (expected a WordNet dictionary directory with data.noun)");
  OntologyIndex index;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty() || line[0] == ' ') continue;  // license header lines
    std::istringstream fields(line);
    SynsetRecord rec;
    std::string offset, lex_filenum, ss_type;
    fields >> offset >> lex_filenum >> ss_type;
    if (!fields || ss_type != "n") continue;
    rec.id = "n" + offset;

    std::string w_cnt_hex;
    fields >> w_cnt_hex;
    int w_cnt = std::stoi(w_cnt_hex, nullptr, 16);
    for (int i = 0; i < w_cnt; ++i) {
      std::string lemma, lex_id;
      fields >> lemma >> lex_id;
      rec.lemmas.push_back(normalize_lemma(lemma));
    }

    int p_cnt = 0;
    fields >> p_cnt;
    for (int i = 0; i < p_cnt; ++i) {
      std::string symbol, target, pos, source_target;
      fields >> symbol >> target >> pos >> source_target;
      if ((symbol == "@" || symbol == "@i") && pos == "n")
        rec.hypernym_ids.push_back("n" + target);
    }
    index.add(std::move(rec));
  }
  if (!index.loaded()) throw ConfigError(data_path + " contains no noun synsets");
  return index;
}

OntologyIndex load_ontology_tsv(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open ontology file " + path);
  OntologyIndex index;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line[0] == '#') continue;
    std::vector<std::string> fields = split_fields(line, '\t');
    if (fields.size() < 2 || fields.size() > 3)
      throw ConfigError(path + ":" + std::to_string(line_no) +
                        ": expected synset_id, lemmas, hypernym_ids");
    SynsetRecord rec;
    rec.id = fields[0];
    for (const std::string& lemma : split_fields(fields[1], '|'))
      if (!lemma.empty()) rec.lemmas.push_back(normalize_lemma(lemma));
    if (fields.size() == 3)
      for (const std::string& up : split_fields(fields[2], '|'))
        if (!up.empty()) rec.hypernym_ids.push_back(up);
    index.add(std::move(rec));
  }
  if (!index.loaded()) throw ConfigError(path + " contains no synsets");
  return index;
}

EmbeddingTable load_embeddings(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ResourceError("cannot open embeddings file " + path);
  EmbeddingTable table;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    std::istringstream fields(line);
    std::string word;
    fields >> word;
    std::vector<double> vec;
    double v;
    while (fields >> v) vec.push_back(v);
    if (vec.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": no vector components");
    if (table.dimension == 0)
      table.dimension = static_cast<int>(vec.size());
    else if (static_cast<int>(vec.size()) != table.dimension)
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected " +
                        std::to_string(table.dimension) + " components, got " +
                        std::to_string(vec.size()));
    table.rows[to_lower(word)] = std::move(vec);
  }
  if (table.rows.empty()) throw ConfigError("embeddings file " + path + " is empty");
  return table;
}

std::vector<int> wordnet_candidates(const ClassLabel& target, const ClassifierVocabulary& vocab,
                                    const OntologyIndex& ontology) {
  if (!ontology.loaded()) throw ConfigError("ontology is not loaded");

  // Token pool: the target's own tokens plus every lemma token reachable
  // through its synsets' hypernym closures.
  std::set<std::string> pool(target.tokens.begin(), target.tokens.end());
  std::set<std::string> target_synsets;
  for (const std::string& id : ontology.synsets_of_lemma(joined_tokens(target))) {
    target_synsets.insert(id);
    for (const std::string& closure_id : ontology.hypernym_closure(id)) {
      const SynsetRecord* rec = ontology.find(closure_id);
      if (rec == nullptr) continue;
      for (const std::string& lemma : rec->lemmas)
        for (const std::string& tok : tokenize_label(lemma).tokens) pool.insert(tok);
    }
  }

  std::vector<int> out;
  for (const VocabEntry& entry : vocab.entries) {
    bool match = false;
    for (const std::string& tok : entry.label.tokens)
      if (pool.count(tok)) {
        match = true;
        break;
      }
    if (!match && !target_synsets.empty()) {
      for (const std::string& id : ontology.hypernym_closure(entry.synset_id))
        if (target_synsets.count(id)) {
          match = true;
          break;
        }
    }
    if (match) out.push_back(entry.class_index);
  }
  return out;
}

namespace {

// Mean of the token embeddings present in the table; empty when none are.
std::vector<double> embed_label(const ClassLabel& label, const EmbeddingTable& table) {
  std::vector<double> mean;
  int found = 0;
  for (const std::string& tok : label.tokens) {
    auto it = table.rows.find(tok);
    if (it == table.rows.end()) continue;
    if (mean.empty()) mean.assign(it->second.size(), 0.0);
    for (std::size_t i = 0; i < it->second.size(); ++i) mean[i] += it->second[i];
    ++found;
  }
  if (found > 0)
    for (double& v : mean) v /= found;
  return mean;
}

double cosine(const std::vector<double>& a, const std::vector<double>& b) {
  double dot = 0.0, na = 0.0, nb = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    dot += a[i] * b[i];
    na += a[i] * a[i];
    nb += b[i] * b[i];
  }
  if (na == 0.0 || nb == 0.0) return -1.0;
  return dot / (std::sqrt(na) * std::sqrt(nb));
}

}  // namespace

std::vector<ScoredLabel> word2vec_candidates(const ClassLabel& target,
                                             const ClassifierVocabulary& vocab,
                                             const EmbeddingTable& table, int k) {
  if (k < 1) throw ConfigError("word2vec candidate count must be at least 1");
  std::vector<double> target_vec = embed_label(target, table);
  if (target_vec.empty())
    throw EmbeddingError("no token of '" + target.text + "' has an embedding");

  std::vector<ScoredLabel> scored;
  for (const VocabEntry& entry : vocab.entries) {
    std::vector<double> vec = embed_label(entry.label, table);
    if (vec.empty()) continue;
    double cos = cosine(target_vec, vec);
    if (cos <= -1.0) continue;
    scored.push_back({entry.class_index, cos});
  }
  sort_scored(scored);
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

std::vector<ScoredLabel> prune_by_classifier(const std::vector<int>& candidates,
                                             const ImageTensor& image,
                                             const ClassifierBackend& classifier, int k,
                                             std::vector<std::string>* warnings) {
  if (k < 1) throw ConfigError("prune count must be at least 1");
  if (candidates.empty()) {
    if (warnings) warnings->push_back("no candidate labels to prune; positive set is empty");
    return {};
  }
  ClassScores scores = classifier.predict_scores(image);
  std::vector<ScoredLabel> scored;
  std::unordered_set<int> seen;
  for (int index : candidates) {
    if (index < 0 || index >= classifier.num_classes())
      throw std::out_of_range("candidate class index " + std::to_string(index) +
                              " outside vocabulary");
    if (!seen.insert(index).second) continue;
    scored.push_back({index, scores.probabilities[static_cast<std::size_t>(index)]});
  }
  sort_scored(scored);
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

std::vector<ScoredLabel> select_negative_labels(const ImageTensor& image,
                                                const ClassifierBackend& classifier,
                                                const std::vector<int>& positives, int k,
                                                std::vector<std::string>* warnings) {
  if (k < 0) throw ConfigError("negative label count must be non-negative");
  for (int index : positives) {
    if (index < 0 || index >= classifier.num_classes())
      throw std::out_of_range("positive label index " + std::to_string(index) +
                              " outside the classifier's " +
                              std::to_string(classifier.num_classes()) + " classes");
  }
  if (k == 0) return {};
  std::unordered_set<int> excluded(positives.begin(), positives.end());
  ClassScores scores = classifier.predict_scores(image);
  std::vector<ScoredLabel> scored;
  for (int index = 0; index < classifier.num_classes(); ++index) {
    if (excluded.count(index)) continue;
    scored.push_back({index, scores.probabilities[static_cast<std::size_t>(index)]});
  }
  if (static_cast<int>(scored.size()) < k && warnings)
    warnings->push_back("requested " + std::to_string(k) + " negative labels but only " +
                        std::to_string(scored.size()) + " classes remain");
  sort_scored(scored);
  if (static_cast<int>(scored.size()) > k) scored.resize(static_cast<std::size_t>(k));
  return scored;
}

MapperKind mapper_from_name(const std::string& name) {
  if (name == "wordnet") return MapperKind::kWordNet;
  if (name == "word2vec") return MapperKind::kWord2Vec;
  throw ConfigError("unknown mapper '" + name + "' (expected wordnet or word2vec)");
}

ProxyLabelSet build_proxy_set(const std::string& target_text, const ImageTensor& image,
                              MapperKind mapper, const ClassifierVocabulary& vocab,
                              const OntologyIndex& ontology, const EmbeddingTable& table,
                              const ClassifierBackend& classifier, int k) {
  if (k < 1) throw ConfigError("proxy label count must be at least 1");
  if (vocab.size() != classifier.num_classes())
    throw ConfigError("vocabulary size " + std::to_string(vocab.size()) +
                      " does not match classifier with " +
                      std::to_string(classifier.num_classes()) + " classes");

  ProxyLabelSet set;
  set.target = tokenize_label(target_text);
  set.k_max = k;

  std::vector<int> candidates;
  if (mapper == MapperKind::kWordNet) {
    candidates = wordnet_candidates(set.target, vocab, ontology);
  } else {
    for (const ScoredLabel& s : word2vec_candidates(set.target, vocab, table, k))
      candidates.push_back(s.class_index);
  }

  set.positives = prune_by_classifier(candidates, image, classifier, k, &set.warnings);
  std::vector<int> positive_indices;
  for (const ScoredLabel& s : set.positives) positive_indices.push_back(s.class_index);
  set.negatives = select_negative_labels(image, classifier, positive_indices, k, &set.warnings);
  return set;
}

}  // namespace lexseg
