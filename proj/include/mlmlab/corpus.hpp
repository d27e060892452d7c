#pragma once
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "mlmlab/bpe.hpp"
#include "mlmlab/bytes.hpp"
#include "mlmlab/rng.hpp"

namespace mlmlab {

struct Document {
  std::string text;
};

// one document per non-blank line, in file order
inline std::vector<Document> load_corpus(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open corpus file: " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  std::string content = buf.str();
  utf8_to_codepoints(content);  // validates, throws with byte offset
  std::vector<Document> docs;
  std::size_t start = 0;
  while (start <= content.size()) {
    std::size_t end = content.find('\n', start);
    if (end == std::string::npos) end = content.size();
    std::string line = content.substr(start, end - start);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::size_t a = line.find_first_not_of(" \t");
    if (a != std::string::npos) {
      std::size_t b = line.find_last_not_of(" \t");
      docs.push_back({line.substr(a, b - a + 1)});
    }
    if (end == content.size()) break;
    start = end + 1;
  }
  return docs;
}

struct Batch {
  int seq_len = 0;
  // row-major [batch x seq_len]
  std::vector<std::vector<int>> token_ids;
  std::vector<std::vector<std::uint8_t>> attention;
};

// Concatenates all documents into one token stream with CLS/SEP boundaries,
// chunks to seq_len, and groups chunks into batches. The final partial chunk
// is padded. Pure function of its arguments.
inline std::vector<Batch> make_batches(const std::vector<Document>& docs, const Vocab& vocab,
                                       int seq_len, int batch_size, std::uint64_t /*seed*/ = 0) {
  if (seq_len < 2) throw std::invalid_argument("make_batches: seq_len must be >= 2");
  if (batch_size < 1) throw std::invalid_argument("make_batches: batch_size must be >= 1");
  if (docs.empty()) throw std::invalid_argument("make_batches: empty corpus");

  std::vector<int> stream;
  for (const auto& d : docs) {
    stream.push_back(SpecialTokens::kCls);
    auto ids = vocab.encode(d.text);
    stream.insert(stream.end(), ids.begin(), ids.end());
    stream.push_back(SpecialTokens::kSep);
  }

  std::vector<std::vector<int>> rows;
  for (std::size_t off = 0; off < stream.size(); off += static_cast<std::size_t>(seq_len)) {
    std::size_t n = std::min<std::size_t>(static_cast<std::size_t>(seq_len), stream.size() - off);
    rows.emplace_back(stream.begin() + static_cast<std::ptrdiff_t>(off),
                      stream.begin() + static_cast<std::ptrdiff_t>(off + n));
  }

  std::vector<Batch> batches;
  for (std::size_t i = 0; i < rows.size(); i += static_cast<std::size_t>(batch_size)) {
    Batch b;
    b.seq_len = seq_len;
    for (std::size_t j = i; j < std::min(rows.size(), i + static_cast<std::size_t>(batch_size));
         ++j) {
      std::vector<std::uint8_t> att(static_cast<std::size_t>(seq_len), 0);
      for (std::size_t k = 0; k < rows[j].size(); ++k) att[k] = 1;
      rows[j].resize(static_cast<std::size_t>(seq_len), SpecialTokens::kPad);
      b.token_ids.push_back(rows[j]);
      b.attention.push_back(std::move(att));
    }
    batches.push_back(std::move(b));
  }
  return batches;
}

// ---------------------------------------------------------------------------
// Synthetic desk-scale corpora and probe tasks.
//
// The word inventory is fixed (independent of the caller's seed): a pool of
// short function words shared by every topic, and per-topic content words.
// Content words share their first two characters across topics, so objectives
// that only see short prefixes get little topic signal, while whole-token
// identity is fully informative.
// ---------------------------------------------------------------------------

struct WordInventory {
  std::vector<std::string> common;                  // topic-neutral words
  std::vector<std::vector<std::string>> by_topic;   // content words per topic
};

inline const WordInventory& word_inventory() {
  static const WordInventory inv = [] {
    WordInventory w;
    // lengths 1..5 among the common pool
    w.common = {"a",  "i",  "o",   "an",  "to",  "of",  "in",   "it",  "the", "and",
                "but", "for", "not", "with", "that", "this", "from", "have", "was", "are"};
    const int kTopics = 8;
    const char* prefixes[] = {"ka", "lo", "mi", "ta", "re", "su", "ne", "do",
                              "va", "pe", "gu", "hi"};
    const char* vowels = "aeiou";
    const char* cons = "bcdfgklmnprstvz";
    Rng rng(0x6d6c6d6c6162ULL);  // fixed: the inventory is part of the artifact
    w.by_topic.resize(kTopics);
    for (int t = 0; t < kTopics; ++t) {
      for (int k = 0; k < 30; ++k) {
        // word = shared prefix + topic-specific tail, total length 4..12
        std::string word = prefixes[rng.next_below(12)];
        int tail = 2 + static_cast<int>(rng.next_below(9));
        for (int c = 0; c < tail; ++c) {
          bool vowel = (c % 2) == 1;
          word.push_back(vowel ? vowels[rng.next_below(5)] : cons[rng.next_below(15)]);
        }
        w.by_topic[static_cast<std::size_t>(t)].push_back(word);
      }
    }
    return w;
  }();
  return inv;
}

inline int synthetic_num_topics() {
  return static_cast<int>(word_inventory().by_topic.size());
}

namespace detail {
// zipf-ish skew inside a pool: earlier words more likely
inline const std::string& pick_skewed(const std::vector<std::string>& pool, Rng& rng) {
  double u = rng.next_double();
  auto idx = static_cast<std::size_t>(u * u * static_cast<double>(pool.size()));
  if (idx >= pool.size()) idx = pool.size() - 1;
  return pool[idx];
}

inline std::string synth_document(int topic, Rng& rng, int min_words = 10, int max_words = 30) {
  const auto& inv = word_inventory();
  int n = min_words + static_cast<int>(rng.next_below(
                          static_cast<std::uint64_t>(max_words - min_words + 1)));
  std::string text;
  for (int i = 0; i < n; ++i) {
    const auto& pool = rng.next_double() < 0.3
                           ? inv.common
                           : inv.by_topic[static_cast<std::size_t>(topic)];
    if (!text.empty()) text.push_back(' ');
    text += pick_skewed(pool, rng);
  }
  return text;
}
}  // namespace detail

// Deterministic per seed; topics drawn uniformly per document.
inline std::vector<Document> gen_synthetic_corpus(int size, std::uint64_t seed) {
  if (size < 1) throw std::invalid_argument("gen_synthetic_corpus: size must be >= 1");
  Rng rng(seed);
  std::vector<Document> docs;
  docs.reserve(static_cast<std::size_t>(size));
  for (int i = 0; i < size; ++i) {
    int topic = static_cast<int>(rng.next_below(
        static_cast<std::uint64_t>(synthetic_num_topics())));
    docs.push_back({detail::synth_document(topic, rng)});
  }
  return docs;
}

enum class TaskKind { kClassification, kSpan };

struct SyntheticTaskSpec {
  TaskKind kind = TaskKind::kClassification;
  int num_labels = 2;
  std::uint64_t seed = 0;
  int size = 100;
};

struct ClassificationSample {
  std::string text;
  int label = 0;
};

struct SpanSample {
  std::string passage;
  std::string question;
  int start_token = 0;  // inclusive, whitespace-word indices
  int end_token = 0;
};

struct ProbeTask {
  TaskKind kind = TaskKind::kClassification;
  int num_labels = 0;
  std::vector<ClassificationSample> classification;
  std::vector<SpanSample> span;
};

// Classification: label = topic id of the document's content words.
// Span: the question is a content word; the gold span is its first occurrence
// in the passage (word indices).
inline ProbeTask gen_probe_task(const SyntheticTaskSpec& spec) {
  if (spec.size < 1) throw std::invalid_argument("gen_probe_task: size must be >= 1");
  const auto& inv = word_inventory();
  if (spec.kind == TaskKind::kClassification &&
      (spec.num_labels < 2 || spec.num_labels > synthetic_num_topics()))
    throw std::invalid_argument("gen_probe_task: num_labels must be in [2, " +
                                std::to_string(synthetic_num_topics()) + "]");
  Rng rng(spec.seed);
  ProbeTask task;
  task.kind = spec.kind;
  if (spec.kind == TaskKind::kClassification) {
    task.num_labels = spec.num_labels;
    for (int i = 0; i < spec.size; ++i) {
      int topic = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(spec.num_labels)));
      task.classification.push_back({detail::synth_document(topic, rng, 8, 20), topic});
    }
  } else {
    task.num_labels = 0;
    for (int i = 0; i < spec.size; ++i) {
      int topic = static_cast<int>(
          rng.next_below(static_cast<std::uint64_t>(synthetic_num_topics())));
      std::string passage = detail::synth_document(topic, rng, 8, 20);
      // split into words, inject the answer word at a random position
      std::vector<std::string> words;
      {
        std::istringstream in(passage);
        std::string word;
        while (in >> word) words.push_back(word);
      }
      const auto& pool = inv.by_topic[static_cast<std::size_t>(topic)];
      std::string answer = pool[rng.next_below(pool.size())];
      auto pos = rng.next_below(words.size() + 1);
      words.insert(words.begin() + static_cast<std::ptrdiff_t>(pos), answer);
      // gold span = first occurrence of the answer word
      int gold = -1;
      for (std::size_t k = 0; k < words.size(); ++k)
        if (words[k] == answer) {
          gold = static_cast<int>(k);
          break;
        }
      std::string joined;
      for (std::size_t k = 0; k < words.size(); ++k) {
        if (k) joined.push_back(' ');
        joined += words[k];
      }
      task.span.push_back({joined, answer, gold, gold});
    }
  }
  return task;
}

// ---- plug-in loaders for external task files ------------------------------

// tab-separated: text<TAB>label_id
inline ProbeTask load_classification_tsv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open task file: " + path.string());
  ProbeTask task;
  task.kind = TaskKind::kClassification;
  std::string line;
  int max_label = -1;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    auto tab = line.rfind('\t');
    if (tab == std::string::npos)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": missing tab");
    int label = std::stoi(line.substr(tab + 1));
    task.classification.push_back({line.substr(0, tab), label});
    max_label = std::max(max_label, label);
  }
  task.num_labels = max_label + 1;
  return task;
}

// tab-separated: passage<TAB>question<TAB>start_token<TAB>end_token
inline ProbeTask load_span_tsv(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open task file: " + path.string());
  ProbeTask task;
  task.kind = TaskKind::kSpan;
  std::string line;
  long lineno = 0;
  while (std::getline(f, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> fields;
    std::size_t start = 0;
    while (true) {
      auto tab = line.find('\t', start);
      if (tab == std::string::npos) {
        fields.push_back(line.substr(start));
        break;
      }
      fields.push_back(line.substr(start, tab - start));
      start = tab + 1;
    }
    if (fields.size() != 4)
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) +
                               ": expected 4 tab-separated fields");
    task.span.push_back({fields[0], fields[1], std::stoi(fields[2]), std::stoi(fields[3])});
  }
  return task;
}

}  // namespace mlmlab
