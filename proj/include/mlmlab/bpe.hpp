#pragma once
#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "mlmlab/bytes.hpp"

namespace mlmlab {

struct SpecialTokens {
  static constexpr int kPad = 0;
  static constexpr int kMask = 1;
  static constexpr int kCls = 2;
  static constexpr int kSep = 3;
  static constexpr int kUnk = 4;
  static constexpr int kCount = 5;

  static const std::vector<std::string>& surfaces() {
    static const std::vector<std::string> s = {"<pad>", "<mask>", "<cls>", "<sep>", "<unk>"};
    return s;
  }
};

// Byte-level BPE vocabulary. Ids are dense: specials first, then the 256
// byte tokens in byte order, then merged tokens in merge order.
class Vocab {
public:
  Vocab() = default;

  static Vocab byte_base() {
    Vocab v;
    for (const auto& s : SpecialTokens::surfaces()) v.push_token(s, /*special=*/true);
    const auto& m = byte_unicode_map();
    for (int b = 0; b < 256; ++b) v.push_token(codepoint_to_utf8(m.byte_to_cp[b]));
    return v;
  }

  int size() const { return static_cast<int>(id_to_token_.size()); }
  const std::string& token(int id) const { return id_to_token_.at(static_cast<std::size_t>(id)); }
  const std::vector<std::string>& tokens() const { return id_to_token_; }
  const std::vector<std::pair<std::string, std::string>>& merges() const { return merges_; }

  int find(const std::string& surface) const {
    auto it = token_to_id_.find(surface);
    return it == token_to_id_.end() ? -1 : it->second;
  }

  bool is_special(int id) const { return special_.at(static_cast<std::size_t>(id)); }
  int num_special() const {
    int n = 0;
    for (bool b : special_) n += b ? 1 : 0;
    return n;
  }

  void push_token(const std::string& surface, bool special = false) {
    if (token_to_id_.count(surface))
      throw std::invalid_argument("duplicate token: " + surface);
    token_to_id_.emplace(surface, size());
    id_to_token_.push_back(surface);
    special_.push_back(special);
  }

  void push_merge(const std::string& left, const std::string& right) {
    merges_.emplace_back(left, right);
    push_token(left + right);
  }

  // ---- encode / decode -------------------------------------------------

  // Pre-tokenizes into space-delimited chunks over the rendered surface so
  // merges never cross the Ġ boundary, then applies merges in learned order.
  std::vector<int> encode(const std::string& text) const {
    std::vector<int> out;
    for (const auto& word : pretokenize(text)) {
      auto pieces = apply_merges(word);
      for (const auto& p : pieces) {
        int id = find(p);
        if (id < 0) id = SpecialTokens::kUnk;  // unreachable for byte-complete vocabs
        out.push_back(id);
      }
    }
    return out;
  }

  std::string decode(const std::vector<int>& ids) const {
    std::string surface;
    for (int id : ids) {
      if (id < 0 || id >= size())
        throw std::out_of_range("token id out of range: " + std::to_string(id));
      if (is_special(id)) continue;
      surface += token(id);
    }
    return surface_to_bytes(surface);
  }

  // splits rendered text into word chunks; each Ġ starts a new chunk
  std::vector<std::vector<std::string>> pretokenize(const std::string& text) const {
    std::string surface = bytes_to_surface(text);
    std::vector<std::vector<std::string>> words;
    std::vector<std::string> cur;
    for (std::uint32_t cp : utf8_to_codepoints(surface)) {
      if (cp == kSpaceMarker && !cur.empty()) {
        words.push_back(std::move(cur));
        cur.clear();
      }
      cur.push_back(codepoint_to_utf8(cp));
    }
    if (!cur.empty()) words.push_back(std::move(cur));
    return words;
  }

  std::vector<std::string> apply_merges(std::vector<std::string> symbols) const {
    build_merge_rank();
    while (symbols.size() > 1) {
      int best_rank = -1;
      std::size_t best_pos = 0;
      for (std::size_t i = 0; i + 1 < symbols.size(); ++i) {
        auto it = merge_rank_.find(symbols[i] + "\x01" + symbols[i + 1]);
        if (it != merge_rank_.end() && (best_rank < 0 || it->second < best_rank)) {
          best_rank = it->second;
          best_pos = i;
        }
      }
      if (best_rank < 0) break;
      symbols[best_pos] += symbols[best_pos + 1];
      symbols.erase(symbols.begin() + static_cast<std::ptrdiff_t>(best_pos) + 1);
    }
    return symbols;
  }

  // ---- persistence -----------------------------------------------------

  void save(const std::filesystem::path& dir) const {
    std::filesystem::create_directories(dir);
    std::ofstream vf(dir / "vocab.txt", std::ios::binary);
    for (const auto& t : id_to_token_) vf << t << "\n";
    std::ofstream mf(dir / "merges.txt", std::ios::binary);
    for (const auto& [l, r] : merges_) mf << l << " " << r << "\n";
  }

  static Vocab load(const std::filesystem::path& dir) {
    std::ifstream vf(dir / "vocab.txt", std::ios::binary);
    if (!vf) throw std::runtime_error("cannot open " + (dir / "vocab.txt").string());
    Vocab v;
    std::string line;
    while (std::getline(vf, line)) {
      if (!line.empty() && line.back() == '\r') line.pop_back();
      v.push_token(line, looks_special(line));
    }
    std::ifstream mf(dir / "merges.txt", std::ios::binary);
    if (mf) {
      while (std::getline(mf, line)) {
        if (!line.empty() && line.back() == '\r') line.pop_back();
        if (line.empty()) continue;
        auto sp = line.find(' ');
        if (sp == std::string::npos) throw std::runtime_error("malformed merges line: " + line);
        v.merges_.emplace_back(line.substr(0, sp), line.substr(sp + 1));
      }
    }
    return v;
  }

private:
  void build_merge_rank() const {
    if (merge_rank_.size() == merges_.size()) return;
    merge_rank_.clear();
    for (std::size_t i = 0; i < merges_.size(); ++i)
      merge_rank_.emplace(merges_[i].first + "\x01" + merges_[i].second, static_cast<int>(i));
  }

  // angle-bracketed surfaces denote control tokens in external listings too
  static bool looks_special(const std::string& t) {
    return t.size() >= 3 && t.front() == '<' && t.back() == '>';
  }

  std::vector<std::string> id_to_token_;
  std::unordered_map<std::string, int> token_to_id_;
  std::vector<std::pair<std::string, std::string>> merges_;
  std::vector<bool> special_;
  mutable std::unordered_map<std::string, int> merge_rank_;
};

// Greedy highest-frequency pair merging. Ties break by lexicographic order
// of the (left, right) pair; merging stops when no pair occurs at least
// twice or target_size is reached.
template <class DocRange>
Vocab train_bpe(const DocRange& docs, int target_size) {
  Vocab vocab = Vocab::byte_base();
  if (target_size < vocab.size())
    throw std::invalid_argument("target_size must be >= " + std::to_string(vocab.size()));

  // word -> frequency, each word a symbol sequence
  std::map<std::vector<std::string>, std::int64_t> words;
  bool any = false;
  for (const auto& doc : docs) {
    any = true;
    for (auto& w : vocab.pretokenize(doc.text)) words[w] += 1;
  }
  if (!any) throw std::invalid_argument("train_bpe: empty corpus");

  while (vocab.size() < target_size) {
    std::map<std::pair<std::string, std::string>, std::int64_t> pair_counts;
    for (const auto& [syms, freq] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i)
        pair_counts[{syms[i], syms[i + 1]}] += freq;

    std::pair<std::string, std::string> best;
    std::int64_t best_count = 0;
    for (const auto& [pair, count] : pair_counts) {
      if (count > best_count) {  // std::map iteration order gives lexicographic tie-break
        best_count = count;
        best = pair;
      }
    }
    if (best_count < 2) break;

    vocab.push_merge(best.first, best.second);
    std::map<std::vector<std::string>, std::int64_t> next;
    for (const auto& [syms, freq] : words) {
      std::vector<std::string> merged;
      merged.reserve(syms.size());
      std::size_t i = 0;
      while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          merged.push_back(syms[i] + syms[i + 1]);
          i += 2;
        } else {
          merged.push_back(syms[i]);
          i += 1;
        }
      }
      next[std::move(merged)] += freq;
    }
    words = std::move(next);
  }
  return vocab;
}

namespace detail {
inline bool looks_special_surface(const std::string& t) {
  return t.size() >= 3 && t.front() == '<' && t.back() == '>';
}

inline Vocab vocab_from_pairs(std::vector<std::pair<std::string, long>> pairs,
                              const std::string& origin) {
  std::sort(pairs.begin(), pairs.end(),
            [](const auto& a, const auto& b) { return a.second < b.second; });
  Vocab v;
  long expect = 0;
  for (auto& [tok, id] : pairs) {
    if (id != expect)
      throw std::runtime_error(origin + ": ids not dense at id " + std::to_string(id));
    ++expect;
    v.push_token(tok, looks_special_surface(tok));
  }
  return v;
}
}  // namespace detail

// Loads an external vocabulary for label-space statistics. Accepts:
//  - token-per-line text (line number = id)
//  - "token<TAB>id" key-value lines
//  - a JSON object {token: id} when the file starts with '{'
// Angle-bracketed surfaces (e.g. <s>, <mask>) are treated as special tokens.
inline Vocab load_external_vocab(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot open " + path.string());
  std::stringstream buf;
  buf << f.rdbuf();
  std::string content = buf.str();
  std::size_t first = content.find_first_not_of(" \t\r\n");
  if (first != std::string::npos && content[first] == '{') {
    auto j = nlohmann::json::parse(content);
    std::vector<std::pair<std::string, long>> pairs;
    for (auto it = j.begin(); it != j.end(); ++it)
      pairs.emplace_back(it.key(), it.value().get<long>());
    return detail::vocab_from_pairs(std::move(pairs), path.string());
  }
  std::istringstream in(content);
  std::string line;
  std::vector<std::pair<std::string, long>> pairs;
  bool keyed = false;
  long lineno = 0;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    auto tab = line.find('\t');
    if (tab != std::string::npos) {
      keyed = true;
      pairs.emplace_back(line.substr(0, tab), std::stol(line.substr(tab + 1)));
    } else {
      pairs.emplace_back(line, lineno);
    }
    ++lineno;
  }
  if (!keyed) {
    Vocab v;
    for (auto& [tok, id] : pairs) v.push_token(tok, detail::looks_special_surface(tok));
    return v;
  }
  return detail::vocab_from_pairs(std::move(pairs), path.string());
}

}  // namespace mlmlab
