#include <doctest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "mlmlab/bpe.hpp"
#include "mlmlab/corpus.hpp"
#include "mlmlab/rng.hpp"

using namespace mlmlab;
namespace fs = std::filesystem;

namespace {

// independent pair-counting oracle: replays the greedy merge procedure with
// separate bookkeeping and returns the merge list it would produce
std::vector<std::pair<std::string, std::string>> oracle_merges(
    const std::vector<Document>& docs, int num_merges) {
  Vocab base = Vocab::byte_base();
  std::map<std::vector<std::string>, long> words;
  for (const auto& d : docs)
    for (auto& w : base.pretokenize(d.text)) words[w] += 1;
  std::vector<std::pair<std::string, std::string>> merges;
  for (int m = 0; m < num_merges; ++m) {
    std::map<std::pair<std::string, std::string>, long> counts;
    for (const auto& [syms, freq] : words)
      for (std::size_t i = 0; i + 1 < syms.size(); ++i) counts[{syms[i], syms[i + 1]}] += freq;
    std::pair<std::string, std::string> best;
    long best_count = 0;
    for (const auto& [p, c] : counts)
      if (c > best_count) {
        best_count = c;
        best = p;
      }
    if (best_count < 2) break;
    merges.push_back(best);
    std::map<std::vector<std::string>, long> next;
    for (const auto& [syms, freq] : words) {
      std::vector<std::string> out;
      std::size_t i = 0;
      while (i < syms.size()) {
        if (i + 1 < syms.size() && syms[i] == best.first && syms[i + 1] == best.second) {
          out.push_back(syms[i] + syms[i + 1]);
          i += 2;
        } else {
          out.push_back(syms[i++]);
        }
      }
      next[std::move(out)] += freq;
    }
    words = std::move(next);
  }
  return merges;
}

fs::path temp_dir(const char* tag) {
  auto p = fs::temp_directory_path() / (std::string("mlmlab_test_") + tag);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

}  // namespace

TEST_CASE("byte base vocabulary has specials plus all bytes") {
  Vocab v = Vocab::byte_base();
  CHECK(v.size() == 261);
  CHECK(v.num_special() == 5);
  CHECK(v.token(SpecialTokens::kMask) == "<mask>");
  CHECK(v.is_special(SpecialTokens::kPad));
  CHECK(!v.is_special(5));
}

TEST_CASE("training matches the brute-force pair-counting oracle") {
  std::vector<Document> docs = {{"the cat sat on the mat"},
                                {"the cat ran to the cart"},
                                {"a cat and a cart and a mat"}};
  Vocab trained = train_bpe(docs, 261 + 20);
  auto expected = oracle_merges(docs, 20);
  REQUIRE(trained.merges().size() == expected.size());
  for (std::size_t i = 0; i < expected.size(); ++i) {
    CHECK(trained.merges()[i].first == expected[i].first);
    CHECK(trained.merges()[i].second == expected[i].second);
  }
}

TEST_CASE("merging stops when no pair repeats") {
  std::vector<Document> docs = {{"abcdefg"}};  // every pair occurs once
  Vocab v = train_bpe(docs, 1000);
  CHECK(v.merges().empty());
}

TEST_CASE("frequency ties break lexicographically") {
  // "zz" and "aa" both occur twice and nothing else repeats; "aa" must win
  std::vector<Document> docs = {{"aa zz aa zz"}};
  Vocab v = train_bpe(docs, 262);
  REQUIRE(v.merges().size() == 1);
  // pretokenized words start with the space marker, so candidate pairs are
  // (Ġ,a),(a,a),(Ġ,z),(z,z) each at count 2; Ġ sorts above ascii letters
  CHECK(v.merges()[0].first == "a");
  CHECK(v.merges()[0].second == "a");
}

TEST_CASE("encode/decode round-trips arbitrary UTF-8 text") {
  std::vector<Document> docs = {{"hello world"}, {"héllo wörld"}, {"byte pair encoding"}};
  Vocab v = train_bpe(docs, 300);
  for (const std::string text :
       {std::string("hello world"), std::string("completely unseen tökens 🙂"),
        std::string("  double  spaces  "), std::string("")}) {
    CHECK(v.decode(v.encode(text)) == text);
  }
}

TEST_CASE("larger vocabularies never lengthen an encoding") {
  std::vector<Document> docs = {{"the cat sat on the mat"}, {"the cat ran to the cart"}};
  Vocab small = train_bpe(docs, 270);
  Vocab large = train_bpe(docs, 300);
  std::string text = "the cat sat";
  CHECK(large.encode(text).size() <= small.encode(text).size());
}

TEST_CASE("training is deterministic") {
  std::vector<Document> docs = {{"some repeated words repeated here"}, {"words repeated again"}};
  Vocab a = train_bpe(docs, 290);
  Vocab b = train_bpe(docs, 290);
  REQUIRE(a.size() == b.size());
  for (int id = 0; id < a.size(); ++id) CHECK(a.token(id) == b.token(id));
}

TEST_CASE("save/load round-trips the vocabulary") {
  std::vector<Document> docs = {{"persist me please persist"}};
  Vocab v = train_bpe(docs, 280);
  auto dir = temp_dir("vocab");
  v.save(dir);
  Vocab loaded = Vocab::load(dir);
  REQUIRE(loaded.size() == v.size());
  for (int id = 0; id < v.size(); ++id) {
    CHECK(loaded.token(id) == v.token(id));
    CHECK(loaded.is_special(id) == v.is_special(id));
  }
  CHECK(loaded.merges() == v.merges());
  std::string text = "persist me";
  CHECK(loaded.encode(text) == v.encode(text));
  fs::remove_all(dir);
}

TEST_CASE("external vocabularies load from all three formats") {
  auto dir = temp_dir("extvocab");

  {
    std::ofstream f(dir / "lines.txt");
    f << "<s>\nfoo\nbar\n";
  }
  Vocab lines = load_external_vocab(dir / "lines.txt");
  CHECK(lines.size() == 3);
  CHECK(lines.token(1) == "foo");
  CHECK(lines.is_special(0));
  CHECK(!lines.is_special(1));

  {
    std::ofstream f(dir / "pairs.tsv");
    f << "bar\t1\nfoo\t0\n<mask>\t2\n";  // out of order but dense
  }
  Vocab pairs = load_external_vocab(dir / "pairs.tsv");
  CHECK(pairs.size() == 3);
  CHECK(pairs.token(0) == "foo");
  CHECK(pairs.token(2) == "<mask>");
  CHECK(pairs.is_special(2));

  {
    std::ofstream f(dir / "vocab.json");
    f << R"({"foo": 0, "bar": 1, "<pad>": 2})";
  }
  Vocab json = load_external_vocab(dir / "vocab.json");
  CHECK(json.size() == 3);
  CHECK(json.token(1) == "bar");
  CHECK(json.is_special(2));

  {
    std::ofstream f(dir / "dup.txt");
    f << "foo\nfoo\n";
  }
  CHECK_THROWS_WITH_AS(load_external_vocab(dir / "dup.txt"), doctest::Contains("foo"),
                       std::invalid_argument);

  {
    std::ofstream f(dir / "sparse.tsv");
    f << "foo\t0\nbar\t5\n";
  }
  CHECK_THROWS_AS(load_external_vocab(dir / "sparse.tsv"), std::runtime_error);
  fs::remove_all(dir);
}
