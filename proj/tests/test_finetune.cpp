#include <doctest.h>

#include <string>
#include <vector>

#include "mlmlab/bpe.hpp"
#include "mlmlab/corpus.hpp"
#include "mlmlab/finetune.hpp"

using namespace mlmlab;

namespace {

Checkpoint tiny_checkpoint(const Vocab& vocab, std::uint64_t seed) {
  EncoderConfig enc;
  enc.num_layers = 1;
  enc.num_heads = 2;
  enc.hidden_dim = 16;
  enc.ffn_dim = 32;
  enc.max_seq_len = 32;
  enc.vocab_size = vocab.size();
  HeadSpec head = HeadSpec::linear_head(29);
  Checkpoint ck;
  ck.config = enc;
  ck.head = head;
  ck.objective = "firstchar29";
  ck.params = init_params<float>(enc, head, seed);
  return ck;
}

}  // namespace

TEST_CASE("classification encoding wraps text in CLS/SEP and pads") {
  Vocab vocab = Vocab::byte_base();
  auto s = detail::encode_classification("ab", 1, vocab, 8);
  CHECK(s.ids.size() == 8);
  CHECK(s.ids[0] == SpecialTokens::kCls);
  CHECK(s.ids[3] == SpecialTokens::kSep);
  CHECK(s.ids[7] == SpecialTokens::kPad);
  CHECK(s.attention == std::vector<std::uint8_t>{1, 1, 1, 1, 0, 0, 0, 0});
  CHECK(s.label == 1);

  // over-long text truncates before the final SEP
  auto t = detail::encode_classification("abcdefghij", 0, vocab, 6);
  CHECK(t.ids.size() == 6);
  CHECK(t.ids[5] == SpecialTokens::kSep);
}

TEST_CASE("span encoding maps word-index gold onto token spans exactly") {
  Vocab vocab = Vocab::byte_base();
  SpanSample sample{"aa bb cc", "bb", 1, 1};
  auto s = detail::encode_span(sample, vocab, 20);
  // layout: CLS b b SEP | aa(2) Ġbb(3) Ġcc(3) | SEP
  CHECK(s.passage_begin == 4);
  CHECK(s.gold.start == 6);
  CHECK(s.gold.end == 8);
  CHECK(s.passage_end == 11);
  // decode check: the gold tokens really spell " bb"
  std::vector<int> gold_ids(s.ids.begin() + s.gold.start, s.ids.begin() + s.gold.end + 1);
  CHECK(vocab.decode(gold_ids) == " bb");

  // gold truncated away degrades to the CLS position
  SpanSample far{"aa bb cc dd ee ff gg hh", "hh", 7, 7};
  auto t = detail::encode_span(far, vocab, 12);
  CHECK(t.gold.start == 0);
  CHECK(t.gold.end == 0);
}

TEST_CASE("finetune learning rate warms up then decays") {
  FinetuneConfig cfg;
  cfg.lr = 1e-3;
  cfg.warmup_frac = 0.1;
  auto total = 100;
  CHECK(detail::finetune_lr(1, total, cfg) < detail::finetune_lr(10, total, cfg));
  CHECK(detail::finetune_lr(10, total, cfg) == doctest::Approx(1e-3));
  CHECK(detail::finetune_lr(50, total, cfg) > detail::finetune_lr(90, total, cfg));
}

TEST_CASE("classifier finetuning beats chance on a separable probe") {
  auto docs = gen_synthetic_corpus(40, 2);
  Vocab vocab = train_bpe(docs, 350);
  Checkpoint ck = tiny_checkpoint(vocab, 5);

  SyntheticTaskSpec spec;
  spec.kind = TaskKind::kClassification;
  spec.num_labels = 2;
  spec.size = 80;
  spec.seed = 9;
  auto task = gen_probe_task(spec);

  FinetuneConfig cfg;
  cfg.max_epochs = 6;
  cfg.lr = 5e-4;
  cfg.max_seq_len = 32;
  cfg.seed = 1;
  auto res = finetune_classifier(ck, task, vocab, cfg);
  CHECK(res.dev_metric > 0.6);
  CHECK(res.report.values.count("accuracy") == 1);
  CHECK(res.report.values.count("matthews") == 1);  // binary task

  // determinism: identical inputs give identical metrics
  auto res2 = finetune_classifier(ck, task, vocab, cfg);
  CHECK(res2.dev_metric == res.dev_metric);
}

TEST_CASE("span finetuning reports all three metrics and runs end to end") {
  auto docs = gen_synthetic_corpus(30, 4);
  Vocab vocab = train_bpe(docs, 350);
  Checkpoint ck = tiny_checkpoint(vocab, 6);

  SyntheticTaskSpec spec;
  spec.kind = TaskKind::kSpan;
  spec.size = 40;
  spec.seed = 10;
  auto task = gen_probe_task(spec);

  FinetuneConfig cfg;
  cfg.max_epochs = 2;
  cfg.max_seq_len = 32;
  cfg.seed = 2;
  auto res = finetune_span(ck, task, vocab, cfg);
  for (const char* metric : {"span_f1_with_miss", "span_f1_without_miss", "miss_rate"})
    CHECK(res.report.values.count(metric) == 1);
  double f1 = res.report.aggregate("span_f1_with_miss").mean;
  CHECK(f1 >= 0.0);
  CHECK(f1 <= 1.0);
}

TEST_CASE("multi-seed runs aggregate per-metric values") {
  auto docs = gen_synthetic_corpus(20, 8);
  Vocab vocab = train_bpe(docs, 320);
  Checkpoint ck = tiny_checkpoint(vocab, 7);
  SyntheticTaskSpec spec;
  spec.kind = TaskKind::kClassification;
  spec.num_labels = 2;
  spec.size = 30;
  spec.seed = 3;
  auto task = gen_probe_task(spec);
  FinetuneConfig cfg;
  cfg.max_epochs = 1;
  cfg.max_seq_len = 32;
  auto report = run_finetune_seeds(ck, task, vocab, cfg, {1, 2, 3});
  CHECK(report.seed_count() == 3);
  auto ms = report.aggregate("accuracy");
  CHECK(ms.mean >= 0.0);
  CHECK(ms.mean <= 1.0);
}

TEST_CASE("task/kind mismatches are rejected") {
  Vocab vocab = Vocab::byte_base();
  Checkpoint ck = tiny_checkpoint(vocab, 8);
  ProbeTask task;
  task.kind = TaskKind::kSpan;
  task.span.push_back({"a b", "a", 0, 0});
  FinetuneConfig cfg;
  CHECK_THROWS_AS(finetune_classifier(ck, task, vocab, cfg), std::invalid_argument);
  ProbeTask cls;
  cls.kind = TaskKind::kClassification;
  cls.num_labels = 2;
  cls.classification.push_back({"x", 0});
  CHECK_THROWS_AS(finetune_span(ck, cls, vocab, cfg), std::invalid_argument);
}
