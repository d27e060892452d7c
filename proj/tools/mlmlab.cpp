// command line front end: tokenizer training, label-space reports, masked
// pretraining, downstream probes, cost modeling, and result analysis
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <map>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "mlmlab/analysis.hpp"
#include "mlmlab/bpe.hpp"
#include "mlmlab/config.hpp"
#include "mlmlab/corpus.hpp"
#include "mlmlab/finetune.hpp"
#include "mlmlab/flops.hpp"
#include "mlmlab/masking.hpp"
#include "mlmlab/objective.hpp"
#include "mlmlab/trainer.hpp"

namespace fs = std::filesystem;
using namespace mlmlab;

namespace {

Vocab load_vocab_arg(const std::string& vocab_dir, const std::string& external) {
  if (!external.empty()) return load_external_vocab(external);
  if (!vocab_dir.empty()) return Vocab::load(vocab_dir);
  throw std::runtime_error("one of --vocab or --external-vocab is required");
}

std::vector<Document> load_docs_arg(const std::string& corpus, int synthetic,
                                    std::uint64_t seed) {
  if (!corpus.empty()) return load_corpus(corpus);
  if (synthetic > 0) return gen_synthetic_corpus(synthetic, seed);
  throw std::runtime_error("one of --corpus or --synthetic is required");
}

void write_text(const fs::path& path, const std::string& content) {
  std::ofstream f(path, std::ios::binary);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << content;
}

std::string csv_metric_rows(const std::string& objective_str, const ObjectiveSpec& spec,
                            int num_classes, const std::string& task,
                            const MetricReport& report) {
  std::ostringstream out;
  for (const auto& [metric, vals] : report.values) {
    MeanStd ms = mean_std(vals);
    out << objective_str << "," << spec.direction_name() << "," << spec.n_for_report() << ","
        << num_classes << "," << task << "," << metric << "," << format_double(ms.mean) << ","
        << format_double(ms.stddev) << "," << vals.size() << "\n";
  }
  return out.str();
}

int run_tokenize(const std::string& corpus, int synthetic, std::uint64_t seed, int vocab_size,
                 const std::string& out_dir) {
  auto docs = load_docs_arg(corpus, synthetic, seed);
  Vocab vocab = train_bpe(docs, vocab_size);
  vocab.save(out_dir);
  write_run_manifest(out_dir, "tokenize",
                     {{"corpus", corpus.empty() ? "synthetic:" + std::to_string(synthetic) : corpus},
                      {"seed", std::to_string(seed)},
                      {"vocab_size", std::to_string(vocab_size)}});
  std::cout << "trained vocabulary: " << vocab.size() << " tokens ("
            << vocab.merges().size() << " merges) -> " << out_dir << "\n";
  return 0;
}

int run_labelmap(const std::string& vocab_dir, const std::string& external,
                 const std::string& objective_str, const std::string& out_dir) {
  Vocab vocab = load_vocab_arg(vocab_dir, external);
  ObjectiveSpec spec = ObjectiveSpec::parse(objective_str);
  LabelMap map = build_label_map(vocab, spec);
  std::cout << "objective=" << spec.to_string() << " vocab_tokens=" << vocab.size()
            << " num_classes=" << map.num_classes << "\n";
  auto stats = vocab_char_stats(vocab);
  std::cout << "token_length_chars mean=" << format_double(stats.mean)
            << " std=" << format_double(stats.stddev) << " over " << stats.token_count
            << " non-special tokens\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    std::ostringstream csv;
    csv << "token_id,token,label_id,label\n";
    for (int id = 0; id < vocab.size(); ++id) {
      int label = map.label_of(id);
      csv << id << "," << vocab.token(id) << "," << label << ","
          << (label == LabelMap::kIgnore ? std::string("<ignore>")
                                         : map.label_id_to_label_text[static_cast<std::size_t>(label)])
          << "\n";
    }
    write_text(fs::path(out_dir) / "labelmap.csv", csv.str());
    write_run_manifest(out_dir, "labelmap",
                       {{"objective", spec.to_string()},
                        {"vocab", external.empty() ? vocab_dir : external},
                        {"num_classes", std::to_string(map.num_classes)}});
  }
  return 0;
}

int run_sweep(const std::string& vocab_dir, const std::string& external, int n_max,
              const std::string& out_dir) {
  if (n_max < 1) throw std::runtime_error("--n-max must be >= 1");
  Vocab vocab = load_vocab_arg(vocab_dir, external);
  std::vector<int> ns;
  for (int n = 1; n <= n_max; ++n) ns.push_back(n);
  auto sweep = count_classes_sweep(vocab, {Direction::kFirst, Direction::kLast}, ns);
  for (const auto& r : sweep)
    std::cout << r.direction << " n=" << r.n << " classes=" << r.num_classes << "\n";
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_class_sweep_csv(sweep, fs::path(out_dir) / "class_counts.csv");
    write_text(fs::path(out_dir) / "class_counts.svg", render_class_sweep_svg(sweep));
    write_run_manifest(out_dir, "sweep-classes",
                       {{"vocab", external.empty() ? vocab_dir : external},
                        {"n_max", std::to_string(n_max)}});
  }
  return 0;
}

int run_pretrain(const std::string& corpus, int synthetic, const std::string& vocab_dir,
                 const std::string& objective_str, const std::string& config_file,
                 std::uint64_t seed, const std::string& out_dir) {
  Config file_cfg;
  if (!config_file.empty()) file_cfg = Config::from_file(config_file);

  ObjectiveSpec spec = ObjectiveSpec::parse(objective_str);
  auto docs = load_docs_arg(corpus, synthetic, seed);
  Vocab vocab = vocab_dir.empty() ? train_bpe(docs, 261 + static_cast<int>(
                                                  file_cfg.get_int("bpe.merges", 300)))
                                  : Vocab::load(vocab_dir);

  EncoderConfig enc;
  enc.num_layers = static_cast<int>(file_cfg.get_int("encoder.num_layers", enc.num_layers));
  enc.num_heads = static_cast<int>(file_cfg.get_int("encoder.num_heads", enc.num_heads));
  enc.hidden_dim = static_cast<int>(file_cfg.get_int("encoder.hidden_dim", enc.hidden_dim));
  enc.ffn_dim = static_cast<int>(file_cfg.get_int("encoder.ffn_dim", enc.ffn_dim));
  enc.max_seq_len = static_cast<int>(file_cfg.get_int("encoder.max_seq_len", enc.max_seq_len));
  enc.dropout = file_cfg.get_double("encoder.dropout", enc.dropout);

  PretrainConfig cfg;
  cfg.batch_size = static_cast<int>(file_cfg.get_int("pretrain.batch_size", cfg.batch_size));
  cfg.total_steps = file_cfg.get_int("pretrain.total_steps", cfg.total_steps);
  cfg.peak_lr = file_cfg.get_double("pretrain.peak_lr", cfg.peak_lr);
  cfg.warmup_steps = file_cfg.get_int("pretrain.warmup_steps", cfg.warmup_steps);
  cfg.mask_prob = file_cfg.get_double("pretrain.mask_prob", cfg.mask_prob);
  cfg.seq_len = static_cast<int>(file_cfg.get_int("pretrain.seq_len", cfg.seq_len));
  cfg.grad_clip_norm = file_cfg.get_double("pretrain.grad_clip_norm", cfg.grad_clip_norm);
  cfg.checkpoint_every = file_cfg.get_int("pretrain.checkpoint_every", cfg.checkpoint_every);
  cfg.seed = seed;

  fs::create_directories(out_dir);
  auto result = pretrain(docs, vocab, spec, enc, cfg, out_dir);
  vocab.save(fs::path(out_dir) / "vocab");
  result.checkpoint.save(fs::path(out_dir) / "checkpoint_final.mlmlab");
  result.curve.save_csv(fs::path(out_dir) / "loss_curve.csv");

  std::map<std::string, std::string> manifest = {
      {"objective", spec.to_string()},
      {"seed", std::to_string(seed)},
      {"corpus", corpus.empty() ? "synthetic:" + std::to_string(synthetic) : corpus},
      {"pretrain.batch_size", std::to_string(cfg.batch_size)},
      {"pretrain.total_steps", std::to_string(cfg.total_steps)},
      {"pretrain.peak_lr", format_double(cfg.peak_lr)},
      {"pretrain.warmup_steps", std::to_string(cfg.warmup_steps)},
      {"pretrain.mask_prob", format_double(cfg.mask_prob)},
      {"pretrain.seq_len", std::to_string(cfg.seq_len)},
      {"encoder.num_layers", std::to_string(enc.num_layers)},
      {"encoder.num_heads", std::to_string(enc.num_heads)},
      {"encoder.hidden_dim", std::to_string(enc.hidden_dim)},
      {"encoder.ffn_dim", std::to_string(enc.ffn_dim)},
      {"num_classes", std::to_string(result.checkpoint.head.num_classes)}};
  write_run_manifest(out_dir, "pretrain", manifest);

  double final_loss = result.curve.points.empty() ? 0.0 : result.curve.points.back().second;
  std::cout << "pretrained " << spec.to_string() << " for " << cfg.total_steps
            << " steps; final loss " << format_double(final_loss) << " -> " << out_dir << "\n";
  return 0;
}

int run_finetune(const std::string& checkpoint_file, const std::string& vocab_dir,
                 const std::string& task_kind, const std::string& task_file, int task_size,
                 int num_labels, int seeds, int epochs, std::uint64_t seed,
                 const std::string& out_dir) {
  Checkpoint ck = Checkpoint::load(checkpoint_file);
  Vocab vocab = Vocab::load(vocab_dir);

  ProbeTask task;
  if (!task_file.empty()) {
    task = task_kind == "span" ? load_span_tsv(task_file) : load_classification_tsv(task_file);
  } else {
    SyntheticTaskSpec ts;
    ts.kind = task_kind == "span" ? TaskKind::kSpan : TaskKind::kClassification;
    ts.size = task_size;
    ts.num_labels = num_labels;
    ts.seed = seed;
    task = gen_probe_task(ts);
  }

  FinetuneConfig cfg;
  cfg.max_epochs = epochs;
  std::vector<std::uint64_t> seed_list;
  for (int s = 0; s < seeds; ++s) seed_list.push_back(seed + static_cast<std::uint64_t>(s));
  MetricReport report = run_finetune_seeds(ck, task, vocab, cfg, seed_list);

  ObjectiveSpec spec = ObjectiveSpec::parse(ck.objective);
  std::string rows = csv_metric_rows(ck.objective, spec, ck.head.num_classes, task_kind, report);
  std::cout << kMetricsCsvHeader << "\n" << rows;
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / ("metrics_" + task_kind + ".csv"),
               std::string(kMetricsCsvHeader) + "\n" + rows);
    write_run_manifest(out_dir, "finetune",
                       {{"checkpoint", checkpoint_file},
                        {"objective", ck.objective},
                        {"task", task_kind},
                        {"task_source", task_file.empty() ? "synthetic" : task_file},
                        {"seeds", std::to_string(seeds)},
                        {"seed", std::to_string(seed)},
                        {"epochs", std::to_string(epochs)}});
  }
  return 0;
}

int run_flops(const std::string& preset, const std::string& vocab_dir,
              const std::string& external, std::vector<std::string> objectives,
              bool head_masked_only, const std::string& out_dir) {
  if (objectives.empty())
    objectives = {"mlm", "firstchar29", "lastchar29", "first:4", "last:4", "first:9"};

  bool ref = preset == "reference";
  EncoderConfig enc = ref ? EncoderConfig::bert_base(50265) : EncoderConfig{};
  PretrainConfig train = ref ? PretrainConfig::reference() : PretrainConfig{};
  if (!ref) enc.vocab_size = 561;  // desk default, overridden by a real vocab below

  Vocab vocab;
  bool have_vocab = !vocab_dir.empty() || !external.empty();
  if (have_vocab) {
    vocab = load_vocab_arg(vocab_dir, external);
    enc.vocab_size = vocab.size();
  }

  FlopsOptions opt;
  opt.head_all_positions = !head_masked_only;

  std::ostringstream csv;
  csv << kFlopsCsvHeader << "\n";
  double baseline = 0.0;
  std::cout << "preset=" << preset << " layers=" << enc.num_layers << " hidden=" << enc.hidden_dim
            << " seq=" << train.seq_len << " steps=" << train.total_steps
            << " batch=" << train.batch_size << "\n";
  for (const auto& obj_str : objectives) {
    ObjectiveSpec spec = ObjectiveSpec::parse(obj_str);
    int classes = have_vocab ? build_label_map(vocab, spec).num_classes
                             : reference_num_classes(spec, enc.vocab_size);
    HeadSpec head = spec.kind == ObjectiveKind::kMlm ? HeadSpec::mlm_head(classes)
                                                     : HeadSpec::linear_head(classes);
    auto fwd = estimate_forward_flops(enc, head, classes, train.seq_len, opt);
    double total = estimate_training_flops(fwd, train.total_steps, train.batch_size,
                                           opt.backward_multiplier);
    if (spec.kind == ObjectiveKind::kMlm) baseline = total;
    double rel = baseline > 0 ? round1(relative_difference(total, baseline)) : 0.0;
    csv << obj_str << "," << spec.direction_name() << "," << spec.n_for_report() << "," << classes
        << "," << format_double(total) << "," << format_double(rel) << "\n";
    std::cout << obj_str << ": classes=" << classes << " total_flops=" << format_double(total)
              << " (" << (rel >= 0 ? "+" : "") << format_double(rel) << "% vs mlm)\n";
  }
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "flops.csv", csv.str());
    write_run_manifest(out_dir, "flops",
                       {{"preset", preset},
                        {"head_all_positions", head_masked_only ? "false" : "true"},
                        {"vocab_size", std::to_string(enc.vocab_size)}});
  }
  return 0;
}

int run_analyze(const std::string& results_dir, const std::string& out_dir) {
  auto results = load_results_dir(results_dir);
  if (results.empty()) throw std::runtime_error("no result CSVs found under " + results_dir);

  std::ostringstream md;
  md << "# Objective complexity vs downstream performance\n\n";

  md << "## Cost/benefit (vs MLM)\n\n";
  auto table = cost_benefit_table(results);
  std::vector<std::string> tasks;
  for (const auto& row : table)
    for (const auto& [task, cell] : row.tasks)
      if (std::find(tasks.begin(), tasks.end(), task) == tasks.end()) tasks.push_back(task);
  md << "| objective | classes | train FLOPs |";
  for (const auto& t : tasks) md << " " << t << " |";
  md << "\n|---|---|---|";
  for (std::size_t i = 0; i < tasks.size(); ++i) md << "---|";
  md << "\n";
  for (const auto& row : table) {
    md << "| " << row.objective.to_string() << " | " << row.num_classes << " | ";
    if (row.total_flops > 0)
      md << format_double(row.total_flops) << " (" << (row.flops_relative_diff >= 0 ? "+" : "")
         << format_double(row.flops_relative_diff) << "%)";
    else
      md << "-";
    md << " |";
    for (const auto& t : tasks) {
      auto it = row.tasks.find(t);
      if (it == row.tasks.end()) {
        md << " - |";
      } else {
        md << " " << format_double(it->second.score) << " ("
           << (it->second.relative_diff >= 0 ? "+" : "")
           << format_double(it->second.relative_diff) << "%) |";
      }
    }
    md << "\n";
  }

  md << "\n## Complexity correlations\n\n";
  std::ostringstream corr_csv;
  corr_csv << "family,task,axis,pearson_r,points\n";
  for (const std::string& family : {std::string("first"), std::string("last")})
    for (const auto& task : tasks)
      for (ComplexityAxis axis : {ComplexityAxis::kN, ComplexityAxis::kLogClasses}) {
        try {
          auto rep = complexity_correlation(results, family, task, axis);
          md << "- " << family << " / " << task << " vs " << rep.axis << ": r = "
             << format_double(round1(rep.r * 100.0) / 100.0) << " over " << rep.point_count
             << " points" << (rep.degenerate ? " (degenerate)" : "") << "\n";
          corr_csv << family << "," << task << "," << rep.axis << "," << format_double(rep.r)
                   << "," << rep.point_count << "\n";
        } catch (const std::invalid_argument&) {
          // fewer than 3 points for this slice; skip silently
        }
      }

  std::cout << md.str();
  if (!out_dir.empty()) {
    fs::create_directories(out_dir);
    write_text(fs::path(out_dir) / "analysis.md", md.str());
    write_text(fs::path(out_dir) / "correlations.csv", corr_csv.str());
    write_run_manifest(out_dir, "analyze", {{"results_dir", results_dir}});
  }
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"masked-objective pretraining laboratory"};
  app.require_subcommand(1);

  std::string corpus, vocab_dir, external, out_dir, objective = "mlm", config_file;
  std::string checkpoint_file, task_kind = "classification", task_file, preset = "desk";
  std::string results_dir;
  std::vector<std::string> objectives;
  int synthetic = 0, vocab_size = 600, n_max = 9, task_size = 200, num_labels = 4;
  int seeds = 3, epochs = 5;
  std::uint64_t seed = 0;
  bool head_masked_only = false;

  auto* tok = app.add_subcommand("tokenize", "train a byte-level BPE vocabulary");
  tok->add_option("--corpus", corpus, "corpus file, one document per line");
  tok->add_option("--synthetic", synthetic, "generate N synthetic documents instead");
  tok->add_option("--seed", seed, "random seed");
  tok->add_option("--vocab-size", vocab_size, "target vocabulary size")->capture_default_str();
  tok->add_option("--out", out_dir, "output directory")->required();

  auto* lab = app.add_subcommand("labelmap", "label-space statistics for an objective");
  lab->add_option("--vocab", vocab_dir, "saved vocabulary directory");
  lab->add_option("--external-vocab", external, "external vocabulary listing");
  lab->add_option("--objective", objective, "mlm|firstchar29|lastchar29|first:N|last:N")
      ->required();
  lab->add_option("--out", out_dir, "optional output directory");

  auto* swp = app.add_subcommand("sweep-classes", "class counts across n values");
  swp->add_option("--vocab", vocab_dir, "saved vocabulary directory");
  swp->add_option("--external-vocab", external, "external vocabulary listing");
  swp->add_option("--n-max", n_max, "largest n to sweep")->capture_default_str();
  swp->add_option("--out", out_dir, "optional output directory (CSV + SVG)");

  auto* pre = app.add_subcommand("pretrain", "masked pretraining run");
  pre->add_option("--corpus", corpus, "corpus file, one document per line");
  pre->add_option("--synthetic", synthetic, "generate N synthetic documents instead");
  pre->add_option("--vocab", vocab_dir, "saved vocabulary (default: train on the corpus)");
  pre->add_option("--objective", objective, "mlm|firstchar29|lastchar29|first:N|last:N")
      ->capture_default_str();
  pre->add_option("--config", config_file, "key=value settings file");
  pre->add_option("--seed", seed, "random seed");
  pre->add_option("--out", out_dir, "output directory")->required();

  auto* fin = app.add_subcommand("finetune", "probe a pretrained checkpoint");
  fin->add_option("--checkpoint", checkpoint_file, "checkpoint file")->required();
  fin->add_option("--vocab", vocab_dir, "saved vocabulary directory")->required();
  fin->add_option("--task", task_kind, "classification|span")->capture_default_str();
  fin->add_option("--task-file", task_file, "TSV task file (default: synthetic probe)");
  fin->add_option("--task-size", task_size, "synthetic task size")->capture_default_str();
  fin->add_option("--num-labels", num_labels, "synthetic classification labels")
      ->capture_default_str();
  fin->add_option("--seeds", seeds, "number of finetuning seeds")->capture_default_str();
  fin->add_option("--epochs", epochs, "max finetuning epochs")->capture_default_str();
  fin->add_option("--seed", seed, "base random seed");
  fin->add_option("--out", out_dir, "optional output directory");

  auto* flo = app.add_subcommand("flops", "analytic training-cost table");
  flo->add_option("--preset", preset, "reference|desk")->capture_default_str();
  flo->add_option("--vocab", vocab_dir, "count classes from this vocabulary");
  flo->add_option("--external-vocab", external, "count classes from an external listing");
  flo->add_option("--objective", objectives, "objectives to tabulate (repeatable)");
  flo->add_flag("--head-masked-only", head_masked_only,
                "charge the output head only at masked positions");
  flo->add_option("--out", out_dir, "optional output directory");

  auto* ana = app.add_subcommand("analyze", "cost/benefit and correlation report");
  ana->add_option("--results", results_dir, "directory of metrics/flops CSVs")->required();
  ana->add_option("--out", out_dir, "optional output directory");

  CLI11_PARSE(app, argc, argv);

  try {
    if (tok->parsed()) return run_tokenize(corpus, synthetic, seed, vocab_size, out_dir);
    if (lab->parsed()) return run_labelmap(vocab_dir, external, objective, out_dir);
    if (swp->parsed()) return run_sweep(vocab_dir, external, n_max, out_dir);
    if (pre->parsed())
      return run_pretrain(corpus, synthetic, vocab_dir, objective, config_file, seed, out_dir);
    if (fin->parsed())
      return run_finetune(checkpoint_file, vocab_dir, task_kind, task_file, task_size,
                          num_labels, seeds, epochs, seed, out_dir);
    if (flo->parsed())
      return run_flops(preset, vocab_dir, external, objectives, head_masked_only, out_dir);
    if (ana->parsed()) return run_analyze(results_dir, out_dir);
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
