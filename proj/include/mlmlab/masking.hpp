#pragma once
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <vector>

#include "mlmlab/bpe.hpp"
#include "mlmlab/corpus.hpp"
#include "mlmlab/objective.hpp"
#include "mlmlab/rng.hpp"

namespace mlmlab {

struct MaskingConfig {
  double mask_prob = 0.15;
  double replace_with_mask = 0.8;
  double replace_with_random = 0.1;
  double keep_original = 0.1;
  std::uint64_t seed = 0;
};

struct MaskedBatch {
  int seq_len = 0;
  std::vector<std::vector<int>> token_ids;           // corrupted
  std::vector<std::vector<std::uint8_t>> attention;  // copied from the input batch
  std::vector<std::vector<std::uint8_t>> mask_flags; // true = training target
  std::vector<std::vector<int>> target_labels;       // LabelMap::kIgnore where unflagged
  int num_flagged = 0;
};

// BERT-style corruption: each eligible (non-special, attended) position is
// independently selected with mask_prob; selected positions become MASK with
// p=0.8, a uniform random non-special token with p=0.1, or stay unchanged.
// Targets always hold the label of the original token.
inline MaskedBatch apply_masking(const Batch& batch, const Vocab& vocab,
                                 const LabelMap& label_map, const MaskingConfig& cfg) {
  if (std::abs(cfg.replace_with_mask + cfg.replace_with_random + cfg.keep_original - 1.0) > 1e-9)
    throw std::invalid_argument("apply_masking: replacement fractions must sum to 1");
  if (cfg.mask_prob < 0.0 || cfg.mask_prob > 1.0)
    throw std::invalid_argument("apply_masking: mask_prob must be in [0,1]");

  std::vector<int> random_pool;
  for (int id = 0; id < vocab.size(); ++id)
    if (!vocab.is_special(id)) random_pool.push_back(id);
  if (random_pool.empty()) throw std::invalid_argument("apply_masking: no maskable tokens");

  Rng rng(cfg.seed);
  MaskedBatch out;
  out.seq_len = batch.seq_len;
  out.token_ids = batch.token_ids;
  out.attention = batch.attention;
  out.mask_flags.assign(batch.token_ids.size(),
                        std::vector<std::uint8_t>(static_cast<std::size_t>(batch.seq_len), 0));
  out.target_labels.assign(batch.token_ids.size(),
                           std::vector<int>(static_cast<std::size_t>(batch.seq_len),
                                            LabelMap::kIgnore));

  for (std::size_t r = 0; r < batch.token_ids.size(); ++r) {
    for (std::size_t c = 0; c < batch.token_ids[r].size(); ++c) {
      int id = batch.token_ids[r][c];
      if (id < 0 || id >= vocab.size())
        throw std::invalid_argument("apply_masking: token id out of vocab range");
      if (!batch.attention[r][c] || vocab.is_special(id)) continue;
      if (rng.next_double() >= cfg.mask_prob) continue;
      out.mask_flags[r][c] = 1;
      out.target_labels[r][c] = label_map.label_of(id);
      ++out.num_flagged;
      double u = rng.next_double();
      if (u < cfg.replace_with_mask) {
        out.token_ids[r][c] = SpecialTokens::kMask;
      } else if (u < cfg.replace_with_mask + cfg.replace_with_random) {
        out.token_ids[r][c] = random_pool[rng.next_below(random_pool.size())];
      }
      // else keep the original token
    }
  }
  return out;
}

}  // namespace mlmlab
