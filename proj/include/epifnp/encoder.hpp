#pragma once

#include <span>
#include <vector>

#include "epifnp/model.hpp"
#include "epifnp/tensor.hpp"

namespace epifnp {

// Mean vector and elementwise log-variance; rows may batch several
// independent Gaussians (one per row).
struct DiagonalGaussian {
  Tensor mean;
  Tensor logvar;
};

// sample = mean + exp(logvar / 2) .* noise
Tensor reparameterize(const DiagonalGaussian& g, const Tensor& noise);

// Hidden states h_1..h_t for a nonempty incidence prefix; h_0 = 0.
std::vector<Tensor> gru_forward(const GruParams& p, std::span<const double> seq);

// Pairwise scaled dot-product scores between all hidden-state rows:
//   scores[i][j] = (h_i Wq) . (h_j Wk) / sqrt(H)
Tensor attention_scores(const AttentionParams& p, const Tensor& hidden_rows);

// Collapses a t x t score block over its hidden rows: each timestep's
// attention received is averaged across queries, softmax-normalized, and the
// raw hidden states pooled with those weights.
struct AttentionSummary {
  Tensor weights;  // {t}, nonnegative, sums to 1
  Tensor summary;  // {H}
};
AttentionSummary pool_from_scores(const Tensor& score_block, const Tensor& hidden_rows);

AttentionSummary attention_summary(const AttentionParams& p, const Tensor& hidden_rows);

// Full encoder for one sequence: GRU, attention summary, Gaussian heads.
DiagonalGaussian encode(const ModelParams& params, std::span<const double> seq);

// Deterministic attention summary h-bar of one sequence (feeds the posterior).
Tensor encode_summary(const ModelParams& params, std::span<const double> seq);

// Batch path: one GRU pass and one score matrix per season serve every
// requested prefix length; the t x t leading score block of the full
// sequence equals the prefix's own scores because the GRU is causal and
// scores are pairwise. Returns one summary row per requested prefix, {N, H}.
Tensor encode_prefix_summaries(const ModelParams& params, std::span<const double> season,
                               std::span<const std::size_t> prefix_lens);

// g1/g2 heads over a stack of summaries (row-batched).
DiagonalGaussian embedding_heads(const ModelParams& params, const Tensor& hbar_rows);

}  // namespace epifnp
