#include "epifnp/encoder.hpp"

#include <cmath>

#include "epifnp/errors.hpp"

namespace epifnp {

Tensor reparameterize(const DiagonalGaussian& g, const Tensor& noise) {
  if (g.mean.shape() != g.logvar.shape())
    throw ContractError("reparameterize: mean/logvar shapes disagree");
  if (noise.shape() != g.mean.shape())
    throw ContractError("reparameterize: noise shape does not match the Gaussian");
  return add(g.mean, mul(exp(mul(g.logvar, 0.5)), noise));
}

std::vector<Tensor> gru_forward(const GruParams& p, std::span<const double> seq) {
  if (seq.empty()) throw ContractError("gru_forward: empty sequence");
  const std::size_t H = p.Uz.shape()[0];
  Tensor h = Tensor::zeros({H});
  std::vector<Tensor> hs;
  hs.reserve(seq.size());
  for (double x : seq) {
    Tensor xt = Tensor::scalar(x);
    Tensor z = sigmoid(add(add(matmul(xt, p.Wz), matmul(h, p.Uz)), p.bz));
    Tensor r = sigmoid(add(add(matmul(xt, p.Wr), matmul(h, p.Ur)), p.br));
    Tensor cand = tanh(add(add(matmul(xt, p.Wh), matmul(mul(r, h), p.Uh)), p.bh));
    h = add(mul(z, h), mul(sub(1.0, z), cand));
    hs.push_back(h);
  }
  return hs;
}

Tensor attention_scores(const AttentionParams& p, const Tensor& hidden_rows) {
  const double scale = 1.0 / std::sqrt(static_cast<double>(p.Wq.shape()[1]));
  Tensor q = matmul(hidden_rows, p.Wq);
  Tensor k = matmul(hidden_rows, p.Wk);
  return mul(matmul(q, transpose(k)), scale);
}

AttentionSummary pool_from_scores(const Tensor& score_block, const Tensor& hidden_rows) {
  if (hidden_rows.rank() != 2)
    throw ContractError("pool_from_scores: hidden states must be row-batched");
  const std::size_t t = hidden_rows.shape()[0];
  Tensor ones = Tensor::full({t}, 1.0 / static_cast<double>(t));
  Tensor colmean = matmul(ones, score_block);  // mean over queries, one score per step
  Tensor alpha = softmax_lastdim(colmean);
  Tensor pooled = matmul(alpha, hidden_rows);
  return {alpha, pooled};
}

AttentionSummary attention_summary(const AttentionParams& p, const Tensor& hidden_rows) {
  return pool_from_scores(attention_scores(p, hidden_rows), hidden_rows);
}

DiagonalGaussian embedding_heads(const ModelParams& params, const Tensor& hbar_rows) {
  return {mlp3_apply(params.g1, hbar_rows), mlp3_apply(params.g2, hbar_rows)};
}

Tensor encode_summary(const ModelParams& params, std::span<const double> seq) {
  std::vector<Tensor> hs = gru_forward(params.gru, seq);
  Tensor hm = stack_rows(hs);
  return attention_summary(params.attn, hm).summary;
}

DiagonalGaussian encode(const ModelParams& params, std::span<const double> seq) {
  Tensor hbar = encode_summary(params, seq);
  return {mlp3_apply(params.g1, hbar), mlp3_apply(params.g2, hbar)};
}

Tensor encode_prefix_summaries(const ModelParams& params, std::span<const double> season,
                               std::span<const std::size_t> prefix_lens) {
  if (prefix_lens.empty()) throw ContractError("encode_prefix_summaries: no prefixes requested");
  for (std::size_t t : prefix_lens)
    if (t == 0 || t > season.size())
      throw ContractError("encode_prefix_summaries: prefix length out of range");

  std::vector<Tensor> hs = gru_forward(params.gru, season);
  Tensor hm = stack_rows(hs);
  Tensor scores = attention_scores(params.attn, hm);
  const std::size_t T = season.size();

  std::vector<Tensor> hbars;
  hbars.reserve(prefix_lens.size());
  for (std::size_t t : prefix_lens) {
    Tensor block = (t == T) ? scores : slice_block(scores, 0, t, 0, t);
    Tensor rows = (t == T) ? hm : slice_block(hm, 0, t, 0, hm.shape()[1]);
    hbars.push_back(pool_from_scores(block, rows).summary);
  }
  return stack_rows(hbars);
}

}  // namespace epifnp
