#include "epifnp/graph.hpp"

#include "epifnp/errors.hpp"

namespace epifnp {

namespace {

// Row-wise squared norms of a {N, H} matrix as a {N} vector.
Tensor row_sq_norms(const Tensor& m) {
  Tensor ones = Tensor::full({m.shape()[1]}, 1.0);
  return matmul(mul(m, m), ones);
}

}  // namespace

Tensor edge_probabilities(const Tensor& gamma, const Tensor& refs, const Tensor& queries) {
  if (gamma.numel() != 1) throw ContractError("edge_probabilities: gamma must be scalar");
  if (refs.rank() != 2 || queries.rank() != 2 || refs.shape()[1] != queries.shape()[1])
    throw ContractError("edge_probabilities: embedding dimensions disagree");
  // ||r_i - q_j||^2 = ||r_i||^2 + ||q_j||^2 - 2 r_i . q_j, expanded so one
  // matmul serves all pairs. The relu guards the tiny negative rounding the
  // expansion can produce and pins coincident pairs to distance exactly 0.
  Tensor cross = matmul(refs, transpose(queries));
  Tensor d2 = add(add(mul(cross, -2.0), transpose(row_sq_norms(refs))),
                  row_sq_norms(queries));
  return exp(mul(relu(d2), neg(gamma)));
}

Tensor sample_hard(const Tensor& probs, Rng& rng) {
  const auto& p = probs.value();
  std::vector<double> out(p.size());
  for (std::size_t i = 0; i < p.size(); ++i) {
    if (p[i] < 0.0 || p[i] > 1.0)
      throw ContractError("sample_hard: probability outside [0, 1]");
    out[i] = rng.bernoulli(p[i]) ? 1.0 : 0.0;
  }
  return Tensor(probs.shape(), std::move(out));
}

Tensor sample_relaxed(const Tensor& probs, double tau, Rng& rng) {
  if (tau <= 0.0) throw ContractError("sample_relaxed: temperature must be positive");
  Tensor clamped = clamp_lower(clamp_upper(probs, 1.0 - 1e-12), 1e-12);
  Tensor logit = sub(log(clamped), log(sub(1.0, clamped)));
  std::vector<double> noise(probs.numel());
  for (double& v : noise) v = rng.logistic();
  Tensor L(probs.shape(), std::move(noise));
  return sigmoid(mul(add(logit, L), 1.0 / tau));
}

}  // namespace epifnp
