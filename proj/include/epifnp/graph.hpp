#pragma once

#include "epifnp/rng.hpp"
#include "epifnp/tensor.hpp"

namespace epifnp {

// RBF kernel edge probabilities between reference embeddings (rows of refs)
// and query embeddings (rows of queries):
//   probs[i][j] = exp(-gamma * ||refs_i - queries_j||^2)  in (0, 1]
// gamma is a positive scalar tensor so that gradients reach the bandwidth.
// Coincident rows give exactly 1.
Tensor edge_probabilities(const Tensor& gamma, const Tensor& refs, const Tensor& queries);

// Independent Bernoulli(p_ij) draws; eager 0/1 constant matrix, row-major
// rng consumption. Used at inference (no gradients).
Tensor sample_hard(const Tensor& probs, Rng& rng);

// Binary-concrete relaxation, differentiable w.r.t. probs:
//   s = sigmoid((logit(clamp(p)) + L) / tau),  L ~ Logistic(0, 1)
// with p clamped to [1e-12, 1 - 1e-12] before the logit.
Tensor sample_relaxed(const Tensor& probs, double tau, Rng& rng);

}  // namespace epifnp
