#pragma once

#include "epifnp/encoder.hpp"
#include "epifnp/model.hpp"
#include "epifnp/tensor.hpp"

namespace epifnp {

// Local latent prior p(z_i | G, U_R) for every query at once. adjacency is
// {R, M} (reference rows, query columns), hard 0/1 or relaxed weights. Each
// query's Gaussian averages h1/h2 of its parent embeddings; a query with no
// parents (zero column) gets exactly N(0, I).
DiagonalGaussian local_latent(const ModelParams& params, const Tensor& adjacency,
                              const Tensor& refs_u);

// Global latent v: attention-pooled summary of sampled reference embeddings
// {R, H} -> {H}. The pooling weights are nonnegative and sum to 1, so v lies
// in the convex hull of the references.
Tensor global_latent(const ModelParams& params, const Tensor& refs_u);

// Predictive Gaussian over the scalar target for each query row:
// e_i = concat(z_i, v, u_i); mean = d1(e), log-variance = d2(e).
// z/u are {M, H}; v {H} is shared across rows. Returns {M, 1} columns.
DiagonalGaussian predict(const ModelParams& params, const Tensor& z, const Tensor& v,
                         const Tensor& u);

// Variational posterior q_phi(z_i | x_i) from the query's deterministic
// attention summary h-bar (one linear layer to mean and log-variance).
DiagonalGaussian posterior_q(const ModelParams& params, const Tensor& hbar_rows);

// Sum over all rows and dimensions of the diagonal-Gaussian log density of x.
Tensor gaussian_log_density(const DiagonalGaussian& g, const Tensor& x);

}  // namespace epifnp
