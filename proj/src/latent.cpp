#include "epifnp/latent.hpp"

#include "epifnp/errors.hpp"

namespace epifnp {

namespace {

constexpr double kLog2Pi = 1.8378770664093454836;

// {N} vector of row weights -> {N, 1} column for broadcasting over rows.
Tensor as_column(const Tensor& v) { return transpose(v); }

}  // namespace

DiagonalGaussian local_latent(const ModelParams& params, const Tensor& adjacency,
                              const Tensor& refs_u) {
  if (adjacency.rank() != 2 || refs_u.rank() != 2 ||
      adjacency.shape()[0] != refs_u.shape()[0])
    throw ContractError("local_latent: adjacency rows must match reference count");
  Tensor at = transpose(adjacency);                      // {M, R}
  Tensor sums1 = matmul(at, linear_apply(params.h1, refs_u));  // {M, H}
  Tensor sums2 = matmul(at, linear_apply(params.h2, refs_u));
  Tensor ones = Tensor::full({refs_u.shape()[0]}, 1.0);
  Tensor counts = matmul(at, ones);                      // {M} parent mass per query
  // Mean aggregation: divide by the parent count (clamped away from zero).
  // A parentless query has exactly-zero sums, so 0 * (1/eps) keeps it at the
  // standard Gaussian N(0, I) without branching.
  Tensor inv = reciprocal_positive(clamp_lower(counts, 1e-12));
  Tensor inv_col = as_column(inv);
  return {mul(sums1, inv_col), mul(sums2, inv_col)};
}

Tensor global_latent(const ModelParams& params, const Tensor& refs_u) {
  if (refs_u.rank() != 2 || refs_u.shape()[0] == 0)
    throw ContractError("global_latent: reference set must be a nonempty row matrix");
  return attention_summary(params.global_attn, refs_u).summary;
}

DiagonalGaussian predict(const ModelParams& params, const Tensor& z, const Tensor& v,
                         const Tensor& u) {
  if (z.rank() != 2 || u.rank() != 2 || z.shape() != u.shape())
    throw ContractError("predict: z and u must be row-batched with equal shapes");
  if (v.rank() != 1 || v.shape()[0] != z.shape()[1])
    throw ContractError("predict: v dimension must match z/u columns");
  const std::size_t M = z.shape()[0];
  std::vector<Tensor> v_rows(M, v);
  Tensor v_mat = stack_rows(v_rows);
  const Tensor parts[] = {z, v_mat, u};
  Tensor e = concat_lastdim(parts);  // {M, 3H}
  return {mlp2_apply(params.d1, e), mlp2_apply(params.d2, e)};
}

DiagonalGaussian posterior_q(const ModelParams& params, const Tensor& hbar_rows) {
  if (hbar_rows.rank() != 2) throw ContractError("posterior_q: expected row-batched summaries");
  const std::size_t H = hbar_rows.shape()[1];
  if (params.q_post.W.shape()[0] != H || params.q_post.W.shape()[1] != 2 * H)
    throw ContractError("posterior_q: head dimensions disagree with summaries");
  Tensor out = linear_apply(params.q_post, hbar_rows);  // {M, 2H}
  const std::size_t M = hbar_rows.shape()[0];
  return {slice_block(out, 0, M, 0, H), slice_block(out, 0, M, H, H)};
}

Tensor gaussian_log_density(const DiagonalGaussian& g, const Tensor& x) {
  if (g.mean.shape() != g.logvar.shape() || x.shape() != g.mean.shape())
    throw ContractError("gaussian_log_density: shapes disagree");
  Tensor diff = sub(x, g.mean);
  Tensor quad = mul(mul(diff, diff), exp(neg(g.logvar)));
  return mul(sum(add(add(g.logvar, kLog2Pi), quad)), -0.5);
}

}  // namespace epifnp
