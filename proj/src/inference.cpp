#include "epifnp/inference.hpp"

#include <algorithm>
#include <cmath>

#include "epifnp/encoder.hpp"
#include "epifnp/errors.hpp"
#include "epifnp/graph.hpp"
#include "epifnp/latent.hpp"

namespace epifnp {

double PredictiveDistribution::mixture_mean() const {
  if (means.empty()) throw ContractError("mixture_mean: no components");
  double s = 0.0;
  for (double m : means) s += m;
  return s / static_cast<double>(means.size());
}

namespace {

double sorted_quantile(const std::vector<double>& v, double q) {
  const double pos = q * static_cast<double>(v.size() - 1);
  const std::size_t lo = static_cast<std::size_t>(pos);
  if (lo + 1 >= v.size()) return v.back();
  const double frac = pos - static_cast<double>(lo);
  return v[lo] * (1.0 - frac) + v[lo + 1] * frac;
}

Tensor normal_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.normal();
  return Tensor({r, c}, std::move(v));
}

// Deterministic per-run context shared by every mixture component.
struct ForecastContext {
  const ModelParams& params;
  const Hyperparams& hp;
  DiagonalGaussian ref_dist;  // {R, H}
  std::size_t R, H;
};

ForecastContext make_context(const ModelParams& params, const Hyperparams& hp,
                             std::span<const std::vector<double>> refs) {
  if (refs.empty()) throw ContractError("forecast: empty reference set");
  std::vector<Tensor> rows;
  rows.reserve(refs.size());
  for (const auto& r : refs) rows.push_back(encode_summary(params, r));  // {H} each
  DiagonalGaussian dist = embedding_heads(params, stack_rows(rows));
  return {params, hp, dist, refs.size(), hp.hidden_dim};
}

DiagonalGaussian encode_query(const ModelParams& params, std::span<const double> prefix) {
  if (prefix.empty()) throw ContractError("forecast: empty prefix");
  Tensor hbar = encode_summary(params, prefix);
  const Tensor single[] = {hbar};
  return embedding_heads(params, stack_rows(single));  // {1, H}
}

// One mixture component plus ndraws realized draws, appended to `out`.
void sample_component(const ForecastContext& ctx, const DiagonalGaussian& query_dist,
                      std::size_t ndraws, Rng& rng, PredictiveDistribution& out) {
  const auto& hp = ctx.hp;
  const bool sample_u = hp.ablation != Ablation::deterministic_encoder;
  const bool use_local = hp.ablation != Ablation::no_local;
  const bool use_global = hp.ablation != Ablation::no_global;

  Tensor u_R = sample_u ? reparameterize(ctx.ref_dist, normal_matrix(ctx.R, ctx.H, rng))
                        : ctx.ref_dist.mean;
  Tensor u_q = sample_u ? reparameterize(query_dist, normal_matrix(1, ctx.H, rng))
                        : query_dist.mean;

  Tensor z;
  if (use_local) {
    Tensor gamma = exp(ctx.params.log_gamma);
    Tensor probs = edge_probabilities(gamma, u_R, u_q);  // {R, 1}
    Tensor adj = sample_hard(probs, rng);
    DiagonalGaussian prior = local_latent(ctx.params, adj, u_R);  // {1, H}
    z = reparameterize(prior, normal_matrix(1, ctx.H, rng));
  } else {
    z = Tensor::zeros({1, ctx.H});
  }
  Tensor v = use_global ? global_latent(ctx.params, u_R) : Tensor::zeros({ctx.H});

  DiagonalGaussian pred = predict(ctx.params, z, v, u_q);  // {1, 1}
  const double mean = pred.mean.item();
  const double sd = std::exp(0.5 * pred.logvar.item());
  out.means.push_back(mean);
  out.logvars.push_back(pred.logvar.item());
  for (std::size_t d = 0; d < ndraws; ++d) out.draws.push_back(mean + sd * rng.normal());
}

}  // namespace

IntervalResult interval(const PredictiveDistribution& dist, double confidence) {
  if (confidence < 0.0 || confidence > 1.0)
    throw ContractError("interval: confidence must lie in [0, 1]");
  if (dist.draws.empty()) throw ContractError("interval: distribution has no draws");
  if (dist.sorted_draws.size() != dist.draws.size()) {
    dist.sorted_draws = dist.draws;
    std::sort(dist.sorted_draws.begin(), dist.sorted_draws.end());
  }
  return {sorted_quantile(dist.sorted_draws, (1.0 - confidence) / 2.0),
          sorted_quantile(dist.sorted_draws, (1.0 + confidence) / 2.0),
          dist.draws.size() < 100};
}

PredictiveDistribution forecast(const ModelParams& params, const Hyperparams& hp,
                                std::span<const std::vector<double>> refs,
                                std::span<const double> prefix, std::size_t components,
                                std::size_t draws_per, Rng& rng) {
  if (components == 0) throw ContractError("forecast: sample count must be positive");
  if (draws_per == 0) throw ContractError("forecast: draws per component must be positive");
  ForecastContext ctx = make_context(params, hp, refs);
  DiagonalGaussian query_dist = encode_query(params, prefix);
  PredictiveDistribution out;
  out.means.reserve(components);
  out.logvars.reserve(components);
  out.draws.reserve(components * draws_per);
  for (std::size_t s = 0; s < components; ++s)
    sample_component(ctx, query_dist, draws_per, rng, out);
  return out;
}

PredictiveDistribution autoregressive_forecast(const ModelParams& params, const Hyperparams& hp,
                                               std::span<const std::vector<double>> refs,
                                               std::span<const double> prefix,
                                               std::size_t k_target, std::size_t n_candidates,
                                               Rng& rng) {
  if (k_target == 0) throw ContractError("autoregressive_forecast: k must be positive");
  if (n_candidates == 0) throw ContractError("autoregressive_forecast: need candidates");
  if (prefix.empty()) throw ContractError("autoregressive_forecast: empty prefix");
  ForecastContext ctx = make_context(params, hp, refs);

  std::vector<std::vector<double>> prev{std::vector<double>(prefix.begin(), prefix.end())};
  PredictiveDistribution out;
  for (std::size_t step = 1; step <= k_target; ++step) {
    const bool last = step == k_target;
    std::vector<std::vector<double>> next;
    next.reserve(n_candidates);
    if (last) {
      out.means.reserve(n_candidates);
      out.logvars.reserve(n_candidates);
      out.draws.reserve(n_candidates);
    }
    for (std::size_t j = 0; j < n_candidates; ++j) {
      const std::size_t pick = prev.size() == 1 ? 0 : rng.uniform_int(prev.size());
      const std::vector<double>& seq = prev[pick];
      DiagonalGaussian qdist = encode_query(params, seq);
      PredictiveDistribution one;
      sample_component(ctx, qdist, 1, rng, one);
      std::vector<double> extended = seq;
      extended.push_back(one.draws[0]);
      next.push_back(std::move(extended));
      if (last) {
        out.means.push_back(one.means[0]);
        out.logvars.push_back(one.logvars[0]);
        out.draws.push_back(one.draws[0]);
      }
    }
    prev = std::move(next);
  }
  return out;
}

PredictiveDistribution destandardize(const PredictiveDistribution& dist, double shift,
                                     double scale) {
  if (scale <= 0.0) throw ContractError("destandardize: scale must be positive");
  PredictiveDistribution out;
  out.means.reserve(dist.means.size());
  out.logvars.reserve(dist.logvars.size());
  out.draws.reserve(dist.draws.size());
  const double log_s2 = 2.0 * std::log(scale);
  for (double m : dist.means) out.means.push_back(m * scale + shift);
  for (double lv : dist.logvars) out.logvars.push_back(lv + log_s2);
  for (double d : dist.draws) out.draws.push_back(d * scale + shift);
  return out;
}

}  // namespace epifnp
