#include "epifnp/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <numeric>
#include <string>

#include "epifnp/encoder.hpp"
#include "epifnp/errors.hpp"
#include "epifnp/graph.hpp"
#include "epifnp/latent.hpp"

namespace epifnp {

namespace {

// Salts for the named rng streams derived from the run seed.
constexpr std::uint64_t kSaltInit = 1;
constexpr std::uint64_t kSaltSplit = 2;
constexpr std::uint64_t kSaltTrain = 3;
constexpr std::uint64_t kSaltVal = 4;

Tensor normal_matrix(std::size_t r, std::size_t c, Rng& rng) {
  std::vector<double> v(r * c);
  for (double& x : v) x = rng.normal();
  return Tensor({r, c}, std::move(v));
}

}  // namespace

Datasets build_datasets(std::span<const SeasonSeries> seasons, std::size_t horizon,
                        std::size_t min_prefix) {
  if (seasons.empty()) throw ContractError("build_datasets: empty season list");
  if (horizon == 0) throw ContractError("build_datasets: horizon must be positive");
  if (min_prefix == 0) throw ContractError("build_datasets: min_prefix must be positive");
  Datasets out;
  for (std::size_t s = 0; s < seasons.size(); ++s) {
    const auto& vals = seasons[s].values;
    if (vals.size() < min_prefix + horizon)
      throw ContractError("build_datasets: season " + seasons[s].id +
                          " shorter than min_prefix + horizon");
    for (std::size_t t = min_prefix; t + horizon <= vals.size(); ++t)
      out.examples.push_back({s, t, vals[t + horizon - 1]});
    out.refs.push_back(vals);
  }
  return out;
}

ElboTerms elbo_step(const ModelParams& params, const Datasets& data,
                    std::span<const std::size_t> batch, const Hyperparams& hp, Rng& rng,
                    std::vector<double>* grads) {
  if (batch.empty()) throw ContractError("elbo_step: empty batch");
  const std::size_t R = data.refs.size();
  const std::size_t M = batch.size();
  const std::size_t H = hp.hidden_dim;
  const bool sample_u = hp.ablation != Ablation::deterministic_encoder;
  const bool use_local = hp.ablation != Ablation::no_local;
  const bool use_global = hp.ablation != Ablation::no_global;

  Tape tape;
  const ModelParams p = grads ? lift(params, tape) : params;

  std::string stage = "encode";
  try {
    // One GRU pass and one score matrix per season cover its full sequence
    // (the reference) and every query prefix drawn from it.
    std::map<std::size_t, std::vector<std::size_t>> season_prefixes;
    for (std::size_t s = 0; s < R; ++s) season_prefixes[s] = {data.refs[s].size()};
    for (std::size_t bi : batch)
      season_prefixes[data.examples[bi].season_idx].push_back(data.examples[bi].prefix_len);

    std::map<std::size_t, Tensor> summaries;                       // {N_s, H} per season
    std::map<std::size_t, std::map<std::size_t, std::size_t>> row_of;
    for (auto& [s, lens] : season_prefixes) {
      std::sort(lens.begin(), lens.end());
      lens.erase(std::unique(lens.begin(), lens.end()), lens.end());
      for (std::size_t i = 0; i < lens.size(); ++i) row_of[s][lens[i]] = i;
      summaries.emplace(s, encode_prefix_summaries(p, data.refs[s], lens));
    }
    auto hbar_slice = [&](std::size_t s, std::size_t t) {
      return slice_block(summaries.at(s), row_of.at(s).at(t), 1, 0, H);
    };

    // Stack references then queries and run the embedding heads once.
    std::vector<Tensor> rows;
    rows.reserve(R + M);
    for (std::size_t s = 0; s < R; ++s) rows.push_back(hbar_slice(s, data.refs[s].size()));
    for (std::size_t bi : batch)
      rows.push_back(hbar_slice(data.examples[bi].season_idx, data.examples[bi].prefix_len));
    Tensor all_hbar = stack_rows(rows);
    DiagonalGaussian all_u = embedding_heads(p, all_hbar);
    DiagonalGaussian ref_dist = {slice_block(all_u.mean, 0, R, 0, H),
                                 slice_block(all_u.logvar, 0, R, 0, H)};
    DiagonalGaussian qry_dist = {slice_block(all_u.mean, R, M, 0, H),
                                 slice_block(all_u.logvar, R, M, 0, H)};
    Tensor qry_hbar = slice_block(all_hbar, R, M, 0, H);

    stage = "sample-embeddings";
    Tensor u_R = sample_u ? reparameterize(ref_dist, normal_matrix(R, H, rng)) : ref_dist.mean;
    Tensor u_M = sample_u ? reparameterize(qry_dist, normal_matrix(M, H, rng)) : qry_dist.mean;

    Tensor log_py, log_pz, log_qz, z;
    if (use_local) {
      stage = "correlation-graph";
      Tensor gamma = exp(p.log_gamma);
      Tensor probs = edge_probabilities(gamma, u_R, u_M);
      Tensor adj = sample_relaxed(probs, hp.tau, rng);

      stage = "local-latent";
      DiagonalGaussian prior = local_latent(p, adj, u_R);
      DiagonalGaussian q = posterior_q(p, qry_hbar);
      z = reparameterize(q, normal_matrix(M, H, rng));
      log_pz = gaussian_log_density(prior, z);
      log_qz = gaussian_log_density(q, z);
    } else {
      z = Tensor::zeros({M, H});
      log_pz = Tensor::scalar(0.0);
      log_qz = Tensor::scalar(0.0);
    }

    stage = "global-latent";
    Tensor v = use_global ? global_latent(p, u_R) : Tensor::zeros({H});

    stage = "reconstruction";
    DiagonalGaussian pred = predict(p, z, v, u_M);
    std::vector<double> targets(M);
    for (std::size_t i = 0; i < M; ++i) targets[i] = data.examples[batch[i]].target;
    Tensor y({M, 1}, std::move(targets));
    log_py = gaussian_log_density(pred, y);

    stage = "objective";
    Tensor loss = neg(sub(add(log_py, log_pz), log_qz));

    if (grads) {
      stage = "backward";
      Gradients g = tape.backward(loss);
      grads->clear();
      for_each_param(p, [&](const char*, const Tensor& t) {
        const auto& gt = g.at(t);
        grads->insert(grads->end(), gt.begin(), gt.end());
      });
    }
    return {loss.item(), log_py.item(), log_pz.item(), log_qz.item()};
  } catch (const NumericError& e) {
    throw NumericError(std::string(e.what()) + " [elbo term: " + stage + "]");
  }
}

void adam_update(ModelParams& params, AdamState& state, std::span<const double> grads,
                 const Hyperparams& hp) {
  const std::size_t n = param_count(params);
  if (grads.size() != n)
    throw ContractError("adam_update: gradient size " + std::to_string(grads.size()) +
                        " does not match parameter count " + std::to_string(n));
  if (state.m.empty()) {
    state.m.assign(n, 0.0);
    state.v.assign(n, 0.0);
  } else if (state.m.size() != n) {
    throw ContractError("adam_update: optimizer state size mismatch");
  }
  constexpr double b1 = 0.9, b2 = 0.999, eps = 1e-8;
  ++state.t;
  const double bc1 = 1.0 - std::pow(b1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(b2, static_cast<double>(state.t));

  std::size_t off = 0;
  for_each_param(params, [&](const char* name, Tensor& t) {
    const bool frozen = hp.freeze_gamma && std::string_view(name) == "log_gamma";
    auto& vals = t.mutable_value();
    for (double& val : vals) {
      const double g = grads[off];
      state.m[off] = b1 * state.m[off] + (1.0 - b1) * g;
      state.v[off] = b2 * state.v[off] + (1.0 - b2) * g * g;
      if (!frozen) {
        const double mhat = state.m[off] / bc1;
        const double vhat = state.v[off] / bc2;
        val -= hp.lr * mhat / (std::sqrt(vhat) + eps);
      }
      ++off;
    }
  });
}

TrainResult train(std::span<const SeasonSeries> seasons, std::size_t horizon,
                  const Hyperparams& hp) {
  hp.validate();
  Datasets data = build_datasets(seasons, horizon, hp.min_prefix);
  const std::size_t N = data.examples.size();

  std::vector<std::size_t> idx(N);
  std::iota(idx.begin(), idx.end(), 0);
  Rng split_rng = Rng::derive(hp.seed, kSaltSplit);
  split_rng.shuffle(idx);
  std::size_t val_n = static_cast<std::size_t>(std::llround(hp.val_fraction * N));
  val_n = std::max<std::size_t>(val_n, 1);
  if (val_n >= N)
    throw ContractError("train: dataset too small for a validation split");
  std::vector<std::size_t> val_idx(idx.begin(), idx.begin() + val_n);
  std::vector<std::size_t> train_idx(idx.begin() + val_n, idx.end());
  std::sort(val_idx.begin(), val_idx.end());
  std::sort(train_idx.begin(), train_idx.end());

  Rng init_rng = Rng::derive(hp.seed, kSaltInit);
  ModelParams params = init_params(hp, init_rng);
  Rng train_rng = Rng::derive(hp.seed, kSaltTrain);
  AdamState adam;

  TrainResult result;
  result.best_val_loss = std::numeric_limits<double>::infinity();
  result.best_epoch = 0;
  ModelParams best = params;
  std::size_t since_best = 0;

  for (std::size_t epoch = 1; epoch <= hp.max_epochs; ++epoch) {
    try {
      std::vector<double> grads;
      ElboTerms tr = elbo_step(params, data, train_idx, hp, train_rng, &grads);
      adam_update(params, adam, grads, hp);

      // Common random numbers: the validation stream restarts every epoch so
      // successive validation losses differ only through the parameters.
      Rng val_rng = Rng::derive(hp.seed, kSaltVal);
      ElboTerms va = elbo_step(params, data, val_idx, hp, val_rng, nullptr);

      result.log.push_back({epoch, tr.loss, va.loss});
      if (va.loss < result.best_val_loss) {
        result.best_val_loss = va.loss;
        result.best_epoch = epoch;
        best = params;
        since_best = 0;
      } else if (++since_best >= hp.patience) {
        break;
      }
    } catch (const NumericError& e) {
      throw NumericError(std::string(e.what()) + " at epoch " + std::to_string(epoch));
    }
  }
  result.params = best;
  return result;
}

}  // namespace epifnp
