#pragma once

#include <cstdint>
#include <functional>
#include <string>

#include "epifnp/rng.hpp"
#include "epifnp/tensor.hpp"

namespace epifnp {

enum class Ablation { none, no_local, no_global, deterministic_encoder };

const char* ablation_name(Ablation a);
Ablation ablation_from_name(const std::string& name);

struct Hyperparams {
  std::size_t hidden_dim = 50;  // GRU hidden size, embedding and latent dimension
  std::size_t input_dim = 1;    // one incidence value per week
  double lr = 1e-4;
  std::size_t max_epochs = 3000;
  std::size_t patience = 300;
  double val_fraction = 0.05;
  double gamma_init = 1.0;
  bool freeze_gamma = false;
  double tau = 0.3;                         // binary-concrete temperature
  std::size_t mc_components = 2000;         // mixture components per forecast
  std::size_t draws_per_component = 10;     // realized draws per component
  std::size_t min_prefix = 1;
  std::uint64_t seed = 42;
  Ablation ablation = Ablation::none;
  bool standardize = false;

  void validate() const;  // throws ContractError on out-of-range fields
};

// y = x W + b with x row-major {N, in} or a single {in} vector.
struct Linear {
  Tensor W;  // {in, out}
  Tensor b;  // {out}
};

struct Mlp2 {
  Linear l1, l2;  // rectifier between
};

struct Mlp3 {
  Linear l1, l2, l3;  // rectifiers between hidden layers
};

struct GruParams {
  Tensor Wz, Uz, bz;  // update gate
  Tensor Wr, Ur, br;  // reset gate
  Tensor Wh, Uh, bh;  // candidate
};

struct AttentionParams {
  Tensor Wq, Wk, Wv;  // {H, H} projections (single head)
};

struct ModelParams {
  GruParams gru;        // input_dim -> H
  AttentionParams attn; // sequence-summary attention
  Mlp3 g1, g2;          // embedding mean / log-variance heads, H -> H
  Tensor log_gamma;     // kernel bandwidth, gamma = exp(log_gamma) > 0
  Linear h1, h2;        // local-latent heads, H -> H, no activation
  AttentionParams global_attn;  // attention over reference embeddings
  Mlp2 d1, d2;          // predictive mean / log-variance heads, 3H -> 50 -> 1
  Linear q_post;        // posterior head, H -> 2H
};

Tensor linear_apply(const Linear& l, const Tensor& x);
Tensor mlp2_apply(const Mlp2& m, const Tensor& x);
Tensor mlp3_apply(const Mlp3& m, const Tensor& x);

// Visits every parameter tensor in a fixed, documented order. The order is
// load-bearing: optimizer state, checkpoints, and gradient flattening all
// index parameters by it.
void for_each_param(ModelParams& p, const std::function<void(const char*, Tensor&)>& f);
void for_each_param(const ModelParams& p,
                    const std::function<void(const char*, const Tensor&)>& f);

std::size_t param_count(const ModelParams& p);  // total scalar parameters

// Seeded uniform [-1/sqrt(fan_in), +1/sqrt(fan_in)] initialization; log_gamma
// starts at log(gamma_init) rather than randomly.
ModelParams init_params(const Hyperparams& hp, Rng& rng);

// Copy whose tensors are leaves on the given tape (gradient-tracked).
ModelParams lift(const ModelParams& p, Tape& tape);

}  // namespace epifnp
