#include "epifnp/model.hpp"

#include <cmath>

#include "epifnp/errors.hpp"

namespace epifnp {

const char* ablation_name(Ablation a) {
  switch (a) {
    case Ablation::none: return "none";
    case Ablation::no_local: return "no_local";
    case Ablation::no_global: return "no_global";
    case Ablation::deterministic_encoder: return "deterministic_encoder";
  }
  return "?";
}

Ablation ablation_from_name(const std::string& name) {
  if (name == "none") return Ablation::none;
  if (name == "no_local") return Ablation::no_local;
  if (name == "no_global") return Ablation::no_global;
  if (name == "deterministic_encoder") return Ablation::deterministic_encoder;
  throw ContractError("unknown ablation '" + name +
                      "' (expected none|no_local|no_global|deterministic_encoder)");
}

void Hyperparams::validate() const {
  if (hidden_dim == 0) throw ContractError("hidden_dim must be positive");
  if (input_dim == 0) throw ContractError("input_dim must be positive");
  if (lr <= 0.0) throw ContractError("learning rate must be positive");
  if (val_fraction <= 0.0 || val_fraction >= 0.5)
    throw ContractError("validation fraction must lie in (0, 0.5)");
  if (gamma_init <= 0.0) throw ContractError("gamma_init must be positive");
  if (tau <= 0.0) throw ContractError("gumbel temperature must be positive");
  if (mc_components == 0) throw ContractError("mc_components must be positive");
  if (draws_per_component == 0) throw ContractError("draws_per_component must be positive");
  if (min_prefix == 0) throw ContractError("min_prefix must be positive");
}

Tensor linear_apply(const Linear& l, const Tensor& x) {
  return add(matmul(x, l.W), l.b);
}

Tensor mlp2_apply(const Mlp2& m, const Tensor& x) {
  return linear_apply(m.l2, relu(linear_apply(m.l1, x)));
}

Tensor mlp3_apply(const Mlp3& m, const Tensor& x) {
  return linear_apply(m.l3, relu(linear_apply(m.l2, relu(linear_apply(m.l1, x)))));
}

namespace {

template <typename Params, typename F>
void visit_params(Params& p, const F& f) {
  f("gru.Wz", p.gru.Wz);
  f("gru.Uz", p.gru.Uz);
  f("gru.bz", p.gru.bz);
  f("gru.Wr", p.gru.Wr);
  f("gru.Ur", p.gru.Ur);
  f("gru.br", p.gru.br);
  f("gru.Wh", p.gru.Wh);
  f("gru.Uh", p.gru.Uh);
  f("gru.bh", p.gru.bh);
  f("attn.Wq", p.attn.Wq);
  f("attn.Wk", p.attn.Wk);
  f("attn.Wv", p.attn.Wv);
  f("g1.l1.W", p.g1.l1.W);
  f("g1.l1.b", p.g1.l1.b);
  f("g1.l2.W", p.g1.l2.W);
  f("g1.l2.b", p.g1.l2.b);
  f("g1.l3.W", p.g1.l3.W);
  f("g1.l3.b", p.g1.l3.b);
  f("g2.l1.W", p.g2.l1.W);
  f("g2.l1.b", p.g2.l1.b);
  f("g2.l2.W", p.g2.l2.W);
  f("g2.l2.b", p.g2.l2.b);
  f("g2.l3.W", p.g2.l3.W);
  f("g2.l3.b", p.g2.l3.b);
  f("log_gamma", p.log_gamma);
  f("h1.W", p.h1.W);
  f("h1.b", p.h1.b);
  f("h2.W", p.h2.W);
  f("h2.b", p.h2.b);
  f("global_attn.Wq", p.global_attn.Wq);
  f("global_attn.Wk", p.global_attn.Wk);
  f("global_attn.Wv", p.global_attn.Wv);
  f("d1.l1.W", p.d1.l1.W);
  f("d1.l1.b", p.d1.l1.b);
  f("d1.l2.W", p.d1.l2.W);
  f("d1.l2.b", p.d1.l2.b);
  f("d2.l1.W", p.d2.l1.W);
  f("d2.l1.b", p.d2.l1.b);
  f("d2.l2.W", p.d2.l2.W);
  f("d2.l2.b", p.d2.l2.b);
  f("q_post.W", p.q_post.W);
  f("q_post.b", p.q_post.b);
}

}  // namespace

void for_each_param(ModelParams& p, const std::function<void(const char*, Tensor&)>& f) {
  visit_params(p, f);
}

void for_each_param(const ModelParams& p,
                    const std::function<void(const char*, const Tensor&)>& f) {
  visit_params(p, f);
}

std::size_t param_count(const ModelParams& p) {
  std::size_t n = 0;
  for_each_param(p, [&](const char*, const Tensor& t) { n += t.numel(); });
  return n;
}

ModelParams init_params(const Hyperparams& hp, Rng& rng) {
  hp.validate();
  const std::size_t H = hp.hidden_dim;
  const std::size_t I = hp.input_dim;

  ModelParams p;
  auto mat = [](std::size_t r, std::size_t c) { return Tensor::zeros({r, c}); };
  auto vec = [](std::size_t n) { return Tensor::zeros({n}); };

  p.gru = {mat(I, H), mat(H, H), vec(H), mat(I, H), mat(H, H), vec(H),
           mat(I, H), mat(H, H), vec(H)};
  p.attn = {mat(H, H), mat(H, H), mat(H, H)};
  p.g1 = {{mat(H, H), vec(H)}, {mat(H, H), vec(H)}, {mat(H, H), vec(H)}};
  p.g2 = {{mat(H, H), vec(H)}, {mat(H, H), vec(H)}, {mat(H, H), vec(H)}};
  p.log_gamma = Tensor::scalar(0.0);
  p.h1 = {mat(H, H), vec(H)};
  p.h2 = {mat(H, H), vec(H)};
  p.global_attn = {mat(H, H), mat(H, H), mat(H, H)};
  p.d1 = {{mat(3 * H, 50), vec(50)}, {mat(50, 1), vec(1)}};
  p.d2 = {{mat(3 * H, 50), vec(50)}, {mat(50, 1), vec(1)}};
  p.q_post = {mat(H, 2 * H), vec(2 * H)};

  // Fill in the canonical visiting order so init is reproducible. Fan-in of a
  // {in, out} weight is `in`; biases share their layer's fan-in.
  double prev_bound = 1.0;
  for_each_param(p, [&](const char* name, Tensor& t) {
    std::string n(name);
    if (n == "log_gamma") {
      t.mutable_value()[0] = std::log(hp.gamma_init);
      return;
    }
    double bound;
    if (t.rank() == 2) {
      bound = 1.0 / std::sqrt(static_cast<double>(t.shape()[0]));
      prev_bound = bound;
    } else {
      bound = prev_bound;  // bias follows the matrix visited just before it
    }
    for (double& v : t.mutable_value()) v = (2.0 * rng.uniform() - 1.0) * bound;
  });
  return p;
}

ModelParams lift(const ModelParams& p, Tape& tape) {
  ModelParams out = p;
  for_each_param(out, [&](const char*, Tensor& t) { t = tape.leaf(t); });
  return out;
}

}  // namespace epifnp
