#pragma once

#include <optional>
#include <span>
#include <vector>

#include "epifnp/data_io.hpp"
#include "epifnp/model.hpp"
#include "epifnp/rng.hpp"

namespace epifnp {

struct TrainingExample {
  std::size_t season_idx;   // index into the season list
  std::size_t prefix_len;   // t: weeks observed
  double target;            // value at week t + k
};

struct Datasets {
  std::vector<TrainingExample> examples;      // M
  std::vector<std::vector<double>> refs;      // R: one full sequence per season
};

// Every (prefix, target) pair with min_prefix <= t <= T - k, plus the full
// sequences as the reference set.
Datasets build_datasets(std::span<const SeasonSeries> seasons, std::size_t horizon,
                        std::size_t min_prefix);

struct ElboTerms {
  double loss;        // negated ELBO
  double log_py;      // reconstruction
  double log_pz;      // local-latent prior
  double log_qz;      // variational posterior
};

// Single-sample negated-ELBO estimate over the batch. When `grads` is
// non-null the loss is built on a tape and flattened parameter gradients (in
// for_each_param order) are written there; otherwise evaluation is eager.
// Rng consumption order: reference noise, query noise, graph noise, z noise.
ElboTerms elbo_step(const ModelParams& params, const Datasets& data,
                    std::span<const std::size_t> batch, const Hyperparams& hp, Rng& rng,
                    std::vector<double>* grads);

struct AdamState {
  std::vector<double> m, v;
  std::size_t t = 0;
};

// Standard Adam (beta1 0.9, beta2 0.999, eps 1e-8) with bias correction over
// the flattened parameter vector; honors freeze_gamma.
void adam_update(ModelParams& params, AdamState& state, std::span<const double> grads,
                 const Hyperparams& hp);

struct EpochRecord {
  std::size_t epoch;
  double train_loss;
  double val_loss;
};

struct TrainResult {
  ModelParams params;                 // best-validation snapshot
  std::vector<EpochRecord> log;
  std::size_t best_epoch;
  double best_val_loss;
};

// Full-batch Adam on the negated ELBO with a seeded 5% validation split,
// per-epoch common-random-number validation loss, and early stopping.
TrainResult train(std::span<const SeasonSeries> seasons, std::size_t horizon,
                  const Hyperparams& hp);

}  // namespace epifnp
