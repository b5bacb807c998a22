#pragma once

#include <span>
#include <vector>

#include "epifnp/model.hpp"
#include "epifnp/rng.hpp"

namespace epifnp {

// Equally weighted mixture of scalar Gaussians plus realized draws from it.
// `draws` keeps generation order; interval() caches a sorted copy.
struct PredictiveDistribution {
  std::vector<double> means;
  std::vector<double> logvars;
  std::vector<double> draws;

  double mixture_mean() const;  // exactly the average of component means

  // Not thread-safe on first call (fills the sort cache).
  mutable std::vector<double> sorted_draws;
};

struct IntervalResult {
  double lo, hi;
  bool low_sample;  // fewer than 100 draws: quantiles unstable
};

// Equal-tailed interval at quantiles (1-c)/2 and (1+c)/2 of the realized
// draws, linearly interpolated. c = 0 gives a zero-width interval at the
// median; c = 1 gives (min, max).
IntervalResult interval(const PredictiveDistribution& dist, double confidence);

// Monte-Carlo predictive mixture for one unseen prefix: each component
// samples reference and query embeddings, a hard Bernoulli parent vector,
// the local latent from its prior, the global latent, and the output
// Gaussian, then realizes draws_per draws.
// Rng consumption per component: reference noise (R*H), query noise (H),
// parent Bernoullis (R), z noise (H), output draws - with ablated stages
// skipped entirely.
PredictiveDistribution forecast(const ModelParams& params, const Hyperparams& hp,
                                std::span<const std::vector<double>> refs,
                                std::span<const double> prefix, std::size_t components,
                                std::size_t draws_per, Rng& rng);

// Autoregressive rollout of a 1-week-ahead model to horizon k_target:
// candidate sets Z_0..Z_k, each of the n_candidates iterations samples a
// sequence from the previous set, forecasts one week, and appends the drawn
// value. Selection consumes no rng while the candidate set has one element,
// so k_target = 1 reproduces forecast(components = n_candidates,
// draws_per = 1) draw-for-draw on the same rng stream.
PredictiveDistribution autoregressive_forecast(const ModelParams& params, const Hyperparams& hp,
                                               std::span<const std::vector<double>> refs,
                                               std::span<const double> prefix,
                                               std::size_t k_target, std::size_t n_candidates,
                                               Rng& rng);

// Undo training-time standardization: y -> y * scale + shift.
PredictiveDistribution destandardize(const PredictiveDistribution& dist, double shift,
                                     double scale);

}  // namespace epifnp
