#pragma once

#include <cstdint>
#include <iosfwd>
#include <optional>
#include <string>
#include <vector>

#include "epifnp/model.hpp"

namespace epifnp {

// Shared run description for `train`. Config-file lines and --set overrides
// go through the same strict key=value schema; unknown keys are rejected.
struct TrainConfig {
  std::string data;
  std::string region = "nat";
  std::size_t horizon = 1;
  std::string out = ".";
  std::vector<std::string> exclude_seasons;  // ids held out of training
  Hyperparams hp;
};

// Applies one schema entry (keys: data, region, horizon, out, seed, lr,
// max_epochs, patience, val_fraction, gamma_init, freeze_gamma, tau,
// mc_components, mc_draws, ablation, standardize, min_prefix, hidden_dim).
// Unknown keys or unparseable values raise ContractError.
void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value);

// Flat key=value file; '#' comments and blank lines allowed.
void load_config_file(TrainConfig& cfg, const std::string& path);

struct ForecastConfig {
  std::string model;
  std::string data;
  std::string region = "nat";
  std::string season;            // season id, e.g. "2014/15"
  std::size_t week = 0;          // as-of season week t; prefix = weeks 1..t
  std::size_t ar_horizon = 0;    // > 0 routes through autoregressive rollout
  std::size_t components = 0;    // 0: use the checkpoint's hyperparameters
  std::size_t draws_per = 0;     // 0: use the checkpoint's hyperparameters
  std::optional<std::uint64_t> seed;
  std::string draws_out;         // optional CSV of raw draws
};

struct EvaluateConfig {
  std::string model;
  std::string data;
  std::string region = "nat";
  std::vector<std::string> seasons;   // held-out season ids
  std::vector<std::size_t> horizons;  // k list; empty is an error
  bool ar = false;                    // rollout mode (requires a k = 1 model)
  std::size_t components = 0;
  std::size_t draws_per = 0;
  std::optional<std::uint64_t> seed;
  std::string out = ".";
};

// Each command throws ContractError / CheckpointError (usage: exit 2) or
// NumericError (runtime numeric failure: exit 3) and writes its outputs only
// after all inputs validate, so failures leave no partial artifacts.
void cmd_train(const TrainConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_forecast(const ForecastConfig& cfg, std::ostream& out, std::ostream& err);
void cmd_evaluate(const EvaluateConfig& cfg, std::ostream& out, std::ostream& err);

// Full argv-level entry point (without the program name); maps exceptions to
// exit statuses: 0 success, 2 usage/config error, 3 numeric failure.
int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace epifnp
