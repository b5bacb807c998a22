#include "epifnp/cli.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <sstream>

#include <CLI11.hpp>

#include "epifnp/data_io.hpp"
#include "epifnp/errors.hpp"
#include "epifnp/inference.hpp"
#include "epifnp/metrics.hpp"
#include "epifnp/trainer.hpp"

namespace epifnp {

namespace {

constexpr std::uint64_t kSaltForecast = 11;
constexpr std::uint64_t kSaltEvalBase = 100000;  // + running record index

std::size_t parse_size(const std::string& s, const std::string& key) {
  std::size_t v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ContractError("config: bad value '" + s + "' for " + key);
  return v;
}

double parse_real(const std::string& s, const std::string& key) {
  if (s.empty()) throw ContractError("config: empty value for " + key);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    throw ContractError("config: bad value '" + s + "' for " + key);
  return v;
}

bool parse_bool(const std::string& s, const std::string& key) {
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ContractError("config: bad value '" + s + "' for " + key + " (want true/false)");
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r");
  return s.substr(b, e - b + 1);
}

struct LoadedSeasons {
  std::vector<SeasonSeries> seasons;
  std::vector<std::string> warnings;
};

LoadedSeasons load_seasons(const std::string& path, const std::string& region) {
  auto parsed = parse_csv(path, region);
  auto segmented = segment_seasons(parsed.records);
  LoadedSeasons out;
  out.seasons = std::move(segmented.seasons);
  out.warnings = std::move(parsed.warnings);
  out.warnings.insert(out.warnings.end(), segmented.warnings.begin(), segmented.warnings.end());
  return out;
}

void print_warnings(const std::vector<std::string>& warnings, std::ostream& err) {
  for (const auto& w : warnings) err << "warning: " << w << '\n';
}

const SeasonSeries& find_season(const std::vector<SeasonSeries>& seasons, const std::string& id) {
  for (const auto& s : seasons)
    if (s.id == id) return s;
  throw ContractError("season '" + id + "' not found in the data file");
}

std::vector<double> standardized(std::span<const double> vals, double mean, double sd) {
  std::vector<double> out(vals.begin(), vals.end());
  for (double& v : out) v = (v - mean) / sd;
  return out;
}

// Reference sequences in checkpoint order, standardized with the
// checkpoint's constants.
std::vector<std::vector<double>> build_refs(const Checkpoint& ck,
                                            const std::vector<SeasonSeries>& seasons) {
  std::vector<std::vector<double>> refs;
  refs.reserve(ck.train_seasons.size());
  for (const auto& id : ck.train_seasons) {
    const SeasonSeries& s = find_season(seasons, id);
    refs.push_back(standardized(s.values, ck.x_mean, ck.x_std));
  }
  return refs;
}

std::string fmt(double v) {
  std::ostringstream os;
  os << std::setprecision(17) << v;
  return os.str();
}

void write_draws_csv(const std::string& path, const PredictiveDistribution& dist) {
  std::ofstream f(path);
  if (!f) throw ContractError("cannot open '" + path + "' for writing");
  f << "draw\n";
  for (double d : dist.draws) f << fmt(d) << '\n';
}

}  // namespace

void apply_config_entry(TrainConfig& cfg, const std::string& key, const std::string& value) {
  if (key == "data") cfg.data = value;
  else if (key == "region") cfg.region = value;
  else if (key == "horizon") cfg.horizon = parse_size(value, key);
  else if (key == "out") cfg.out = value;
  else if (key == "seed") cfg.hp.seed = parse_size(value, key);
  else if (key == "lr") cfg.hp.lr = parse_real(value, key);
  else if (key == "max_epochs") cfg.hp.max_epochs = parse_size(value, key);
  else if (key == "patience") cfg.hp.patience = parse_size(value, key);
  else if (key == "val_fraction") cfg.hp.val_fraction = parse_real(value, key);
  else if (key == "gamma_init") cfg.hp.gamma_init = parse_real(value, key);
  else if (key == "freeze_gamma") cfg.hp.freeze_gamma = parse_bool(value, key);
  else if (key == "tau") cfg.hp.tau = parse_real(value, key);
  else if (key == "mc_components") cfg.hp.mc_components = parse_size(value, key);
  else if (key == "mc_draws") cfg.hp.draws_per_component = parse_size(value, key);
  else if (key == "ablation") cfg.hp.ablation = ablation_from_name(value);
  else if (key == "standardize") cfg.hp.standardize = parse_bool(value, key);
  else if (key == "min_prefix") cfg.hp.min_prefix = parse_size(value, key);
  else if (key == "hidden_dim") cfg.hp.hidden_dim = parse_size(value, key);
  else throw ContractError("config: unknown key '" + key + "'");
}

void load_config_file(TrainConfig& cfg, const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open config file '" + path + "'");
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto eq = t.find('=');
    if (eq == std::string::npos)
      throw ContractError("config '" + path + "' line " + std::to_string(line_no) +
                          ": expected key=value");
    apply_config_entry(cfg, trim(t.substr(0, eq)), trim(t.substr(eq + 1)));
  }
}

void cmd_train(const TrainConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.data.empty()) throw ContractError("train: a data file is required");
  if (cfg.horizon == 0) throw ContractError("train: horizon must be positive");
  Hyperparams hp = cfg.hp;
  hp.validate();

  auto loaded = load_seasons(cfg.data, cfg.region);
  print_warnings(loaded.warnings, err);
  for (const auto& id : cfg.exclude_seasons) {
    find_season(loaded.seasons, id);  // must exist to be excluded
    std::erase_if(loaded.seasons, [&](const SeasonSeries& s) { return s.id == id; });
  }
  if (loaded.seasons.empty())
    throw ContractError("no complete seasons for region '" + cfg.region + "'");

  double x_mean = 0.0, x_std = 1.0;
  std::vector<SeasonSeries> seasons = loaded.seasons;
  if (hp.standardize) {
    double sum = 0.0, sum_sq = 0.0;
    std::size_t n = 0;
    for (const auto& s : seasons)
      for (double v : s.values) {
        sum += v;
        sum_sq += v * v;
        ++n;
      }
    x_mean = sum / static_cast<double>(n);
    const double var = std::max(0.0, sum_sq / static_cast<double>(n) - x_mean * x_mean);
    x_std = std::sqrt(var);
    if (x_std < 1e-8)
      throw ContractError("train: data is (near-)constant, cannot standardize");
    for (auto& s : seasons) s.values = standardized(s.values, x_mean, x_std);
  }

  TrainResult result = train(seasons, cfg.horizon, hp);

  std::filesystem::create_directories(cfg.out);
  Checkpoint ck;
  ck.hp = hp;
  ck.horizon = cfg.horizon;
  for (const auto& s : loaded.seasons) ck.train_seasons.push_back(s.id);
  ck.x_mean = x_mean;
  ck.x_std = x_std;
  ck.params = result.params;
  const std::string model_path = cfg.out + "/model.bin";
  save_model(model_path, ck);

  const std::string log_path = cfg.out + "/train_log.csv";
  std::ofstream log(log_path);
  if (!log) throw ContractError("cannot open '" + log_path + "' for writing");
  log << "epoch,train_loss,val_loss\n";
  for (const auto& rec : result.log)
    log << rec.epoch << ',' << fmt(rec.train_loss) << ',' << fmt(rec.val_loss) << '\n';

  out << "trained " << result.log.size() << " epochs on " << seasons.size()
      << " seasons; best epoch " << result.best_epoch << " (validation loss "
      << std::setprecision(6) << result.best_val_loss << ")\n";
  out << "wrote " << model_path << " and " << log_path << '\n';
}

void cmd_forecast(const ForecastConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.week == 0)
    throw ContractError("forecast: as-of week must be at least 1 (season week)");
  Checkpoint ck = load_model(cfg.model);
  auto loaded = load_seasons(cfg.data, cfg.region);
  print_warnings(loaded.warnings, err);

  const SeasonSeries& season = find_season(loaded.seasons, cfg.season);
  if (cfg.week > season.values.size())
    throw ContractError("forecast: as-of week " + std::to_string(cfg.week) +
                        " exceeds season length " + std::to_string(season.values.size()));
  const auto refs = build_refs(ck, loaded.seasons);
  const std::vector<double> prefix = standardized(
      std::span<const double>(season.values.data(), cfg.week), ck.x_mean, ck.x_std);

  const std::size_t components = cfg.components ? cfg.components : ck.hp.mc_components;
  const std::size_t draws_per = cfg.draws_per ? cfg.draws_per : ck.hp.draws_per_component;
  Rng rng = Rng::derive(cfg.seed.value_or(ck.hp.seed), kSaltForecast);

  std::size_t horizon = ck.horizon;
  const char* mode = "direct";
  PredictiveDistribution dist;
  if (cfg.ar_horizon > 0) {
    if (ck.horizon != 1)
      throw ContractError("forecast: autoregressive rollout requires a model trained "
                          "for horizon 1 (this one was trained for horizon " +
                          std::to_string(ck.horizon) + ")");
    dist = autoregressive_forecast(ck.params, ck.hp, refs, prefix, cfg.ar_horizon,
                                   components, rng);
    horizon = cfg.ar_horizon;
    mode = "ar";
  } else {
    dist = forecast(ck.params, ck.hp, refs, prefix, components, draws_per, rng);
  }
  dist = destandardize(dist, ck.x_mean, ck.x_std);

  out << "season," << season.id << '\n';
  out << "as_of_week," << cfg.week << '\n';
  out << "horizon," << horizon << '\n';
  out << "target_week," << cfg.week + horizon << '\n';
  out << "mode," << mode << '\n';
  out << "components," << dist.means.size() << '\n';
  out << "total_draws," << dist.draws.size() << '\n';
  out << "mean," << fmt(dist.mixture_mean()) << '\n';
  bool low_sample = false;
  for (double c : {0.50, 0.80, 0.90, 0.95}) {
    const IntervalResult iv = interval(dist, c);
    low_sample = low_sample || iv.low_sample;
    const int pct = static_cast<int>(std::lround(c * 100));
    out << "interval_" << pct << "_lo," << fmt(iv.lo) << '\n';
    out << "interval_" << pct << "_hi," << fmt(iv.hi) << '\n';
  }
  if (low_sample)
    err << "warning: fewer than 100 draws; interval endpoints are unstable\n";
  if (!cfg.draws_out.empty()) write_draws_csv(cfg.draws_out, dist);
}

void cmd_evaluate(const EvaluateConfig& cfg, std::ostream& out, std::ostream& err) {
  if (cfg.horizons.empty())
    throw ContractError("evaluate: at least one horizon is required");
  for (std::size_t k : cfg.horizons)
    if (k == 0) throw ContractError("evaluate: horizons must be positive");
  if (cfg.seasons.empty())
    throw ContractError("evaluate: at least one test season is required");

  Checkpoint ck = load_model(cfg.model);
  if (cfg.ar) {
    if (ck.horizon != 1)
      throw ContractError("evaluate: --ar requires a model trained for horizon 1 "
                          "(this one was trained for horizon " +
                          std::to_string(ck.horizon) + ")");
  } else {
    for (std::size_t k : cfg.horizons)
      if (k != ck.horizon)
        throw ContractError("evaluate: model was trained for horizon " +
                            std::to_string(ck.horizon) + ", got horizon " +
                            std::to_string(k) + " (use --ar for other horizons)");
  }

  auto loaded = load_seasons(cfg.data, cfg.region);
  print_warnings(loaded.warnings, err);
  for (const auto& id : cfg.seasons) {
    find_season(loaded.seasons, id);  // must exist
    if (std::find(ck.train_seasons.begin(), ck.train_seasons.end(), id) !=
        ck.train_seasons.end())
      throw ContractError("evaluate: season '" + id + "' overlaps the training set");
  }
  const auto refs = build_refs(ck, loaded.seasons);

  const std::size_t components = cfg.components ? cfg.components : ck.hp.mc_components;
  const std::size_t draws_per = cfg.draws_per ? cfg.draws_per : ck.hp.draws_per_component;
  const std::uint64_t seed = cfg.seed.value_or(ck.hp.seed);

  std::filesystem::create_directories(cfg.out);
  const std::string metrics_path = cfg.out + "/metrics.csv";
  std::ofstream metrics_file(metrics_path);
  if (!metrics_file) throw ContractError("cannot open '" + metrics_path + "' for writing");
  metrics_file << "horizon,rmse,mape,ls,cs\n";

  std::size_t record_idx = 0;
  for (std::size_t k : cfg.horizons) {
    std::vector<EvaluationRecord> records;
    for (const auto& id : cfg.seasons) {
      const SeasonSeries& season = find_season(loaded.seasons, id);
      for (const EvalPoint& pt : realtime_eval_points(season, k)) {
        Rng rng = Rng::derive(seed, kSaltEvalBase + record_idx);
        ++record_idx;
        const std::vector<double> prefix = standardized(
            std::span<const double>(season.values.data(), pt.prefix_len), ck.x_mean,
            ck.x_std);
        PredictiveDistribution dist =
            cfg.ar ? autoregressive_forecast(ck.params, ck.hp, refs, prefix, k,
                                             components, rng)
                   : forecast(ck.params, ck.hp, refs, prefix, components, draws_per, rng);
        records.push_back({id, pt.target_idx, k,
                           pt.target, destandardize(dist, ck.x_mean, ck.x_std)});
      }
    }
    if (records.empty())
      throw ContractError("evaluate: no evaluation points at horizon " + std::to_string(k));

    const double r = rmse(records);
    const MapeResult m = mape(records);
    const double ls = log_score(records);
    const CalibrationCurve curve = calibration_curve(records);
    const double cs = calibration_score(curve);
    metrics_file << k << ',' << fmt(r) << ',' << fmt(m.value) << ',' << fmt(ls) << ','
                 << fmt(cs) << '\n';

    const std::string curve_path = cfg.out + "/calibration_k" + std::to_string(k) + ".csv";
    std::ofstream curve_file(curve_path);
    if (!curve_file) throw ContractError("cannot open '" + curve_path + "' for writing");
    curve_file << "confidence,coverage\n";
    for (std::size_t i = 0; i < curve.confidence.size(); ++i)
      curve_file << fmt(curve.confidence[i]) << ',' << fmt(curve.coverage[i]) << '\n';

    double mean_cov = 0.0;
    for (double c : curve.coverage) mean_cov += c;
    mean_cov /= static_cast<double>(curve.coverage.size());
    const bool over_wide = cs > 0.4 && mean_cov > 0.9;

    out << "horizon " << k << ": rmse=" << std::setprecision(6) << r
        << " mape=" << m.value << " ls=" << ls << " cs=" << cs;
    if (over_wide) out << "  [over-wide intervals]";
    out << '\n';
    if (m.excluded > 0)
      err << "warning: mape skipped " << m.excluded << " zero-truth records at horizon "
          << k << '\n';
  }
  out << "wrote " << metrics_path << '\n';
}

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Probabilistic epidemic forecasting with a functional neural process"};
  app.require_subcommand(1);

  // --- train ---------------------------------------------------------------
  auto* train_cmd = app.add_subcommand("train", "Fit a model and write a checkpoint");
  std::string t_config, t_data, t_region, t_out;
  std::size_t t_horizon = 0;
  std::uint64_t t_seed = 0;
  std::vector<std::string> t_sets;
  train_cmd->add_option("--config", t_config, "key=value config file");
  train_cmd->add_option("--data", t_data, "wILI CSV file");
  train_cmd->add_option("--region", t_region, "region to select (default nat)");
  train_cmd->add_option("--horizon", t_horizon, "forecast horizon k in weeks");
  train_cmd->add_option("--out", t_out, "output directory");
  train_cmd->add_option("--seed", t_seed, "rng seed");
  std::vector<std::string> t_exclude;
  train_cmd->add_option("--exclude-seasons", t_exclude, "season ids to hold out")
      ->delimiter(',');
  train_cmd->add_option("--set", t_sets, "extra key=value overrides (repeatable)");

  // --- forecast ------------------------------------------------------------
  auto* fc_cmd = app.add_subcommand("forecast", "Forecast from a checkpoint");
  ForecastConfig fc;
  std::uint64_t f_seed = 0;
  fc_cmd->add_option("--model", fc.model, "model checkpoint")->required();
  fc_cmd->add_option("--data", fc.data, "wILI CSV file")->required();
  fc_cmd->add_option("--region", fc.region, "region to select");
  fc_cmd->add_option("--season", fc.season, "season id, e.g. 2014/15")->required();
  fc_cmd->add_option("--week", fc.week, "as-of season week (prefix length)")->required();
  fc_cmd->add_option("--ar", fc.ar_horizon, "autoregressive rollout to this horizon");
  fc_cmd->add_option("--components", fc.components, "mixture components");
  fc_cmd->add_option("--draws-per", fc.draws_per, "draws per component");
  auto* f_seed_opt = fc_cmd->add_option("--seed", f_seed, "rng seed override");
  fc_cmd->add_option("--draws", fc.draws_out, "write raw draws to this CSV file");

  // --- evaluate ------------------------------------------------------------
  auto* ev_cmd = app.add_subcommand("evaluate", "Score a checkpoint on held-out seasons");
  EvaluateConfig ev;
  std::uint64_t e_seed = 0;
  ev_cmd->add_option("--model", ev.model, "model checkpoint")->required();
  ev_cmd->add_option("--data", ev.data, "wILI CSV file")->required();
  ev_cmd->add_option("--region", ev.region, "region to select");
  ev_cmd->add_option("--seasons", ev.seasons, "held-out season ids")
      ->required()
      ->delimiter(',');
  ev_cmd->add_option("--horizons", ev.horizons, "horizons to score")->delimiter(',');
  ev_cmd->add_flag("--ar", ev.ar, "roll a k=1 model out autoregressively");
  ev_cmd->add_option("--components", ev.components, "mixture components");
  ev_cmd->add_option("--draws-per", ev.draws_per, "draws per component");
  auto* e_seed_opt = ev_cmd->add_option("--seed", e_seed, "rng seed override");
  ev_cmd->add_option("--out", ev.out, "output directory");

  std::vector<const char*> argv;
  argv.reserve(args.size() + 1);
  argv.push_back("epifnp");
  for (const auto& a : args) argv.push_back(a.c_str());
  try {
    app.parse(static_cast<int>(argv.size()), argv.data());
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? 0 : 2;
  }

  try {
    if (train_cmd->parsed()) {
      TrainConfig cfg;
      if (!t_config.empty()) load_config_file(cfg, t_config);
      for (const auto& kv : t_sets) {
        const auto eq = kv.find('=');
        if (eq == std::string::npos)
          throw ContractError("--set expects key=value, got '" + kv + "'");
        apply_config_entry(cfg, trim(kv.substr(0, eq)), trim(kv.substr(eq + 1)));
      }
      if (train_cmd->count("--data")) cfg.data = t_data;
      if (train_cmd->count("--region")) cfg.region = t_region;
      if (train_cmd->count("--horizon")) cfg.horizon = t_horizon;
      if (train_cmd->count("--out")) cfg.out = t_out;
      if (train_cmd->count("--seed")) cfg.hp.seed = t_seed;
      if (train_cmd->count("--exclude-seasons")) cfg.exclude_seasons = t_exclude;
      cmd_train(cfg, out, err);
    } else if (fc_cmd->parsed()) {
      if (f_seed_opt->count()) fc.seed = f_seed;
      cmd_forecast(fc, out, err);
    } else if (ev_cmd->parsed()) {
      if (e_seed_opt->count()) ev.seed = e_seed;
      cmd_evaluate(ev, out, err);
    }
    return 0;
  } catch (const NumericError& e) {
    err << "numeric error: " << e.what() << '\n';
    return 3;
  } catch (const ContractError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  } catch (const CheckpointError& e) {
    err << "error: " << e.what() << '\n';
    return 2;
  }
}

}  // namespace epifnp
