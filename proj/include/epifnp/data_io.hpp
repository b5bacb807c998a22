#pragma once

#include <span>
#include <string>
#include <vector>

#include "epifnp/model.hpp"

namespace epifnp {

struct WiliRecord {
  std::string region;
  int year;    // epiweek year
  int week;    // epiweek 1..53
  double wili; // nonnegative percentage
};

struct ParseResult {
  std::vector<WiliRecord> records;  // sorted by epiweek
  std::vector<std::string> warnings;
};

// Strict schema: header `region,year,week,wili`, UTF-8, comma-separated.
// Malformed rows raise ContractError with the line number; an unknown region
// filter yields an empty result with a warning.
ParseResult parse_csv(const std::string& path, const std::string& region);

struct SeasonSeries {
  std::string id;              // e.g. "2003/04"
  int start_year;              // calendar year of season week 1 (week 21)
  std::vector<double> values;  // season weeks 1..T, T in {52, 53}
};

struct SegmentResult {
  std::vector<SeasonSeries> seasons;  // chronological
  std::vector<std::string> warnings;  // dropped incomplete head/tail seasons
};

// Cuts at calendar week 21; gaps inside a covered season are hard errors,
// partially covered head/tail seasons are dropped with warnings. A start
// year keeps week 53 iff the data contains it.
SegmentResult segment_seasons(std::span<const WiliRecord> records);

struct EvalPoint {
  std::size_t prefix_len;  // t: weeks fed to the model
  std::size_t target_idx;  // season week t + horizon (1-based)
  double target;
};

// Real-time protocol: targets are the season weeks whose calendar week runs
// from week 40 through season end (season weeks 20..T).
std::vector<EvalPoint> realtime_eval_points(const SeasonSeries& season, std::size_t horizon);

struct Checkpoint {
  Hyperparams hp;
  std::size_t horizon = 1;
  std::vector<std::string> train_seasons;
  double x_mean = 0.0;  // standardization constants (identity when disabled)
  double x_std = 1.0;
  ModelParams params;
};

// Versioned little-endian binary container; round-trips bit-exactly.
// Version mismatch or truncation raises CheckpointError.
void save_model(const std::string& path, const Checkpoint& ck);
Checkpoint load_model(const std::string& path);

}  // namespace epifnp
