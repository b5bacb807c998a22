#pragma once

#include <span>
#include <string>
#include <vector>

#include "epifnp/inference.hpp"

namespace epifnp {

struct EvaluationRecord {
  std::string season_id;
  std::size_t week;     // season week of the target
  std::size_t horizon;
  double truth;
  PredictiveDistribution dist;
};

// Point estimates are mixture means throughout.
double rmse(std::span<const EvaluationRecord> records);

struct MapeResult {
  double value;
  std::size_t excluded;  // zero-truth records skipped
};
MapeResult mape(std::span<const EvaluationRecord> records);

// Mean over records of min(-log m, 10) where m is the analytic mixture mass
// in [truth - 0.5, truth + 0.5].
double log_score(std::span<const EvaluationRecord> records);

// Probability mass a single distribution assigns to [y - 0.5, y + 0.5],
// averaged over its Gaussian components via the normal CDF.
double interval_mass(const PredictiveDistribution& dist, double y);

struct CalibrationCurve {
  std::vector<double> confidence;  // 0.00, 0.01, ..., 1.00
  std::vector<double> coverage;    // k(c) in [0, 1]
};

// k(c) = fraction of records whose truth falls inside the equal-tailed
// c-interval of its predictive distribution, over the 101-point grid.
CalibrationCurve calibration_curve(std::span<const EvaluationRecord> records);

// 0.01 * sum over the grid of |k(c) - c|  (discretized integral).
double calibration_score(const CalibrationCurve& curve);

}  // namespace epifnp
