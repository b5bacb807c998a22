#include "epifnp/metrics.hpp"

#include <cmath>

#include "epifnp/errors.hpp"

namespace epifnp {

namespace {

constexpr double kLogScoreCap = 10.0;

double normal_cdf(double x, double mu, double sd) {
  return 0.5 * (1.0 + std::erf((x - mu) / (sd * 1.41421356237309504880)));
}

}  // namespace

double rmse(std::span<const EvaluationRecord> records) {
  if (records.empty()) throw ContractError("rmse: no records");
  double s = 0.0;
  for (const auto& r : records) {
    const double e = r.truth - r.dist.mixture_mean();
    s += e * e;
  }
  return std::sqrt(s / static_cast<double>(records.size()));
}

MapeResult mape(std::span<const EvaluationRecord> records) {
  if (records.empty()) throw ContractError("mape: no records");
  double s = 0.0;
  std::size_t n = 0, excluded = 0;
  for (const auto& r : records) {
    if (r.truth == 0.0) {
      ++excluded;
      continue;
    }
    s += std::abs(r.truth - r.dist.mixture_mean()) / std::abs(r.truth);
    ++n;
  }
  if (n == 0) throw ContractError("mape: every record has zero truth");
  return {s / static_cast<double>(n), excluded};
}

double interval_mass(const PredictiveDistribution& dist, double y) {
  if (dist.means.empty()) throw ContractError("interval_mass: no components");
  double mass = 0.0;
  for (std::size_t i = 0; i < dist.means.size(); ++i) {
    const double sd = std::exp(0.5 * dist.logvars[i]);
    mass += normal_cdf(y + 0.5, dist.means[i], sd) - normal_cdf(y - 0.5, dist.means[i], sd);
  }
  return mass / static_cast<double>(dist.means.size());
}

double log_score(std::span<const EvaluationRecord> records) {
  if (records.empty()) throw ContractError("log_score: no records");
  double s = 0.0;
  for (const auto& r : records) {
    const double mass = interval_mass(r.dist, r.truth);
    const double contrib =
        mass <= std::exp(-kLogScoreCap) ? kLogScoreCap : std::min(-std::log(mass), kLogScoreCap);
    s += contrib;
  }
  return s / static_cast<double>(records.size());
}

CalibrationCurve calibration_curve(std::span<const EvaluationRecord> records) {
  if (records.empty()) throw ContractError("calibration_curve: no records");
  CalibrationCurve curve;
  curve.confidence.reserve(101);
  curve.coverage.reserve(101);
  for (int i = 0; i <= 100; ++i) {
    const double c = static_cast<double>(i) / 100.0;
    std::size_t covered = 0;
    for (const auto& r : records) {
      const IntervalResult iv = interval(r.dist, c);
      if (iv.lo <= r.truth && r.truth <= iv.hi) ++covered;
    }
    curve.confidence.push_back(c);
    curve.coverage.push_back(static_cast<double>(covered) /
                             static_cast<double>(records.size()));
  }
  return curve;
}

double calibration_score(const CalibrationCurve& curve) {
  if (curve.confidence.size() != 101 || curve.coverage.size() != 101)
    throw ContractError("calibration_score: curve must cover the full 0.01 grid");
  double s = 0.0;
  for (std::size_t i = 0; i < 101; ++i)
    s += std::abs(curve.coverage[i] - curve.confidence[i]);
  return 0.01 * s;
}

}  // namespace epifnp
