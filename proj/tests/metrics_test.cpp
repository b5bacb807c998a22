#include <cmath>
#include <vector>

#include <doctest.h>

#include "epifnp/errors.hpp"
#include "epifnp/metrics.hpp"
#include "epifnp/rng.hpp"
#include "oracles.hpp"

using namespace epifnp;

namespace {

// A record whose distribution is a single Gaussian component with draws
// supplied explicitly.
EvaluationRecord rec(double truth, double mean, double logvar, std::vector<double> draws) {
  EvaluationRecord r;
  r.season_id = "t";
  r.week = 1;
  r.horizon = 1;
  r.truth = truth;
  r.dist.means = {mean};
  r.dist.logvars = {logvar};
  r.dist.draws = std::move(draws);
  return r;
}

}  // namespace

TEST_CASE("rmse of fixed errors") {
  std::vector<EvaluationRecord> rs;
  rs.push_back(rec(3.0, 0.0, 0.0, {0.0}));  // error 3
  rs.push_back(rec(0.0, 4.0, 0.0, {0.0}));  // error 4
  CHECK(rmse(rs) == doctest::Approx(std::sqrt(12.5)).epsilon(1e-12));
  CHECK_THROWS_AS(rmse(std::vector<EvaluationRecord>{}), ContractError);
}

TEST_CASE("mape skips zero truths and reports them") {
  std::vector<EvaluationRecord> rs;
  rs.push_back(rec(2.0, 1.5, 0.0, {0.0}));  // 0.25
  rs.push_back(rec(4.0, 2.0, 0.0, {0.0}));  // 0.5
  rs.push_back(rec(0.0, 9.0, 0.0, {0.0}));  // excluded
  MapeResult m = mape(rs);
  CHECK(m.value == doctest::Approx(0.375).epsilon(1e-12));
  CHECK(m.excluded == 1);

  std::vector<EvaluationRecord> zeros;
  zeros.push_back(rec(0.0, 1.0, 0.0, {0.0}));
  CHECK_THROWS_AS(mape(zeros), ContractError);
}

TEST_CASE("log score of the standard normal at zero is the analytic value") {
  std::vector<EvaluationRecord> rs;
  rs.push_back(rec(0.0, 0.0, 0.0, {0.0}));
  const double phi = 0.5 * (1.0 + std::erf(0.5 / std::sqrt(2.0)));
  const double want = -std::log(phi - (1.0 - phi));  // -log(Phi(.5) - Phi(-.5))
  CHECK(log_score(rs) == doctest::Approx(want).epsilon(1e-12));
  CHECK(log_score(rs) == doctest::Approx(0.95991).epsilon(1e-4));
}

TEST_CASE("log score agrees with Monte-Carlo band mass") {
  Rng rng(77);
  const int N = 100000;
  int inside = 0;
  for (int i = 0; i < N; ++i) {
    const double x = rng.normal();
    if (x >= -0.5 && x <= 0.5) ++inside;
  }
  const double mc = -std::log(static_cast<double>(inside) / N);
  std::vector<EvaluationRecord> rs;
  rs.push_back(rec(0.0, 0.0, 0.0, {0.0}));
  CHECK(log_score(rs) == doctest::Approx(mc).epsilon(5e-3));
}

TEST_CASE("log score caps hopeless forecasts at exactly 10") {
  std::vector<EvaluationRecord> rs;
  rs.push_back(rec(100.0, 0.0, std::log(0.01), {0.0}));  // mass ~ 0
  CHECK(log_score(rs) == 10.0);

  // Scores below the cap pass through -log(mass) untouched.
  std::vector<EvaluationRecord> mid;
  mid.push_back(rec(0.0, 0.0, 0.0, {0.0}));
  const double ls = log_score(mid);
  CHECK(ls < 10.0);
  CHECK(ls > 0.0);
}

TEST_CASE("interval mass averages component masses and matches sampling") {
  PredictiveDistribution d;
  d.means = {-1.0, 2.0};
  d.logvars = {0.0, std::log(2.25)};
  d.draws = {0.0};

  auto cdf = [](double x, double mu, double sd) {
    return 0.5 * (1.0 + std::erf((x - mu) / (sd * std::sqrt(2.0))));
  };
  const double y = 0.4;
  const double want = 0.5 * ((cdf(y + 0.5, -1.0, 1.0) - cdf(y - 0.5, -1.0, 1.0)) +
                             (cdf(y + 0.5, 2.0, 1.5) - cdf(y - 0.5, 2.0, 1.5)));
  CHECK(interval_mass(d, y) == doctest::Approx(want).epsilon(1e-12));

  Rng rng(99);
  const int N = 200000;
  int inside = 0;
  for (int i = 0; i < N; ++i) {
    const bool first = rng.uniform() < 0.5;
    const double x = first ? -1.0 + rng.normal() : 2.0 + 1.5 * rng.normal();
    if (x >= y - 0.5 && x <= y + 0.5) ++inside;
  }
  CHECK(interval_mass(d, y) ==
        doctest::Approx(static_cast<double>(inside) / N).epsilon(5e-3));
}

TEST_CASE("calibration score of the two degenerate forecasters is 0.505") {
  // Never covered: the truth sits far outside every draw.
  std::vector<EvaluationRecord> never;
  never.push_back(rec(1e9, 0.0, 0.0, {-1.0, 0.0, 1.0}));
  CalibrationCurve c0 = calibration_curve(never);
  for (double k : c0.coverage) CHECK(k == 0.0);
  CHECK(calibration_score(c0) == doctest::Approx(0.505).epsilon(1e-12));

  // Always covered: the truth is the exact median, inside even the c = 0
  // point interval.
  std::vector<EvaluationRecord> always;
  always.push_back(rec(2.0, 0.0, 0.0, {1.0, 2.0, 3.0}));
  CalibrationCurve c1 = calibration_curve(always);
  for (double k : c1.coverage) CHECK(k == 1.0);
  CHECK(calibration_score(c1) == doctest::Approx(0.505).epsilon(1e-12));
}

TEST_CASE("a perfectly calibrated curve scores zero") {
  CalibrationCurve curve;
  for (int i = 0; i <= 100; ++i) {
    curve.confidence.push_back(i / 100.0);
    curve.coverage.push_back(i / 100.0);
  }
  CHECK(calibration_score(curve) == 0.0);

  CalibrationCurve bad;
  bad.confidence = {0.0, 1.0};
  bad.coverage = {0.0, 1.0};
  CHECK_THROWS_AS(calibration_score(bad), ContractError);
}

TEST_CASE("empirical coverage is monotone in the confidence level") {
  Rng rng(123);
  std::vector<EvaluationRecord> rs;
  for (int i = 0; i < 40; ++i) {
    std::vector<double> draws;
    for (int d = 0; d < 150; ++d) draws.push_back(rng.normal() * 2.0);
    rs.push_back(rec(rng.normal() * 2.5, 0.0, 0.0, std::move(draws)));
  }
  CalibrationCurve curve = calibration_curve(rs);
  REQUIRE(curve.coverage.size() == 101);
  for (std::size_t i = 1; i < curve.coverage.size(); ++i)
    CHECK(curve.coverage[i] >= curve.coverage[i - 1]);
  CHECK(curve.coverage[100] >= curve.coverage[0]);
}

TEST_CASE("a self-consistent forecaster is nearly calibrated") {
  // Truths drawn from each record's own predictive distribution: coverage
  // must track confidence up to Monte-Carlo error.
  Rng rng(321);
  std::vector<EvaluationRecord> rs;
  for (int i = 0; i < 1500; ++i) {
    const double mu = 4.0 * rng.uniform() - 2.0;
    const double sd = 0.5 + 1.5 * rng.uniform();
    std::vector<double> draws;
    for (int d = 0; d < 300; ++d) draws.push_back(mu + sd * rng.normal());
    const double truth = mu + sd * rng.normal();
    rs.push_back(rec(truth, mu, 2.0 * std::log(sd), std::move(draws)));
  }
  const double cs = calibration_score(calibration_curve(rs));
  CHECK(cs < 0.05);
}
