#include <cmath>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include <doctest.h>

#include "epifnp/cli.hpp"
#include "epifnp/data_io.hpp"
#include "epifnp/model.hpp"
#include "epifnp/rng.hpp"

using namespace epifnp;
namespace fs = std::filesystem;

namespace {

fs::path scratch_dir() {
  static const fs::path dir = [] {
    fs::path d = fs::temp_directory_path() / "epifnp_cli_test";
    fs::remove_all(d);
    fs::create_directories(d);
    return d;
  }();
  return dir;
}

// Five bump-shaped seasons, 2003/04 .. 2007/08, T = 52 each.
std::string fixture_csv() {
  static const std::string path = [] {
    const fs::path p = scratch_dir() / "wili.csv";
    std::ofstream f(p);
    f << "region,year,week,wili\n";
    Rng rng(404);
    for (int y = 2003; y <= 2007; ++y) {
      const double peak = 22.0 + 4.0 * rng.uniform();
      const double amp = 2.0 + rng.uniform();
      int t = 0;
      auto emit = [&](int year, int week) {
        const double d = (t + 1 - peak) / 5.0;
        const double v = 0.8 + amp * std::exp(-0.5 * d * d) + 0.05 * rng.uniform();
        f << "nat," << year << ',' << week << ',' << v << '\n';
        ++t;
      };
      for (int w = 21; w <= 52; ++w) emit(y, w);
      for (int w = 1; w <= 20; ++w) emit(y + 1, w);
    }
    return p.string();
  }();
  return path;
}

std::string slurp(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  REQUIRE_MESSAGE(f.good(), "missing file: ", p.string());
  return {std::istreambuf_iterator<char>(f), std::istreambuf_iterator<char>()};
}

int run(const std::vector<std::string>& args, std::string* out_text = nullptr,
        std::string* err_text = nullptr) {
  std::ostringstream out, err;
  const int code = run_cli(args, out, err);
  if (out_text) *out_text = out.str();
  if (err_text) *err_text = err.str();
  return code;
}

// Parses a forecast document (key,value per line) into a map.
std::map<std::string, std::string> parse_doc(const std::string& text) {
  std::map<std::string, std::string> kv;
  std::istringstream in(text);
  std::string line;
  while (std::getline(in, line)) {
    const auto comma = line.find(',');
    if (comma != std::string::npos) kv[line.substr(0, comma)] = line.substr(comma + 1);
  }
  return kv;
}

// Small, fast training run shared by the downstream subcommand tests.
const std::string& trained_model() {
  static const std::string path = [] {
    const fs::path out = scratch_dir() / "shared_model";
    std::string err;
    const int code = run({"train", "--data", fixture_csv(), "--out", out.string(),
                          "--exclude-seasons", "2007/08", "--seed", "5",
                          "--set", "hidden_dim=6", "--set", "max_epochs=8",
                          "--set", "mc_components=30", "--set", "mc_draws=10"},
                         nullptr, &err);
    REQUIRE_MESSAGE(code == 0, err);
    return (out / "model.bin").string();
  }();
  return path;
}

}  // namespace

TEST_CASE("train writes a checkpoint and a loss log") {
  std::string out_text;
  const fs::path out = scratch_dir() / "train_basic";
  const int code = run({"train", "--data", fixture_csv(), "--out", out.string(),
                        "--seed", "3", "--set", "hidden_dim=6", "--set", "max_epochs=4"},
                       &out_text);
  CHECK(code == 0);
  CHECK(out_text.find("5 seasons") != std::string::npos);
  CHECK(out_text.find("wrote ") != std::string::npos);

  Checkpoint ck = load_model((out / "model.bin").string());
  CHECK(ck.hp.hidden_dim == 6);
  CHECK(ck.hp.seed == 3);
  CHECK(ck.horizon == 1);
  CHECK(ck.train_seasons.size() == 5);
  CHECK(ck.train_seasons.front() == "2003/04");

  std::istringstream log(slurp(out / "train_log.csv"));
  std::string line;
  REQUIRE(std::getline(log, line));
  CHECK(line == "epoch,train_loss,val_loss");
  std::size_t rows = 0;
  while (std::getline(log, line)) {
    CHECK(line.rfind(std::to_string(rows + 1) + ",", 0) == 0);
    ++rows;
  }
  CHECK(rows == 4);
}

TEST_CASE("training is reproducible byte for byte") {
  const std::vector<std::string> base = {
      "train", "--data", fixture_csv(), "--seed", "11",
      "--set", "hidden_dim=5", "--set", "max_epochs=5"};
  const fs::path a = scratch_dir() / "repro_a", b = scratch_dir() / "repro_b";
  auto with_out = [&](const fs::path& p) {
    auto v = base;
    v.push_back("--out");
    v.push_back(p.string());
    return v;
  };
  REQUIRE(run(with_out(a)) == 0);
  REQUIRE(run(with_out(b)) == 0);
  CHECK(slurp(a / "model.bin") == slurp(b / "model.bin"));
  CHECK(slurp(a / "train_log.csv") == slurp(b / "train_log.csv"));
}

TEST_CASE("config file, --set and flags stack in precedence order") {
  const fs::path cfg_path = scratch_dir() / "run.cfg";
  {
    std::ofstream f(cfg_path);
    f << "# comment line\n\n"
      << "data=" << fixture_csv() << "\n"
      << "horizon=2\n"
      << "lr=0.1\n"
      << "max_epochs=3\n"
      << "hidden_dim=4\n";
  }

  SUBCASE("--set overrides the file") {
    const fs::path out = scratch_dir() / "prec_set";
    REQUIRE(run({"train", "--config", cfg_path.string(), "--out", out.string(),
                 "--set", "lr=0.05", "--set", "seed=9"}) == 0);
    Checkpoint ck = load_model((out / "model.bin").string());
    CHECK(ck.horizon == 2);        // from the file
    CHECK(ck.hp.lr == 0.05);       // --set wins
    CHECK(ck.hp.seed == 9);
    CHECK(ck.hp.max_epochs == 3);
    CHECK(ck.hp.hidden_dim == 4);
  }
  SUBCASE("explicit flags override --set and the file") {
    const fs::path out = scratch_dir() / "prec_flag";
    REQUIRE(run({"train", "--config", cfg_path.string(), "--out", out.string(),
                 "--horizon", "1", "--set", "horizon=3"}) == 0);
    Checkpoint ck = load_model((out / "model.bin").string());
    CHECK(ck.horizon == 1);
  }
  SUBCASE("unknown keys are rejected") {
    std::string err;
    CHECK(run({"train", "--data", fixture_csv(), "--set", "learning_rate=0.1"},
              nullptr, &err) == 2);
    CHECK(err.find("unknown key") != std::string::npos);
    CHECK(run({"train", "--data", fixture_csv(), "--set", "lr=fast"}, nullptr, &err) == 2);
  }
}

TEST_CASE("usage failures exit 2 and leave no artifacts") {
  std::string err;
  const fs::path out = scratch_dir() / "no_outputs";
  CHECK(run({"train", "--data", (scratch_dir() / "absent.csv").string(),
             "--out", out.string()},
            nullptr, &err) == 2);
  CHECK(err.find("error:") != std::string::npos);
  CHECK(!fs::exists(out / "model.bin"));
  CHECK(!fs::exists(out / "train_log.csv"));

  CHECK(run({"bogus-subcommand"}, nullptr, &err) == 2);
  CHECK(run({"train"}, nullptr, &err) == 2);  // --data is required
}

TEST_CASE("a divergent run reports a numeric failure") {
  std::string err;
  const int code = run({"train", "--data", fixture_csv(),
                        "--out", (scratch_dir() / "diverge").string(),
                        "--set", "hidden_dim=4", "--set", "lr=1e12",
                        "--set", "max_epochs=4"},
                       nullptr, &err);
  CHECK(code == 3);
  CHECK(err.find("numeric error:") != std::string::npos);
}

TEST_CASE("forecast emits a key,value document") {
  std::string out_text, err_text;
  const int code = run({"forecast", "--model", trained_model(), "--data", fixture_csv(),
                        "--season", "2007/08", "--week", "12", "--seed", "7"},
                       &out_text, &err_text);
  REQUIRE_MESSAGE(code == 0, err_text);
  auto kv = parse_doc(out_text);
  CHECK(kv.at("season") == "2007/08");
  CHECK(kv.at("as_of_week") == "12");
  CHECK(kv.at("horizon") == "1");
  CHECK(kv.at("target_week") == "13");
  CHECK(kv.at("mode") == "direct");
  CHECK(kv.at("components") == "30");
  CHECK(kv.at("total_draws") == "300");
  CHECK(std::isfinite(std::stod(kv.at("mean"))));
  for (const char* c : {"50", "80", "90", "95"}) {
    const double lo = std::stod(kv.at(std::string("interval_") + c + "_lo"));
    const double hi = std::stod(kv.at(std::string("interval_") + c + "_hi"));
    CHECK(lo <= hi);
  }
  // Wider nominal coverage cannot narrow the interval.
  CHECK(std::stod(kv.at("interval_95_lo")) <= std::stod(kv.at("interval_50_lo")));
  CHECK(std::stod(kv.at("interval_95_hi")) >= std::stod(kv.at("interval_50_hi")));

  SUBCASE("invalid as-of weeks are rejected") {
    std::string err;
    CHECK(run({"forecast", "--model", trained_model(), "--data", fixture_csv(),
               "--season", "2007/08", "--week", "0"},
              nullptr, &err) == 2);
    CHECK(run({"forecast", "--model", trained_model(), "--data", fixture_csv(),
               "--season", "2007/08", "--week", "600"},
              nullptr, &err) == 2);
    CHECK(run({"forecast", "--model", trained_model(), "--data", fixture_csv(),
               "--season", "1999/00", "--week", "5"},
              nullptr, &err) == 2);
    CHECK(err.find("1999/00") != std::string::npos);
  }
}

TEST_CASE("a one-step rollout reproduces the direct forecast exactly") {
  const fs::path d_direct = scratch_dir() / "draws_direct.csv";
  const fs::path d_ar = scratch_dir() / "draws_ar.csv";
  std::string direct_text, ar_text;
  // A rollout keeps one trajectory per mixture component, so the direct run
  // must use one draw per component for the streams to line up.
  REQUIRE(run({"forecast", "--model", trained_model(), "--data", fixture_csv(),
               "--season", "2007/08", "--week", "15", "--seed", "21",
               "--components", "160", "--draws-per", "1",
               "--draws", d_direct.string()},
              &direct_text) == 0);
  REQUIRE(run({"forecast", "--model", trained_model(), "--data", fixture_csv(),
               "--season", "2007/08", "--week", "15", "--seed", "21",
               "--components", "160", "--ar", "1",
               "--draws", d_ar.string()},
              &ar_text) == 0);
  CHECK(slurp(d_direct) == slurp(d_ar));
  auto direct_kv = parse_doc(direct_text);
  auto ar_kv = parse_doc(ar_text);
  CHECK(direct_kv.at("mean") == ar_kv.at("mean"));
  CHECK(direct_kv.at("mode") == "direct");
  CHECK(ar_kv.at("mode") == "ar");

  std::istringstream draws(slurp(d_direct));
  std::string line;
  REQUIRE(std::getline(draws, line));
  CHECK(line == "draw");
  std::size_t n = 0;
  while (std::getline(draws, line)) ++n;
  CHECK(n == 160);
}

TEST_CASE("an all-zero model forecasts a standard normal") {
  // Hand-built checkpoint: every parameter zero, so the predictive head is
  // N(0, 1) regardless of the input window.
  Hyperparams hp;
  hp.hidden_dim = 6;
  hp.standardize = false;
  Rng rng(1);
  Checkpoint ck;
  ck.hp = hp;
  ck.horizon = 1;
  ck.train_seasons = {"2003/04", "2004/05", "2005/06", "2006/07"};
  ck.params = init_params(hp, rng);
  for_each_param(ck.params, [](const char*, Tensor& t) {
    for (double& v : t.mutable_value()) v = 0.0;
  });
  const std::string path = (scratch_dir() / "zero.bin").string();
  save_model(path, ck);

  std::string out_text;
  REQUIRE(run({"forecast", "--model", path, "--data", fixture_csv(),
               "--season", "2007/08", "--week", "10", "--seed", "2",
               "--components", "300", "--draws-per", "60"},
              &out_text) == 0);
  auto kv = parse_doc(out_text);
  CHECK(std::stod(kv.at("mean")) == 0.0);  // mixture mean is exactly zero
  CHECK(std::stod(kv.at("interval_95_lo")) == doctest::Approx(-1.96).epsilon(0.02));
  CHECK(std::stod(kv.at("interval_95_hi")) == doctest::Approx(1.96).epsilon(0.02));
}

TEST_CASE("evaluate writes metrics and calibration tables") {
  const fs::path out = scratch_dir() / "eval_out";
  std::string out_text, err_text;
  const std::vector<std::string> args = {
      "evaluate", "--model", trained_model(), "--data", fixture_csv(),
      "--seasons", "2007/08", "--horizons", "1", "--seed", "31",
      "--out", out.string()};
  REQUIRE_MESSAGE(run(args, &out_text, &err_text) == 0, err_text);

  std::istringstream metrics(slurp(out / "metrics.csv"));
  std::string line;
  REQUIRE(std::getline(metrics, line));
  CHECK(line == "horizon,rmse,mape,ls,cs");
  REQUIRE(std::getline(metrics, line));
  CHECK(line.rfind("1,", 0) == 0);
  CHECK(!std::getline(metrics, line));

  std::istringstream curve(slurp(out / "calibration_k1.csv"));
  REQUIRE(std::getline(curve, line));
  CHECK(line == "confidence,coverage");
  std::size_t rows = 0;
  while (std::getline(curve, line)) ++rows;
  CHECK(rows == 101);

  CHECK(out_text.find("horizon 1:") != std::string::npos);
  CHECK(out_text.find("rmse=") != std::string::npos);

  SUBCASE("repeat runs are bit-identical") {
    const std::string first_metrics = slurp(out / "metrics.csv");
    const std::string first_curve = slurp(out / "calibration_k1.csv");
    std::string second_text;
    REQUIRE(run(args, &second_text) == 0);
    CHECK(second_text == out_text);
    CHECK(slurp(out / "metrics.csv") == first_metrics);
    CHECK(slurp(out / "calibration_k1.csv") == first_curve);
  }
}

TEST_CASE("evaluate guards against leakage and bad horizon lists") {
  std::string err;
  CHECK(run({"evaluate", "--model", trained_model(), "--data", fixture_csv(),
             "--seasons", "2004/05", "--horizons", "1"},
            nullptr, &err) == 2);
  CHECK(err.find("2004/05") != std::string::npos);
  CHECK(err.find("training") != std::string::npos);

  CHECK(run({"evaluate", "--model", trained_model(), "--data", fixture_csv(),
             "--seasons", "2007/08", "--horizons", "3"},
            nullptr, &err) == 2);
  CHECK(err.find("--ar") != std::string::npos);

  CHECK(run({"evaluate", "--model", trained_model(), "--data", fixture_csv(),
             "--seasons", "2007/08"},
            nullptr, &err) == 2);  // --horizons is required
}

TEST_CASE("the input csv is never modified") {
  static const std::string before = slurp(fixture_csv());
  CHECK(slurp(fixture_csv()) == before);
}
