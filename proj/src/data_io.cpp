#include "epifnp/data_io.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "epifnp/errors.hpp"

namespace epifnp {

namespace {

std::string epiweek_str(int year, int week) {
  std::ostringstream os;
  os << year << 'w' << (week < 10 ? "0" : "") << week;
  return os.str();
}

std::vector<std::string> split_csv_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur += ch;
    }
  }
  out.push_back(cur);
  return out;
}

int parse_int_field(const std::string& s, const char* what, std::size_t line_no) {
  int v = 0;
  auto [ptr, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc{} || ptr != s.data() + s.size())
    throw ContractError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return v;
}

double parse_double_field(const std::string& s, const char* what, std::size_t line_no) {
  if (s.empty())
    throw ContractError("line " + std::to_string(line_no) + ": empty " + what);
  char* end = nullptr;
  const double v = std::strtod(s.c_str(), &end);
  if (end != s.c_str() + s.size() || !std::isfinite(v))
    throw ContractError("line " + std::to_string(line_no) + ": bad " + what + " '" + s + "'");
  return v;
}

long epiweek_key(int year, int week) { return static_cast<long>(year) * 100 + week; }

}  // namespace

ParseResult parse_csv(const std::string& path, const std::string& region) {
  std::ifstream in(path);
  if (!in) throw ContractError("cannot open data file '" + path + "'");
  ParseResult out;
  std::string line;
  if (!std::getline(in, line))
    throw ContractError("data file '" + path + "' is empty");
  {
    auto header = split_csv_line(line);
    if (header != std::vector<std::string>{"region", "year", "week", "wili"})
      throw ContractError("bad header in '" + path + "': expected region,year,week,wili");
  }
  std::set<std::string> regions_seen;
  std::size_t line_no = 1;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty() || line == "\r") continue;
    auto fields = split_csv_line(line);
    if (fields.size() != 4)
      throw ContractError("line " + std::to_string(line_no) + ": expected 4 fields, got " +
                          std::to_string(fields.size()));
    WiliRecord rec;
    rec.region = fields[0];
    rec.year = parse_int_field(fields[1], "year", line_no);
    rec.week = parse_int_field(fields[2], "week", line_no);
    rec.wili = parse_double_field(fields[3], "wili", line_no);
    if (rec.week < 1 || rec.week > 53)
      throw ContractError("line " + std::to_string(line_no) + ": week " +
                          std::to_string(rec.week) + " outside [1, 53]");
    if (rec.wili < 0.0)
      throw ContractError("line " + std::to_string(line_no) + ": negative wili value");
    regions_seen.insert(rec.region);
    if (rec.region == region) out.records.push_back(std::move(rec));
  }
  if (out.records.empty() && !regions_seen.empty())
    out.warnings.push_back("region '" + region + "' not found in '" + path + "'");

  std::stable_sort(out.records.begin(), out.records.end(),
                   [](const WiliRecord& a, const WiliRecord& b) {
                     return epiweek_key(a.year, a.week) < epiweek_key(b.year, b.week);
                   });
  for (std::size_t i = 1; i < out.records.size(); ++i)
    if (epiweek_key(out.records[i - 1].year, out.records[i - 1].week) ==
        epiweek_key(out.records[i].year, out.records[i].week))
      throw ContractError("duplicate epiweek " +
                          epiweek_str(out.records[i].year, out.records[i].week) +
                          " for region '" + region + "'");
  return out;
}

SegmentResult segment_seasons(std::span<const WiliRecord> records) {
  SegmentResult out;
  if (records.empty()) return out;

  std::map<long, double> by_week;
  std::set<int> has_week53;
  for (const auto& r : records) {
    by_week[epiweek_key(r.year, r.week)] = r.wili;
    if (r.week == 53) has_week53.insert(r.year);
  }
  const long first_key = by_week.begin()->first;
  const long last_key = by_week.rbegin()->first;
  const int first_year = static_cast<int>(first_key / 100);
  const int last_year = static_cast<int>(last_key / 100);

  for (int y = first_year - 1; y <= last_year; ++y) {
    // Season y spans (y, w21..wmax) then (y+1, w1..w20); week 53 is kept
    // whenever the data contains it for year y.
    std::vector<long> expected;
    const int wmax = has_week53.count(y) ? 53 : 52;
    for (int w = 21; w <= wmax; ++w) expected.push_back(epiweek_key(y, w));
    for (int w = 1; w <= 20; ++w) expected.push_back(epiweek_key(y + 1, w));

    if (expected.back() < first_key || expected.front() > last_key) continue;

    std::ostringstream id;
    id << y << '/' << (((y + 1) % 100) < 10 ? "0" : "") << (y + 1) % 100;

    bool incomplete = false;
    std::vector<double> values;
    values.reserve(expected.size());
    for (long key : expected) {
      auto it = by_week.find(key);
      if (it == by_week.end()) {
        if (key < first_key || key > last_key) {
          incomplete = true;
          break;
        }
        throw ContractError("gap at " + epiweek_str(static_cast<int>(key / 100),
                                                    static_cast<int>(key % 100)) +
                            " in season " + id.str());
      }
      values.push_back(it->second);
    }
    if (incomplete) {
      out.warnings.push_back("season " + id.str() + " incomplete, dropped");
      continue;
    }
    out.seasons.push_back({id.str(), y, std::move(values)});
  }
  return out;
}

std::vector<EvalPoint> realtime_eval_points(const SeasonSeries& season, std::size_t horizon) {
  if (horizon == 0) throw ContractError("realtime_eval_points: horizon must be positive");
  const std::size_t T = season.values.size();
  std::vector<EvalPoint> out;
  // Calendar week 40 is season week 20 (the season starts at week 21).
  for (std::size_t j = std::max<std::size_t>(20, horizon + 1); j <= T; ++j)
    out.push_back({j - horizon, j, season.values[j - 1]});
  return out;
}

// ---- Checkpoint serialization ---------------------------------------------

namespace {

constexpr char kMagic[4] = {'E', 'F', 'N', 'P'};
constexpr std::uint32_t kVersion = 1;
constexpr std::uint64_t kSentinel = 0x45464e50444f4e45ull;  // "EFNPDONE"

struct Writer {
  std::ofstream out;
  explicit Writer(const std::string& path) : out(path, std::ios::binary) {
    if (!out) throw CheckpointError("cannot open '" + path + "' for writing");
  }
  template <typename T>
  void raw(const T& v) {
    out.write(reinterpret_cast<const char*>(&v), sizeof(T));
  }
  void u8(std::uint8_t v) { raw(v); }
  void u32(std::uint32_t v) { raw(v); }
  void u64(std::uint64_t v) { raw(v); }
  void f64(double v) { raw(v); }
  void str(const std::string& s) {
    u64(s.size());
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
  }
};

struct Reader {
  std::ifstream in;
  explicit Reader(const std::string& path) : in(path, std::ios::binary) {
    if (!in) throw CheckpointError("cannot open checkpoint '" + path + "'");
  }
  template <typename T>
  T raw() {
    T v;
    in.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!in) throw CheckpointError("truncated checkpoint");
    return v;
  }
  std::uint8_t u8() { return raw<std::uint8_t>(); }
  std::uint32_t u32() { return raw<std::uint32_t>(); }
  std::uint64_t u64() { return raw<std::uint64_t>(); }
  double f64() { return raw<double>(); }
  std::string str() {
    const std::uint64_t n = u64();
    if (n > (1u << 20)) throw CheckpointError("corrupt string length in checkpoint");
    std::string s(n, '\0');
    in.read(s.data(), static_cast<std::streamsize>(n));
    if (!in) throw CheckpointError("truncated checkpoint");
    return s;
  }
};

}  // namespace

void save_model(const std::string& path, const Checkpoint& ck) {
  Writer w(path);
  w.out.write(kMagic, 4);
  w.u32(kVersion);
  const Hyperparams& hp = ck.hp;
  w.u64(hp.hidden_dim);
  w.u64(hp.input_dim);
  w.f64(hp.lr);
  w.u64(hp.max_epochs);
  w.u64(hp.patience);
  w.f64(hp.val_fraction);
  w.f64(hp.gamma_init);
  w.u8(hp.freeze_gamma ? 1 : 0);
  w.f64(hp.tau);
  w.u64(hp.mc_components);
  w.u64(hp.draws_per_component);
  w.u64(hp.min_prefix);
  w.u64(hp.seed);
  w.u32(static_cast<std::uint32_t>(hp.ablation));
  w.u8(hp.standardize ? 1 : 0);
  w.u64(ck.horizon);
  w.f64(ck.x_mean);
  w.f64(ck.x_std);
  w.u64(ck.train_seasons.size());
  for (const auto& s : ck.train_seasons) w.str(s);

  w.u64(param_count(ck.params));
  for_each_param(ck.params, [&](const char*, const Tensor& t) {
    w.u64(t.rank());
    for (std::size_t d : t.shape()) w.u64(d);
    for (double v : t.value()) w.f64(v);
  });
  w.u64(kSentinel);
  if (!w.out) throw CheckpointError("failed to write checkpoint '" + path + "'");
}

Checkpoint load_model(const std::string& path) {
  Reader r(path);
  char magic[4];
  r.in.read(magic, 4);
  if (!r.in || std::memcmp(magic, kMagic, 4) != 0)
    throw CheckpointError("'" + path + "' is not a model checkpoint");
  const std::uint32_t version = r.u32();
  if (version != kVersion)
    throw CheckpointError("unsupported checkpoint version " + std::to_string(version));

  Checkpoint ck;
  Hyperparams& hp = ck.hp;
  hp.hidden_dim = r.u64();
  hp.input_dim = r.u64();
  hp.lr = r.f64();
  hp.max_epochs = r.u64();
  hp.patience = r.u64();
  hp.val_fraction = r.f64();
  hp.gamma_init = r.f64();
  hp.freeze_gamma = r.u8() != 0;
  hp.tau = r.f64();
  hp.mc_components = r.u64();
  hp.draws_per_component = r.u64();
  hp.min_prefix = r.u64();
  hp.seed = r.u64();
  hp.ablation = static_cast<Ablation>(r.u32());
  hp.standardize = r.u8() != 0;
  ck.horizon = r.u64();
  ck.x_mean = r.f64();
  ck.x_std = r.f64();
  const std::uint64_t n_seasons = r.u64();
  if (n_seasons > (1u << 20)) throw CheckpointError("corrupt season count in checkpoint");
  for (std::uint64_t i = 0; i < n_seasons; ++i) ck.train_seasons.push_back(r.str());

  Rng scratch(0);
  ck.params = init_params(hp, scratch);
  if (r.u64() != param_count(ck.params))
    throw CheckpointError("checkpoint parameter count does not match its hyperparameters");
  for_each_param(ck.params, [&](const char* name, Tensor& t) {
    if (r.u64() != t.rank())
      throw CheckpointError(std::string("checkpoint shape mismatch for ") + name);
    for (std::size_t d : t.shape())
      if (r.u64() != d)
        throw CheckpointError(std::string("checkpoint shape mismatch for ") + name);
    for (double& v : t.mutable_value()) v = r.f64();
  });
  if (r.u64() != kSentinel) throw CheckpointError("checkpoint sentinel mismatch");
  return ck;
}

}  // namespace epifnp
