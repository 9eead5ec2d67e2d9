#include "mcvd/harness.hpp"

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdio>
#include <exception>
#include <filesystem>
#include <fstream>
#include <functional>
#include <istream>
#include <map>
#include <memory>
#include <optional>
#include <sstream>
#include <thread>

#include "mcvd/belief_engine.hpp"
#include "mcvd/detectors.hpp"
#include "mcvd/info_rate.hpp"
#include "mcvd/rng.hpp"

namespace mcvd::harness {

std::string_view method_name(Method method) {
  switch (method) {
    case Method::kSoftBamap: return "soft_bamap";
    case Method::kBamap: return "bamap";
    case Method::kFixed: return "fixed";
    case Method::kGenieMmse: return "genie_mmse";
    case Method::kGeniePa: return "genie_pa";
  }
  return "unknown";
}

Method parse_method(std::string_view text) {
  for (Method m : registered_methods())
    if (method_name(m) == text) return m;
  throw std::invalid_argument("unknown method '" + std::string(text) + "'");
}

const std::vector<Method>& registered_methods() {
  static const std::vector<Method> all{Method::kSoftBamap, Method::kBamap, Method::kFixed,
                                       Method::kGenieMmse, Method::kGeniePa};
  return all;
}

MethodId method_id(Method method) {
  switch (method) {
    case Method::kSoftBamap: return MethodId::kSoftBamap;
    case Method::kBamap: return MethodId::kBamap;
    case Method::kFixed: return MethodId::kFixed;
    case Method::kGenieMmse: return MethodId::kGenieMmse;
    case Method::kGeniePa: return MethodId::kGeniePa;
  }
  return MethodId::kSoftBamap;
}

ConfigError::ConfigError(const std::string& source, int line, const std::string& what)
    : std::runtime_error(source + ":" + std::to_string(line) + ": " + what), line_(line) {}

ExperimentSpec::ExperimentSpec() {
  // 0.1 s .. 2.0 s, log-spaced.
  constexpr int kPoints = 8;
  for (int i = 0; i < kPoints; ++i)
    ts_grid.push_back(0.1 * std::pow(20.0, static_cast<double>(i) / (kPoints - 1)));
}

void ExperimentSpec::validate(bool rate_experiment) const {
  channel.validate();
  if (methods.empty()) throw std::invalid_argument("methods list is empty");
  if (ts_grid.empty()) throw std::invalid_argument("ts_grid_seconds is empty");
  if (ntx_grid.empty()) throw std::invalid_argument("ntx_grid is empty");
  for (double ts : ts_grid)
    if (!(ts > 0.0)) throw std::invalid_argument("ts_grid_seconds entries must be positive");
  for (int n : ntx_grid)
    if (n < 1) throw std::invalid_argument("ntx_grid entries must be >= 1");
  if (n_symbols < 1) throw std::invalid_argument("n_symbols must be >= 1");
  if (rate_experiment && n_symbols < 1000)
    throw std::invalid_argument("rate experiments need n_symbols >= 1000");
  if (trials < 1) throw std::invalid_argument("trials must be >= 1");
  if (!(coverage > 0.0 && coverage < 1.0)) throw std::invalid_argument("coverage must lie in (0, 1)");
  if (m_max < 1) throw std::invalid_argument("m_max must be >= 1");
  if (trace_symbols < 1) throw std::invalid_argument("trace_symbols must be >= 1");
  if (threshold_grid_points < 2) throw std::invalid_argument("threshold_grid_points must be >= 2");
  if (workers < 1) throw std::invalid_argument("workers must be >= 1");
}

namespace {

std::string trim(std::string_view s) {
  const auto first = s.find_first_not_of(" \t\r");
  if (first == std::string_view::npos) return {};
  const auto last = s.find_last_not_of(" \t\r");
  return std::string(s.substr(first, last - first + 1));
}

std::vector<std::string> split_list(const std::string& value) {
  std::vector<std::string> out;
  std::stringstream ss(value);
  std::string item;
  while (std::getline(ss, item, ',')) {
    item = trim(item);
    if (!item.empty()) out.push_back(item);
  }
  return out;
}

double to_double(const std::string& v) {
  std::size_t used = 0;
  const double d = std::stod(v, &used);
  if (used != v.size()) throw std::invalid_argument("trailing characters in number");
  return d;
}

long long to_integer(const std::string& v) {
  std::size_t used = 0;
  const long long i = std::stoll(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected an integer");
  return i;
}

std::uint64_t to_u64(const std::string& v) {
  if (!v.empty() && v[0] == '-') throw std::invalid_argument("expected an unsigned integer");
  std::size_t used = 0;
  const unsigned long long u = std::stoull(v, &used);
  if (used != v.size()) throw std::invalid_argument("expected an unsigned integer");
  return u;
}

std::size_t to_count(const std::string& v) {
  const long long i = to_integer(v);
  if (i < 0) throw std::invalid_argument("expected a nonnegative integer");
  return static_cast<std::size_t>(i);
}

using Setter = std::function<void(ExperimentSpec&, const std::string&)>;

const std::map<std::string, Setter, std::less<>>& setters() {
  static const std::map<std::string, Setter, std::less<>> table{
      {"tx_distance_um", [](auto& s, const auto& v) { s.channel.tx_distance_um = to_double(v); }},
      {"rx_radius_um", [](auto& s, const auto& v) { s.channel.rx_radius_um = to_double(v); }},
      {"diffusion_um2_per_s",
       [](auto& s, const auto& v) { s.channel.diffusion_um2_per_s = to_double(v); }},
      {"ts_seconds", [](auto& s, const auto& v) { s.channel.symbol_duration_s = to_double(v); }},
      {"ntx_molecules",
       [](auto& s, const auto& v) { s.channel.molecules_per_on = static_cast<int>(to_integer(v)); }},
      {"prior_p1", [](auto& s, const auto& v) { s.channel.prior_p1 = to_double(v); }},
      {"counting_model",
       [](auto& s, const auto& v) { s.channel.counting_model = parse_counting_model(v); }},
      {"ts_grid_seconds",
       [](auto& s, const auto& v) {
         s.ts_grid.clear();
         for (const auto& item : split_list(v)) s.ts_grid.push_back(to_double(item));
       }},
      {"ntx_grid",
       [](auto& s, const auto& v) {
         s.ntx_grid.clear();
         for (const auto& item : split_list(v))
           s.ntx_grid.push_back(static_cast<int>(to_integer(item)));
       }},
      {"methods",
       [](auto& s, const auto& v) {
         s.methods.clear();
         for (const auto& item : split_list(v)) s.methods.push_back(parse_method(item));
       }},
      {"n_symbols", [](auto& s, const auto& v) { s.n_symbols = to_count(v); }},
      {"trials", [](auto& s, const auto& v) { s.trials = to_count(v); }},
      {"base_seed", [](auto& s, const auto& v) { s.base_seed = to_u64(v); }},
      {"coverage", [](auto& s, const auto& v) { s.coverage = to_double(v); }},
      {"m_max", [](auto& s, const auto& v) { s.m_max = static_cast<int>(to_integer(v)); }},
      {"fixed_threshold", [](auto& s, const auto& v) { s.fixed_threshold = to_double(v); }},
      {"sample_mode", [](auto& s, const auto& v) { s.mode = parse_sample_mode(v); }},
      {"trace_symbols", [](auto& s, const auto& v) { s.trace_symbols = to_count(v); }},
      {"calibration_symbols", [](auto& s, const auto& v) { s.calibration_symbols = to_count(v); }},
      {"threshold_grid_points",
       [](auto& s, const auto& v) { s.threshold_grid_points = to_count(v); }},
      {"output_dir", [](auto& s, const auto& v) { s.output_dir = v; }},
      {"workers", [](auto& s, const auto& v) { s.workers = static_cast<unsigned>(to_count(v)); }},
  };
  return table;
}

}  // namespace

ExperimentSpec parse_experiment_spec(std::istream& in, const std::string& source) {
  ExperimentSpec spec;
  std::string raw;
  int line_no = 0;
  std::map<std::string, int, std::less<>> seen;
  while (std::getline(in, raw)) {
    ++line_no;
    const auto hash = raw.find('#');
    const std::string line = trim(hash == std::string::npos ? raw : raw.substr(0, hash));
    if (line.empty()) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos) throw ConfigError(source, line_no, "expected 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    const auto it = setters().find(key);
    if (it == setters().end()) throw ConfigError(source, line_no, "unknown key '" + key + "'");
    if (auto [pos, fresh] = seen.emplace(key, line_no); !fresh)
      throw ConfigError(source, line_no,
                        "duplicate key '" + key + "' (first on line " +
                            std::to_string(pos->second) + ")");
    if (value.empty()) throw ConfigError(source, line_no, "empty value for '" + key + "'");
    try {
      it->second(spec, value);
    } catch (const std::exception& e) {
      throw ConfigError(source, line_no, "bad value for '" + key + "': " + e.what());
    }
  }
  return spec;
}

ExperimentSpec load_experiment_spec(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config file '" + path + "'");
  return parse_experiment_spec(in, path);
}

std::uint64_t cell_seed(std::uint64_t base_seed, MethodId method, std::size_t ts_index,
                        std::size_t ntx_index, std::size_t trial) {
  return derive_seed(base_seed, {static_cast<std::uint64_t>(method), ts_index, ntx_index, trial});
}

Channel channel_for_cell(const ExperimentSpec& spec, double ts_seconds, int ntx) {
  ChannelConfig cfg = spec.channel;
  cfg.symbol_duration_s = ts_seconds;
  cfg.molecules_per_on = ntx;
  cfg.validate();
  const MemoryOrderChoice m = select_memory_order(cfg, spec.coverage, spec.m_max);
  return make_channel(cfg, m.memory_order);
}

std::string format_number(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.12g", v);
  return buf;
}

void CsvTable::write(std::ostream& out) const {
  auto line = [&](const std::vector<std::string>& cells) {
    for (std::size_t i = 0; i < cells.size(); ++i) out << (i ? "," : "") << cells[i];
    out << '\n';
  };
  line(header);
  for (const auto& r : rows) line(r);
}

void Manifest::write(std::ostream& out) const {
  for (const auto& [k, v] : entries) out << k << " = " << v << '\n';
}

double BerCell::std_error() const {
  if (symbols == 0) return 0.0;
  const double p = ber();
  return std::sqrt(p * (1.0 - p) / static_cast<double>(symbols));
}

namespace {

// Runs task(i) for i in [0, count) on `workers` threads. Task exceptions are
// handed to on_error(i, what) and do not stop other tasks.
void run_parallel(std::size_t count, unsigned workers, const std::function<void(std::size_t)>& task,
                  const std::function<void(std::size_t, const std::string&)>& on_error) {
  std::atomic<std::size_t> next{0};
  auto worker = [&] {
    for (std::size_t i = next++; i < count; i = next++) {
      try {
        task(i);
      } catch (const std::exception& e) {
        on_error(i, e.what());
      }
    }
  };
  const unsigned n = std::max(1U, std::min<unsigned>(workers, static_cast<unsigned>(count)));
  if (n == 1) {
    worker();
    return;
  }
  std::vector<std::thread> pool;
  for (unsigned i = 0; i < n; ++i) pool.emplace_back(worker);
  for (auto& t : pool) t.join();
}

void add_common_manifest(Manifest& mf, const ExperimentSpec& spec, std::string_view command) {
  mf.add("command", std::string(command));
  mf.add("rng", kRngAlgorithm);
  mf.add("seed_derivation", "derive_seed(base_seed,{method_id,ts_index,ntx_index,trial})");
  mf.add("base_seed", std::to_string(spec.base_seed));
  mf.add("sample_mode", std::string(to_string(spec.mode)));
  mf.add("counting_model", std::string(to_string(spec.channel.counting_model)));
  mf.add("tx_distance_um", format_number(spec.channel.tx_distance_um));
  mf.add("rx_radius_um", format_number(spec.channel.rx_radius_um));
  mf.add("diffusion_um2_per_s", format_number(spec.channel.diffusion_um2_per_s));
  mf.add("prior_p1", format_number(spec.channel.prior_p1));
  mf.add("coverage", format_number(spec.coverage));
  mf.add("m_max", std::to_string(spec.m_max));
}

std::string seed_list(const std::vector<std::uint64_t>& seeds) {
  std::string out;
  for (std::size_t i = 0; i < seeds.size(); ++i) out += (i ? ";" : "") + std::to_string(seeds[i]);
  return out;
}

// Threshold from `grid` with the fewest errors on a calibration trace.
double min_error_threshold(const RunRecord& trace, const std::vector<double>& grid) {
  double best_tau = grid.front();
  std::size_t best_errors = trace.size() + 1;
  for (double tau : grid) {
    std::size_t errors = 0;
    for (std::size_t t = 0; t < trace.size(); ++t)
      errors += fixed_threshold_decide(trace.counts[t], tau) != trace.bits[t];
    if (errors < best_errors) {
      best_errors = errors;
      best_tau = tau;
    }
  }
  return best_tau;
}

std::uint64_t calibration_seed(std::uint64_t seed) {
  return derive_seed(seed, {static_cast<std::uint64_t>(StreamPurpose::kCalibration)});
}

}  // namespace

CommandResult cmd_taps(const ExperimentSpec& spec) {
  spec.validate();
  CommandResult res;
  std::vector<Channel> channels;
  std::vector<bool> capped;
  int widest = 0;
  for (double ts : spec.ts_grid) {
    ChannelConfig cfg = spec.channel;
    cfg.symbol_duration_s = ts;
    const MemoryOrderChoice m = select_memory_order(cfg, spec.coverage, spec.m_max);
    channels.push_back(make_channel(cfg, m.memory_order));
    capped.push_back(m.capped);
    widest = std::max(widest, m.memory_order);
  }
  res.table.header = {"ts_seconds", "m", "capped", "sum_h"};
  for (int k = 0; k <= widest; ++k) res.table.header.push_back("h_" + std::to_string(k));
  for (std::size_t i = 0; i < channels.size(); ++i) {
    const Channel& ch = channels[i];
    std::vector<std::string> row{format_number(ch.config.symbol_duration_s),
                                 std::to_string(ch.taps.memory_order), capped[i] ? "1" : "0",
                                 format_number(ch.taps.sum())};
    for (int k = 0; k <= widest; ++k)
      row.push_back(k <= ch.taps.memory_order ? format_number(ch.taps.taps[k]) : "");
    res.table.rows.push_back(std::move(row));
  }
  add_common_manifest(res.manifest, spec, "taps");
  return res;
}

BerCell run_ber_trial(const ExperimentSpec& spec, const Channel& channel, Method method,
                      std::uint64_t seed) {
  const Priors priors = Priors::from_p1(channel.config.prior_p1);
  BerCell cell;
  auto score = [&](const std::vector<Bit>& bits, const std::vector<Bit>& decisions) {
    for (std::size_t t = 0; t < bits.size(); ++t) cell.errors += bits[t] != decisions[t];
    cell.symbols += bits.size();
  };

  if (method == Method::kGeniePa) {
    const auto grid = default_threshold_grid(channel, spec.threshold_grid_points);
    const auto calib = run_power_adjusted_trace(channel, priors.p1, spec.calibration_symbols,
                                                calibration_seed(seed), spec.mode);
    FixedThresholdDetector det(min_error_threshold(calib.record, grid));
    const auto trace =
        run_power_adjusted_trace(channel, priors.p1, spec.n_symbols, seed, spec.mode);
    score(trace.record.bits, run_detector(det, trace.record).decisions);
    return cell;
  }

  const RunRecord trace = run_trace(channel, priors.p1, spec.n_symbols, seed, spec.mode);
  switch (method) {
    case Method::kSoftBamap: {
      SoftBamapDetector det(channel.table, priors);
      score(trace.bits, run_detector(det, trace).decisions);
      break;
    }
    case Method::kBamap: {
      BamapDetector det(channel.table, priors);
      score(trace.bits, run_detector(det, trace).decisions);
      break;
    }
    case Method::kFixed: {
      FixedThresholdDetector det(spec.fixed_threshold);
      score(trace.bits, run_detector(det, trace).decisions);
      break;
    }
    case Method::kGenieMmse: {
      GenieMmseDetector det(channel, priors);
      det.calibrate(spec.calibration_symbols, seed, spec.mode);
      score(trace.bits, run_detector(det, trace).decisions);
      break;
    }
    case Method::kGeniePa: break;
  }
  return cell;
}

CommandResult cmd_ber(const ExperimentSpec& spec) {
  spec.validate();
  struct Task {
    Method method;
    std::size_t ts_index, ntx_index;
  };
  std::vector<Task> tasks;
  for (std::size_t ni = 0; ni < spec.ntx_grid.size(); ++ni)
    for (std::size_t ti = 0; ti < spec.ts_grid.size(); ++ti)
      for (Method m : spec.methods) tasks.push_back({m, ti, ni});

  std::vector<std::vector<std::string>> rows(tasks.size());
  std::vector<std::vector<std::uint64_t>> seeds(tasks.size());
  run_parallel(
      tasks.size(), spec.workers,
      [&](std::size_t i) {
        const Task& task = tasks[i];
        const double ts = spec.ts_grid[task.ts_index];
        const int ntx = spec.ntx_grid[task.ntx_index];
        std::vector<std::string> row{std::string(method_name(task.method)), format_number(ts),
                                     std::to_string(ntx)};
        rows[i] = row;
        const Channel channel = channel_for_cell(spec, ts, ntx);
        row.push_back(std::to_string(channel.taps.memory_order));
        rows[i] = row;
        BerCell total;
        for (std::size_t trial = 0; trial < spec.trials; ++trial) {
          const std::uint64_t seed =
              cell_seed(spec.base_seed, method_id(task.method), task.ts_index, task.ntx_index, trial);
          seeds[i].push_back(seed);
          const BerCell c = run_ber_trial(spec, channel, task.method, seed);
          total.errors += c.errors;
          total.symbols += c.symbols;
        }
        row.insert(row.end(), {format_number(total.ber()), format_number(total.std_error()),
                               std::to_string(total.errors), std::to_string(total.symbols),
                               std::to_string(seeds[i].front()), "ok"});
        rows[i] = std::move(row);
      },
      [&](std::size_t i, const std::string& what) {
        auto& row = rows[i];
        row.resize(9);
        row.push_back("error: " + what);
        std::replace(row.back().begin(), row.back().end(), ',', ';');
      });

  CommandResult res;
  res.table.header = {"method", "ts_seconds", "ntx", "m",  "ber",
                      "std_error", "errors", "symbols", "seed", "status"};
  res.table.rows = std::move(rows);
  add_common_manifest(res.manifest, spec, "ber");
  res.manifest.add("n_symbols", std::to_string(spec.n_symbols));
  res.manifest.add("trials", std::to_string(spec.trials));
  res.manifest.add("fixed_threshold", format_number(spec.fixed_threshold));
  res.manifest.add("calibration_symbols", std::to_string(spec.calibration_symbols));
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    res.manifest.add("row." + std::to_string(i),
                     "method=" + std::string(method_name(tasks[i].method)) +
                         " ts_index=" + std::to_string(tasks[i].ts_index) +
                         " ntx_index=" + std::to_string(tasks[i].ntx_index) +
                         " seeds=" + seed_list(seeds[i]));
  }
  return res;
}

namespace {

// Accumulates per-trial estimates; rate and BER are trial means, the
// standard error combines trial errors in quadrature.
struct RateAccumulator {
  double rate = 0.0, se2 = 0.0, ber = 0.0, threshold = 0.0;
  std::size_t trials = 0;
  bool has_threshold = false;

  void add(const RateEstimate& est, double trial_ber) {
    rate += est.rate;
    se2 += est.std_error * est.std_error;
    ber += trial_ber;
    ++trials;
  }
  void add_threshold(double tau) {
    threshold += tau;
    has_threshold = true;
  }
};

}  // namespace

CommandResult cmd_rate(const ExperimentSpec& spec) {
  spec.validate(true);
  struct Task {
    std::optional<Method> method;  // nullopt: channel rate estimator
    std::size_t ts_index, ntx_index;
  };
  std::vector<Task> tasks;
  for (std::size_t ni = 0; ni < spec.ntx_grid.size(); ++ni)
    for (std::size_t ti = 0; ti < spec.ts_grid.size(); ++ti) {
      tasks.push_back({std::nullopt, ti, ni});
      for (Method m : spec.methods) tasks.push_back({m, ti, ni});
    }

  std::vector<std::vector<std::vector<std::string>>> rows(tasks.size());
  std::vector<std::vector<std::uint64_t>> seeds(tasks.size());
  std::vector<std::string> failures(tasks.size());

  run_parallel(
      tasks.size(), spec.workers,
      [&](std::size_t i) {
        const Task& task = tasks[i];
        const double ts = spec.ts_grid[task.ts_index];
        const int ntx = spec.ntx_grid[task.ntx_index];
        const Channel channel = channel_for_cell(spec, ts, ntx);
        const Priors priors = Priors::from_p1(channel.config.prior_p1);
        const std::size_t states = channel.table.num_states();
        const MethodId id = task.method ? method_id(*task.method) : MethodId::kChannelRate;
        const auto grid = default_threshold_grid(channel, spec.threshold_grid_points);

        std::map<std::string, RateAccumulator> acc;
        std::vector<std::string> order;
        auto record = [&](const std::string& name, const RateEstimate& est, double ber) {
          if (!acc.count(name)) order.push_back(name);
          acc[name].add(est, ber);
        };

        for (std::size_t trial = 0; trial < spec.trials; ++trial) {
          const std::uint64_t seed =
              cell_seed(spec.base_seed, id, task.ts_index, task.ntx_index, trial);
          seeds[i].push_back(seed);
          if (!task.method) {
            const RunRecord trace = run_trace(channel, priors.p1, spec.n_symbols, seed, spec.mode);
            record("channel", channel_rate_from_trace(channel.table, priors, trace, ts),
                   std::nan(""));
            continue;
          }
          switch (*task.method) {
            case Method::kSoftBamap:
            case Method::kBamap: {
              const RunRecord trace =
                  run_trace(channel, priors.p1, spec.n_symbols, seed, spec.mode);
              std::unique_ptr<Detector> det;
              if (*task.method == Method::kSoftBamap)
                det = std::make_unique<SoftBamapDetector>(channel.table, priors);
              else
                det = std::make_unique<BamapDetector>(channel.table, priors);
              const DecisionTrace d = run_detector(*det, trace);
              record(std::string(det->name()), hard_decision_rate(trace.bits, d.decisions, ts),
                     bit_error_rate(trace.bits, d.decisions));
              break;
            }
            case Method::kFixed: {
              const RunRecord trace =
                  run_trace(channel, priors.p1, spec.n_symbols, seed, spec.mode);
              const ThresholdSweep sw = sweep_fixed_threshold_rate(trace, grid, ts);
              std::vector<Bit> dec(trace.size());
              for (std::size_t t = 0; t < trace.size(); ++t)
                dec[t] = fixed_threshold_decide(trace.counts[t], sw.best_threshold);
              record("fixed", sw.best, bit_error_rate(trace.bits, dec));
              acc["fixed"].add_threshold(sw.best_threshold);
              break;
            }
            case Method::kGenieMmse: {
              const RunRecord trace =
                  run_trace(channel, priors.p1, spec.n_symbols, seed, spec.mode);
              GenieMmseDetector det(channel, priors);
              det.calibrate(spec.calibration_symbols, seed, spec.mode);
              const DecisionTrace d = run_detector(det, trace);
              const double ber = bit_error_rate(trace.bits, d.decisions);
              record("genie_mmse",
                     genie_conditional_rate(trace.bits, d.decisions, trace.states, states, ts), ber);
              record("genie_mmse_uncond", hard_decision_rate(trace.bits, d.decisions, ts), ber);
              break;
            }
            case Method::kGeniePa: {
              const auto pa = run_power_adjusted_trace(channel, priors.p1, spec.n_symbols, seed,
                                                       spec.mode);
              const ThresholdSweep sw = sweep_fixed_threshold_rate(pa.record, grid, ts, states);
              std::vector<Bit> dec(pa.record.size());
              for (std::size_t t = 0; t < dec.size(); ++t)
                dec[t] = fixed_threshold_decide(pa.record.counts[t], sw.best_threshold);
              const double ber = bit_error_rate(pa.record.bits, dec);
              record("genie_pa", sw.best, ber);
              record("genie_pa_uncond", hard_decision_rate(pa.record.bits, dec, ts), ber);
              acc["genie_pa"].add_threshold(sw.best_threshold);
              acc["genie_pa_uncond"].add_threshold(sw.best_threshold);
              break;
            }
          }
        }

        for (const auto& name : order) {
          const RateAccumulator& a = acc.at(name);
          const double k = static_cast<double>(a.trials);
          const double rate = a.rate / k;
          const double se = std::sqrt(a.se2) / k;
          rows[i].push_back({name, format_number(ts), std::to_string(ntx),
                             std::to_string(channel.taps.memory_order), format_number(rate),
                             format_number(se), format_number(rate / ts),
                             std::isnan(a.ber) ? "" : format_number(a.ber / k),
                             std::to_string(seeds[i].front()),
                             a.has_threshold ? format_number(a.threshold / k) : "", "ok"});
        }
      },
      [&](std::size_t i, const std::string& what) {
        std::string msg = "error: " + what;
        std::replace(msg.begin(), msg.end(), ',', ';');
        const Task& task = tasks[i];
        rows[i] = {{task.method ? std::string(method_name(*task.method)) : "channel",
                    format_number(spec.ts_grid[task.ts_index]),
                    std::to_string(spec.ntx_grid[task.ntx_index]), "", "", "", "", "", "", "",
                    msg}};
      });

  CommandResult res;
  res.table.header = {"method", "ts_seconds", "ntx", "m",    "rate",     "std_error",
                      "throughput", "ber",    "seed", "threshold", "status"};
  for (std::size_t i = 0; i < tasks.size(); ++i) {
    for (auto& r : rows[i]) {
      res.manifest.add("row." + std::to_string(res.table.rows.size()),
                       "method=" + r[0] + " ts_index=" + std::to_string(tasks[i].ts_index) +
                           " ntx_index=" + std::to_string(tasks[i].ntx_index) +
                           " seeds=" + seed_list(seeds[i]));
      res.table.rows.push_back(std::move(r));
    }
  }
  Manifest head;
  add_common_manifest(head, spec, "rate");
  head.add("n_symbols", std::to_string(spec.n_symbols));
  head.add("trials", std::to_string(spec.trials));
  head.add("calibration_symbols", std::to_string(spec.calibration_symbols));
  head.add("threshold_grid_points", std::to_string(spec.threshold_grid_points));
  head.entries.insert(head.entries.end(), res.manifest.entries.begin(), res.manifest.entries.end());
  res.manifest = std::move(head);
  return res;
}

CommandResult cmd_trace(const ExperimentSpec& spec, std::ostream* belief_dump) {
  spec.validate();
  const Channel channel =
      channel_for_cell(spec, spec.channel.symbol_duration_s, spec.channel.molecules_per_on);
  const Priors priors = Priors::from_p1(channel.config.prior_p1);
  const std::uint64_t seed = cell_seed(spec.base_seed, MethodId::kTrace, 0, 0, 0);
  const RunRecord trace = run_trace(channel, priors.p1, spec.trace_symbols, seed, spec.mode);

  BamapDetector bamap(channel.table, priors);
  SoftBamapDetector soft(channel.table, priors);
  if (belief_dump) *belief_dump << "t,s,alpha\n";

  CommandResult res;
  res.table.header = {"t",      "bit",    "state",  "count",     "mu0",       "mu0_lo",
                      "mu0_hi", "mu1",    "mu1_lo", "mu1_hi",    "tau_bamap", "tau_fixed",
                      "llr_soft", "belief_entropy_bits"};
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const StateId s = trace.states[t];
    const double entropy = soft.belief().entropy_bits();
    if (belief_dump) write_belief_rows(t, soft.belief(), *belief_dump);
    const double tau = bamap.step({trace.counts[t], s}).statistic;
    const double llr = soft.step({trace.counts[t], s}).statistic;
    const double mu0 = channel.table.mean(0, s), sd0 = std::sqrt(channel.table.variance(0, s));
    const double mu1 = channel.table.mean(1, s), sd1 = std::sqrt(channel.table.variance(1, s));
    res.table.rows.push_back({std::to_string(t), std::to_string(int{trace.bits[t]}),
                              std::to_string(s), format_number(trace.counts[t]),
                              format_number(mu0), format_number(mu0 - sd0),
                              format_number(mu0 + sd0), format_number(mu1),
                              format_number(mu1 - sd1), format_number(mu1 + sd1),
                              format_number(tau), format_number(spec.fixed_threshold),
                              format_number(llr), format_number(entropy)});
  }
  add_common_manifest(res.manifest, spec, "trace");
  res.manifest.add("ts_seconds", format_number(channel.config.symbol_duration_s));
  res.manifest.add("ntx", std::to_string(channel.config.molecules_per_on));
  res.manifest.add("m", std::to_string(channel.taps.memory_order));
  res.manifest.add("trace_symbols", std::to_string(spec.trace_symbols));
  res.manifest.add("seed", std::to_string(seed));
  return res;
}

void write_result(const CommandResult& result, const std::string& dir, const std::string& stem) {
  std::filesystem::create_directories(dir);
  const std::filesystem::path base(dir);
  {
    std::ofstream csv(base / (stem + ".csv"), std::ios::binary);
    if (!csv) throw std::runtime_error("cannot write " + (base / (stem + ".csv")).string());
    result.table.write(csv);
  }
  std::ofstream mf(base / (stem + "_manifest.txt"), std::ios::binary);
  if (!mf) throw std::runtime_error("cannot write manifest in " + dir);
  result.manifest.write(mf);
}

}  // namespace mcvd::harness
