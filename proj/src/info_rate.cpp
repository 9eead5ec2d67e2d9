#include "mcvd/info_rate.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <limits>
#include <numeric>
#include <stdexcept>

namespace mcvd {

RateEstimate make_rate_estimate(double rate, double std_error, std::size_t n,
                                double symbol_duration_s) {
  if (!(symbol_duration_s > 0.0)) throw std::invalid_argument("symbol duration must be positive");
  return {rate, std_error, n, rate / symbol_duration_s};
}

double info_density_increment(Bit x, StateId s, const Belief& belief,
                              const StateLikelihoods& lik, const Priors& priors) {
  const double conditional = lik.for_input(x)[s];
  const double predictive = predictive_log_density(belief, lik, priors);
  return (conditional - predictive) * kLog2E;
}

double info_density_increment(double y, StateId s, Bit x, const Belief& belief,
                              const StateTable& table, const Priors& priors) {
  return info_density_increment(x, s, belief, evaluate_likelihoods(y, table), priors);
}

namespace {

std::size_t batch_count(std::size_t n) { return std::clamp<std::size_t>(n / 10, 2, kRateBatches); }

// Mean of per-batch statistics and its standard error.
template <class BatchStat>
std::pair<double, double> batch_spread(std::size_t n, BatchStat&& stat) {
  const std::size_t batches = batch_count(n);
  std::vector<double> values(batches);
  for (std::size_t b = 0; b < batches; ++b) values[b] = stat(b * n / batches, (b + 1) * n / batches);
  const double mean = std::accumulate(values.begin(), values.end(), 0.0) / batches;
  double ss = 0.0;
  for (double v : values) ss += (v - mean) * (v - mean);
  const double sd = std::sqrt(ss / static_cast<double>(batches - 1));
  return {mean, sd / std::sqrt(static_cast<double>(batches))};
}

}  // namespace

RateEstimate channel_rate_from_trace(const StateTable& table, const Priors& priors,
                                     const RunRecord& trace, double symbol_duration_s) {
  const std::size_t n = trace.size();
  if (n < 2) throw std::invalid_argument("channel rate needs at least two symbols");
  std::vector<double> increments(n);
  BeliefEngine engine(table, priors);
  Belief belief = Belief::point_mass(table.num_states(), 0);
  StateLikelihoods lik;
  for (std::size_t t = 0; t < n; ++t) {
    evaluate_likelihoods(trace.counts[t], table, lik);
    const double log_f = lik.for_input(trace.bits[t])[trace.states[t]];
    increments[t] = (log_f - engine.update(belief, lik).log_predictive()) * kLog2E;
  }
  const double rate = std::accumulate(increments.begin(), increments.end(), 0.0) / n;
  const auto [batch_mean, se] = batch_spread(n, [&](std::size_t lo, std::size_t hi) {
    return std::accumulate(increments.begin() + lo, increments.begin() + hi, 0.0) / (hi - lo);
  });
  (void)batch_mean;
  return make_rate_estimate(rate, se, n, symbol_duration_s);
}

RateEstimate estimate_channel_rate(const Channel& channel, const Priors& priors, std::size_t n,
                                   std::uint64_t seed, SampleMode mode) {
  const RunRecord trace = run_trace(channel, priors.p1, n, seed, mode);
  return channel_rate_from_trace(channel.table, priors, trace, channel.config.symbol_duration_s);
}

RateEstimate estimate_channel_rate(const StateTable& table, const Priors& priors,
                                   double symbol_duration_s, std::size_t n, std::uint64_t seed) {
  const RunRecord trace = run_trace(table, priors.p1, n, seed);
  return channel_rate_from_trace(table, priors, trace, symbol_duration_s);
}

double binary_entropy(double p) {
  if (p <= 0.0 || p >= 1.0) return 0.0;
  return -(p * std::log2(p) + (1.0 - p) * std::log2(1.0 - p));
}

JointCounts& JointCounts::operator+=(const JointCounts& o) {
  for (int i = 0; i < 2; ++i)
    for (int j = 0; j < 2; ++j) c[i][j] += o.c[i][j];
  return *this;
}

double plugin_mutual_information(const JointCounts& joint) {
  const double total = static_cast<double>(joint.total());
  if (total == 0.0) return 0.0;
  double px[2], pxh[2];
  for (int i = 0; i < 2; ++i) {
    px[i] = (joint.c[i][0] + joint.c[i][1]) / total;
    pxh[i] = (joint.c[0][i] + joint.c[1][i]) / total;
  }
  double mi = 0.0;
  for (int i = 0; i < 2; ++i) {
    for (int j = 0; j < 2; ++j) {
      if (joint.c[i][j] == 0) continue;
      const double p = joint.c[i][j] / total;
      mi += p * std::log2(p / (px[i] * pxh[j]));
    }
  }
  return std::max(mi, 0.0);
}

DecisionTrace run_detector(Detector& detector, const RunRecord& trace) {
  detector.reset();
  DecisionTrace out;
  out.decisions.resize(trace.size());
  out.statistics.resize(trace.size());
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const DetectorOutput o = detector.step({trace.counts[t], trace.states[t]});
    out.decisions[t] = o.decision;
    out.statistics[t] = o.statistic;
  }
  return out;
}

double bit_error_rate(std::span<const Bit> bits, std::span<const Bit> decisions) {
  if (bits.size() != decisions.size() || bits.empty())
    throw std::invalid_argument("bit_error_rate: size mismatch");
  std::size_t errors = 0;
  for (std::size_t t = 0; t < bits.size(); ++t) errors += bits[t] != decisions[t];
  return static_cast<double>(errors) / static_cast<double>(bits.size());
}

RateEstimate hard_decision_rate(std::span<const Bit> bits, std::span<const Bit> decisions,
                                double symbol_duration_s) {
  const std::size_t n = bits.size();
  if (decisions.size() != n || n < 2) throw std::invalid_argument("hard_decision_rate: bad sizes");
  auto joint_over = [&](std::size_t lo, std::size_t hi) {
    JointCounts j;
    for (std::size_t t = lo; t < hi; ++t) j.add(bits[t], decisions[t]);
    return j;
  };
  const double rate = plugin_mutual_information(joint_over(0, n));
  const auto [batch_mean, se] = batch_spread(n, [&](std::size_t lo, std::size_t hi) {
    return plugin_mutual_information(joint_over(lo, hi));
  });
  (void)batch_mean;
  return make_rate_estimate(rate, se, n, symbol_duration_s);
}

std::vector<StateId> merge_rare_states(std::span<const std::uint64_t> visits,
                                       std::size_t min_visits) {
  const std::size_t n = visits.size();
  std::vector<StateId> kept;
  for (std::size_t s = 0; s < n; ++s)
    if (visits[s] >= min_visits) kept.push_back(static_cast<StateId>(s));
  std::vector<StateId> map(n, 0);
  if (kept.empty()) return map;
  for (std::size_t s = 0; s < n; ++s) {
    if (visits[s] >= min_visits) {
      map[s] = static_cast<StateId>(s);
      continue;
    }
    int best = std::numeric_limits<int>::max();
    for (StateId k : kept) {
      const int d = std::popcount(static_cast<StateId>(s) ^ k);
      if (d < best) {
        best = d;
        map[s] = k;
      }
    }
  }
  return map;
}

namespace {

double conditional_mi(std::span<const Bit> bits, std::span<const Bit> decisions,
                      std::span<const StateId> states, std::span<const StateId> merge,
                      std::size_t lo, std::size_t hi) {
  std::vector<JointCounts> per_state(merge.size());
  for (std::size_t t = lo; t < hi; ++t) per_state[merge[states[t]]].add(bits[t], decisions[t]);
  const double total = static_cast<double>(hi - lo);
  double acc = 0.0;
  for (const JointCounts& j : per_state) {
    const auto visits = j.total();
    if (visits == 0) continue;
    acc += (visits / total) * plugin_mutual_information(j);
  }
  return acc;
}

}  // namespace

RateEstimate genie_conditional_rate(std::span<const Bit> bits, std::span<const Bit> decisions,
                                    std::span<const StateId> states, std::size_t num_states,
                                    double symbol_duration_s, std::size_t min_visits) {
  const std::size_t n = bits.size();
  if (decisions.size() != n || states.size() != n || n < 2)
    throw std::invalid_argument("genie_conditional_rate: bad sizes");
  std::vector<std::uint64_t> visits(num_states, 0);
  for (StateId s : states) {
    if (s >= num_states) throw std::invalid_argument("genie_conditional_rate: state out of range");
    ++visits[s];
  }
  const std::vector<StateId> merge = merge_rare_states(visits, min_visits);
  const double rate = conditional_mi(bits, decisions, states, merge, 0, n);
  const auto [batch_mean, se] = batch_spread(n, [&](std::size_t lo, std::size_t hi) {
    return conditional_mi(bits, decisions, states, merge, lo, hi);
  });
  (void)batch_mean;
  return make_rate_estimate(rate, se, n, symbol_duration_s);
}

RateEstimate estimate_hard_decision_rate(Detector& detector, const RunRecord& trace,
                                         double symbol_duration_s) {
  const DecisionTrace d = run_detector(detector, trace);
  return hard_decision_rate(trace.bits, d.decisions, symbol_duration_s);
}

RateEstimate estimate_hard_decision_rate(Detector& detector, const Channel& channel,
                                         const Priors& priors, std::size_t n, std::uint64_t seed,
                                         SampleMode mode) {
  return estimate_hard_decision_rate(detector, run_trace(channel, priors.p1, n, seed, mode),
                                     channel.config.symbol_duration_s);
}

RateEstimate estimate_genie_conditional_rate(Detector& detector, const RunRecord& trace,
                                             std::size_t num_states, double symbol_duration_s) {
  const DecisionTrace d = run_detector(detector, trace);
  return genie_conditional_rate(trace.bits, d.decisions, trace.states, num_states,
                                symbol_duration_s);
}

RateEstimate estimate_genie_conditional_rate(Detector& detector, const Channel& channel,
                                             const Priors& priors, std::size_t n,
                                             std::uint64_t seed, SampleMode mode) {
  return estimate_genie_conditional_rate(detector, run_trace(channel, priors.p1, n, seed, mode),
                                         channel.table.num_states(),
                                         channel.config.symbol_duration_s);
}

std::vector<double> default_threshold_grid(const Channel& channel, std::size_t points) {
  if (points < 2) throw std::invalid_argument("threshold grid needs at least two points");
  const double top = channel.config.molecules_per_on * channel.taps.sum();
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i)
    grid[i] = top * static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

ThresholdSweep sweep_fixed_threshold_rate(const RunRecord& trace, std::span<const double> grid,
                                          double symbol_duration_s, std::size_t num_states) {
  if (grid.empty()) throw std::invalid_argument("threshold sweep: empty grid");
  ThresholdSweep out;
  out.rates.resize(grid.size());
  std::vector<Bit> decisions(trace.size());
  bool have_best = false;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    for (std::size_t t = 0; t < trace.size(); ++t)
      decisions[t] = fixed_threshold_decide(trace.counts[t], grid[i]);
    const RateEstimate est =
        num_states > 0 ? genie_conditional_rate(trace.bits, decisions, trace.states, num_states,
                                                symbol_duration_s)
                       : hard_decision_rate(trace.bits, decisions, symbol_duration_s);
    out.rates[i] = est.rate;
    if (!have_best || est.rate > out.best.rate) {
      have_best = true;
      out.best = est;
      out.best_threshold = grid[i];
      out.best_index = i;
    }
  }
  return out;
}

}  // namespace mcvd
