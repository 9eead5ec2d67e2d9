#pragma once

// Information-rate estimators. All rates are in bits per channel use.
//
//   channel rate:    R_n = (1/n) sum_t [log2 f(Y_t|S_t,X_t) - log2 p(Y_t|Y^{t-1})]
//   hard decisions:  plug-in I(X; X_hat) from the empirical 2x2 joint
//   genie:           sum_s P(s) I(X; X_hat | S = s)
//
// Standard errors come from batch means over kRateBatches contiguous batches.

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "mcvd/belief_engine.hpp"
#include "mcvd/channel_model.hpp"
#include "mcvd/detectors.hpp"
#include "mcvd/sequence_simulator.hpp"

namespace mcvd {

inline constexpr std::size_t kRateBatches = 100;
inline constexpr std::size_t kMinStateVisits = 100;
inline constexpr double kLog2E = 1.4426950408889634;  // bits per nat

struct RateEstimate {
  double rate = 0.0;       // bits / symbol
  double std_error = 0.0;  // bits / symbol
  std::size_t n = 0;
  double throughput = 0.0;  // bits / second, rate / T_s
};

RateEstimate make_rate_estimate(double rate, double std_error, std::size_t n,
                                double symbol_duration_s);

/// i_t = log2 f(y | s, x) - log2 p(y | F_{t-1}).
double info_density_increment(Bit x, StateId s, const Belief& belief,
                              const StateLikelihoods& lik, const Priors& priors);
double info_density_increment(double y, StateId s, Bit x, const Belief& belief,
                              const StateTable& table, const Priors& priors);

/// R_n over an existing trace, with a cold-start belief.
RateEstimate channel_rate_from_trace(const StateTable& table, const Priors& priors,
                                     const RunRecord& trace, double symbol_duration_s);

RateEstimate estimate_channel_rate(const Channel& channel, const Priors& priors, std::size_t n,
                                   std::uint64_t seed, SampleMode mode = SampleMode::kGaussian);
/// Synthetic table, Gaussian samples.
RateEstimate estimate_channel_rate(const StateTable& table, const Priors& priors,
                                   double symbol_duration_s, std::size_t n, std::uint64_t seed);

double binary_entropy(double p);

/// Counts indexed [x][x_hat].
struct JointCounts {
  std::array<std::array<std::uint64_t, 2>, 2> c{};

  void add(Bit x, Bit x_hat) { ++c[x][x_hat]; }
  std::uint64_t total() const { return c[0][0] + c[0][1] + c[1][0] + c[1][1]; }
  JointCounts& operator+=(const JointCounts& o);
};

/// Plug-in mutual information of the empirical joint, bits.
double plugin_mutual_information(const JointCounts& joint);

/// Feeds every count of `trace` through `detector` (after reset()).
struct DecisionTrace {
  std::vector<Bit> decisions;
  std::vector<double> statistics;
};
DecisionTrace run_detector(Detector& detector, const RunRecord& trace);

double bit_error_rate(std::span<const Bit> bits, std::span<const Bit> decisions);

RateEstimate hard_decision_rate(std::span<const Bit> bits, std::span<const Bit> decisions,
                                double symbol_duration_s);

/// Maps every state with fewer than `min_visits` visits to the visited state
/// at the smallest Hamming distance (ties to the smaller id). With no state
/// reaching min_visits everything maps to state 0.
std::vector<StateId> merge_rare_states(std::span<const std::uint64_t> visits,
                                       std::size_t min_visits = kMinStateVisits);

RateEstimate genie_conditional_rate(std::span<const Bit> bits, std::span<const Bit> decisions,
                                    std::span<const StateId> states, std::size_t num_states,
                                    double symbol_duration_s,
                                    std::size_t min_visits = kMinStateVisits);

RateEstimate estimate_hard_decision_rate(Detector& detector, const RunRecord& trace,
                                         double symbol_duration_s);
RateEstimate estimate_hard_decision_rate(Detector& detector, const Channel& channel,
                                         const Priors& priors, std::size_t n, std::uint64_t seed,
                                         SampleMode mode = SampleMode::kGaussian);

RateEstimate estimate_genie_conditional_rate(Detector& detector, const RunRecord& trace,
                                             std::size_t num_states, double symbol_duration_s);
RateEstimate estimate_genie_conditional_rate(Detector& detector, const Channel& channel,
                                             const Priors& priors, std::size_t n,
                                             std::uint64_t seed,
                                             SampleMode mode = SampleMode::kGaussian);

inline constexpr std::size_t kDefaultThresholdGridPoints = 64;

/// `points` thresholds evenly spanning [0, N_Tx * sum_k h_k].
std::vector<double> default_threshold_grid(const Channel& channel,
                                           std::size_t points = kDefaultThresholdGridPoints);

struct ThresholdSweep {
  double best_threshold = 0.0;
  RateEstimate best;
  std::vector<double> rates;  // one per grid point
  std::size_t best_index = 0;
};

/// Fixed-threshold decisions on `trace` for every grid point, keeping the
/// threshold with the largest hard-decision rate. With `num_states` > 0 the
/// objective is the genie conditional rate instead.
ThresholdSweep sweep_fixed_threshold_rate(const RunRecord& trace, std::span<const double> grid,
                                          double symbol_duration_s, std::size_t num_states = 0);

}  // namespace mcvd
