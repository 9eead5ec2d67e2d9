#pragma once

// Causal, zero-delay symbol detectors.
//
//  * SoftBamapDetector  - sign of the belief-weighted mixture LLR.
//  * BamapDetector      - per-symbol MAP threshold between two moment-matched
//                         Gaussians built from the belief.
//  * FixedThresholdDetector
//  * GenieMmseDetector  - linear MMSE FIR equalizer followed by a threshold
//                         chosen from the true ISI state.
//  * PowerAdjustTransmitter - transmitter-side residual cancellation; decoded
//                         with a fixed threshold.
//
// LLRs are natural-log.

#include <cstdint>
#include <deque>
#include <memory>
#include <optional>
#include <stdexcept>
#include <string_view>
#include <vector>

#include "mcvd/belief_engine.hpp"
#include "mcvd/channel_model.hpp"
#include "mcvd/sequence_simulator.hpp"

namespace mcvd {

class DegenerateMoments : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

class Uncalibrated : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

struct MixtureMoments {
  double mean0 = 0.0;
  double var0 = 0.0;
  double mean1 = 0.0;
  double var1 = 0.0;
};

/// Lambda(y) = log[p_1 sum_s alpha(s) N(y; mu_{1,s}, .)] - log[p_0 sum_s alpha(s) N(y; mu_{0,s}, .)]
double soft_bamap_llr(const Belief& belief, const StateLikelihoods& lik, const Priors& priors);
double soft_bamap_llr(const Belief& belief, double y, const StateTable& table,
                      const Priors& priors);

/// First and second moments of the two belief-weighted mixtures.
MixtureMoments bamap_moments(const Belief& belief, const StateTable& table);

/// Relative variance gap below which the closed-form threshold is used.
inline constexpr double kEqualVarianceTolerance = 1e-9;

/// Solves p_0 N(tau; mean0, var0) = p_1 N(tau; mean1, var1).
///
/// Equal variances use the closed form. Otherwise the quadratic in tau is
/// solved and the real root closest to the midpoint of the means is kept; a
/// negative discriminant falls back to the midpoint. Variances are floored at
/// kVarianceFloor. Throws DegenerateMoments unless mean1 > mean0.
double bamap_threshold(const MixtureMoments& mm, const Priors& priors);

/// Ties go to 0.
inline Bit fixed_threshold_decide(double y, double tau) { return y > tau ? 1 : 0; }

struct DetectorOutput {
  Bit decision = 0;
  double statistic = 0.0;  // LLR, threshold, or equalizer output depending on detector
};

/// What the receiver sees for one symbol. `true_state` is only read by
/// genie-aided detectors.
struct SymbolObservation {
  double count = 0.0;
  StateId true_state = 0;
};

class Detector {
 public:
  virtual ~Detector() = default;
  virtual std::string_view name() const = 0;
  /// Returns to the cold-start state.
  virtual void reset() = 0;
  virtual DetectorOutput step(const SymbolObservation& obs) = 0;
};

enum class BeliefInit { kColdStart, kUniform };

Belief initial_belief(std::size_t num_states, BeliefInit init);

class SoftBamapDetector final : public Detector {
 public:
  SoftBamapDetector(const StateTable& table, Priors priors,
                    BeliefInit init = BeliefInit::kColdStart);

  std::string_view name() const override { return "soft_bamap"; }
  void reset() override;
  DetectorOutput step(const SymbolObservation& obs) override;

  const Belief& belief() const { return belief_; }
  const StateLikelihoods& last_likelihoods() const { return lik_; }

 private:
  const StateTable* table_;
  Priors priors_;
  BeliefInit init_;
  BeliefEngine engine_;
  Belief belief_;
  StateLikelihoods lik_;
};

class BamapDetector final : public Detector {
 public:
  BamapDetector(const StateTable& table, Priors priors, BeliefInit init = BeliefInit::kColdStart);

  std::string_view name() const override { return "bamap"; }
  void reset() override;
  /// statistic = tau_t.
  DetectorOutput step(const SymbolObservation& obs) override;

  const Belief& belief() const { return belief_; }
  const MixtureMoments& last_moments() const { return moments_; }

 private:
  const StateTable* table_;
  Priors priors_;
  BeliefInit init_;
  BeliefEngine engine_;
  Belief belief_;
  StateLikelihoods lik_;
  MixtureMoments moments_;
};

class FixedThresholdDetector final : public Detector {
 public:
  explicit FixedThresholdDetector(double tau) : tau_(tau) {}

  std::string_view name() const override { return "fixed"; }
  void reset() override {}
  DetectorOutput step(const SymbolObservation& obs) override {
    return {fixed_threshold_decide(obs.count, tau_), tau_};
  }
  double threshold() const { return tau_; }

 private:
  double tau_;
};

/// z_t = sum_j weights[j] * (y_{t-j} - offset); counts before t = 0 are 0.
struct MmseFilter {
  std::vector<double> weights;
  double offset = 0.0;
};

/// Causal length-L Wiener filter estimating X_t from (y_t .. y_{t-L+1}) under
/// i.i.d. Bernoulli inputs. Signal covariance comes from the taps; the noise
/// is white with the state-averaged variance N p_1 sum_k v_k.
MmseFilter design_mmse_filter(const TapSet& taps, int molecules_per_on, const Priors& priors,
                              int length);

class GenieMmseDetector final : public Detector {
 public:
  inline static constexpr std::size_t kDefaultCalibrationSymbols = 100000;

  /// length <= 0 selects m + 1.
  GenieMmseDetector(const Channel& channel, Priors priors, int length = 0);

  std::string_view name() const override { return "genie_mmse"; }
  void reset() override;
  /// statistic = z_t. Throws Uncalibrated before calibrate().
  DetectorOutput step(const SymbolObservation& obs) override;

  /// Estimates per-(x, s) moments of z on a fresh trace and derives one MAP
  /// threshold per state. Pairs seen fewer than twice use the moments pooled
  /// over all states.
  void calibrate(std::size_t symbols, std::uint64_t seed, SampleMode mode = SampleMode::kGaussian);
  /// Same, on a caller-supplied trace.
  void calibrate(const RunRecord& trace);

  bool calibrated() const { return !thresholds_.empty(); }
  const MmseFilter& filter() const { return filter_; }
  double threshold(StateId s) const;
  /// Filter output for the next count, without deciding.
  double equalize(double y);

 private:
  const Channel* channel_;
  Priors priors_;
  MmseFilter filter_;
  std::deque<double> window_;  // most recent first
  std::vector<double> thresholds_;
};

/// Transmitter that pre-cancels the interference it will cause:
/// N_t = clamp(N_Tx - residual_t / h_0, 0, N_Tx) when x_t = 1, else 0, with
/// residual_t = sum_{k=1}^{m} h_k N_{t-k}.
class PowerAdjustTransmitter {
 public:
  PowerAdjustTransmitter(const TapSet& taps, int molecules_per_on);

  double residual() const;
  /// Emission for input x; advances the history.
  double emit(Bit x);
  void reset();
  /// Past emissions, most recent first (length m).
  const std::deque<double>& history() const { return history_; }

 private:
  const TapSet* taps_;
  double budget_;
  std::deque<double> history_;
};

struct PowerAdjustedTrace {
  RunRecord record;  // states hold the true ISI bit history
  std::vector<double> emissions;
};

/// Channel driven by a PowerAdjustTransmitter. Gaussian mode uses
/// mean sum_k h_k N_{t-k} and variance sum_k v_k N_{t-k}; binomial mode
/// rounds each emission to an integer molecule count.
PowerAdjustedTrace run_power_adjusted_trace(const Channel& channel, double prior_p1,
                                            std::size_t n, std::uint64_t seed,
                                            SampleMode mode = SampleMode::kGaussian);

/// Same, with a caller-chosen bit sequence.
PowerAdjustedTrace run_power_adjusted_trace(const Channel& channel, std::vector<Bit> bits,
                                            std::uint64_t seed,
                                            SampleMode mode = SampleMode::kGaussian);

}  // namespace mcvd
