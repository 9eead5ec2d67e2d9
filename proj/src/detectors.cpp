#include "mcvd/detectors.hpp"

#include <Eigen/Dense>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <algorithm>
#include <cmath>
#include <limits>

namespace mcvd {

double soft_bamap_llr(const Belief& belief, const StateLikelihoods& lik, const Priors& priors) {
  const auto w = belief.log_weights();
  const std::size_t n = w.size();
  double hi0 = kNegInf, hi1 = kNegInf;
  for (std::size_t s = 0; s < n; ++s) {
    hi0 = std::max(hi0, w[s] + lik.log_f0[s]);
    hi1 = std::max(hi1, w[s] + lik.log_f1[s]);
  }
  double acc0 = 0.0, acc1 = 0.0;
  for (std::size_t s = 0; s < n; ++s) {
    acc0 += std::exp(w[s] + lik.log_f0[s] - hi0);
    acc1 += std::exp(w[s] + lik.log_f1[s] - hi1);
  }
  const double num = priors.log_p1 + hi1 + std::log(acc1);
  const double den = priors.log_p0 + hi0 + std::log(acc0);
  return num - den;
}

double soft_bamap_llr(const Belief& belief, double y, const StateTable& table,
                      const Priors& priors) {
  return soft_bamap_llr(belief, evaluate_likelihoods(y, table), priors);
}

MixtureMoments bamap_moments(const Belief& belief, const StateTable& table) {
  const std::size_t n = table.num_states();
  if (belief.num_states() != n) throw std::invalid_argument("belief size does not match table");
  const auto alpha = belief.probabilities();
  MixtureMoments mm;
  for (std::size_t s = 0; s < n; ++s) {
    mm.mean0 += alpha[s] * table.mean(0, static_cast<StateId>(s));
    mm.mean1 += alpha[s] * table.mean(1, static_cast<StateId>(s));
  }
  // sum_s alpha (sigma^2 + mu^2) - mu_mix^2, accumulated around the mixture
  // mean to avoid cancellation.
  for (std::size_t s = 0; s < n; ++s) {
    const auto id = static_cast<StateId>(s);
    const double d0 = table.mean(0, id) - mm.mean0;
    const double d1 = table.mean(1, id) - mm.mean1;
    mm.var0 += alpha[s] * (table.variance(0, id) + d0 * d0);
    mm.var1 += alpha[s] * (table.variance(1, id) + d1 * d1);
  }
  return mm;
}

namespace {

// Log of p_0 N(tau; mean0, v0) / (p_1 N(tau; mean1, v1)) and its derivative.
struct MapResidual {
  double value;
  double slope;
};

MapResidual map_log_residual(double tau, double mean0, double v0, double mean1, double v1,
                             const Priors& priors) {
  const double d0 = tau - mean0;
  const double d1 = tau - mean1;
  const double value = (priors.log_p0 - 0.5 * std::log(v0) - d0 * d0 / (2.0 * v0)) -
                       (priors.log_p1 - 0.5 * std::log(v1) - d1 * d1 / (2.0 * v1));
  return {value, -d0 / v0 + d1 / v1};
}

}  // namespace

double bamap_threshold(const MixtureMoments& mm, const Priors& priors) {
  if (!(mm.mean1 > mm.mean0))
    throw DegenerateMoments("bamap_threshold: need mean1 > mean0");
  if (priors.p1 <= 0.0) return std::numeric_limits<double>::infinity();
  if (priors.p0 <= 0.0) return -std::numeric_limits<double>::infinity();

  const double v0 = std::max(mm.var0, kVarianceFloor);
  const double v1 = std::max(mm.var1, kVarianceFloor);
  const double mid = 0.5 * (mm.mean0 + mm.mean1);
  const double half_gap = 0.5 * (mm.mean1 - mm.mean0);
  const double log_odds = priors.log_p0 - priors.log_p1;

  if (std::abs(v1 - v0) <= kEqualVarianceTolerance * std::max(v0, v1)) {
    const double v = 0.5 * (v0 + v1);
    return mid + v * log_odds / (mm.mean1 - mm.mean0);
  }

  // In u = tau - mid:  (v0 - v1) u^2 - 2 d (v0 + v1) u + (v0 - v1) d^2 + K = 0
  // with d the half gap and K = 2 v0 v1 [log(p0/p1) + 0.5 log(v1/v0)].
  const double a = v0 - v1;
  const double b = -2.0 * half_gap * (v0 + v1);
  const double k = 2.0 * v0 * v1 * (log_odds + 0.5 * std::log(v1 / v0));
  const double c = a * half_gap * half_gap + k;
  const double disc = b * b - 4.0 * a * c;
  if (disc < 0.0) return mid;

  const double q = -0.5 * (b + std::copysign(std::sqrt(disc), b));
  const double u_far = q / a;
  const double u_near = q != 0.0 ? c / q : u_far;
  double tau = mid + (std::abs(u_near) <= std::abs(u_far) ? u_near : u_far);

  // Newton polish on the log residual; keep a step only if it helps.
  for (int iter = 0; iter < 3; ++iter) {
    const MapResidual r = map_log_residual(tau, mm.mean0, v0, mm.mean1, v1, priors);
    if (r.value == 0.0 || r.slope == 0.0) break;
    const double next = tau - r.value / r.slope;
    const MapResidual rn = map_log_residual(next, mm.mean0, v0, mm.mean1, v1, priors);
    if (!(std::abs(rn.value) < std::abs(r.value))) break;
    tau = next;
  }
  return tau;
}

Belief initial_belief(std::size_t num_states, BeliefInit init) {
  return init == BeliefInit::kUniform ? Belief::uniform(num_states)
                                      : Belief::point_mass(num_states, 0);
}

SoftBamapDetector::SoftBamapDetector(const StateTable& table, Priors priors, BeliefInit init)
    : table_(&table),
      priors_(priors),
      init_(init),
      engine_(table, priors),
      belief_(initial_belief(table.num_states(), init)) {}

void SoftBamapDetector::reset() { belief_ = initial_belief(table_->num_states(), init_); }

DetectorOutput SoftBamapDetector::step(const SymbolObservation& obs) {
  evaluate_likelihoods(obs.count, *table_, lik_);
  const double llr = engine_.update(belief_, lik_).llr();
  return {llr > 0.0 ? Bit{1} : Bit{0}, llr};
}

BamapDetector::BamapDetector(const StateTable& table, Priors priors, BeliefInit init)
    : table_(&table),
      priors_(priors),
      init_(init),
      engine_(table, priors),
      belief_(initial_belief(table.num_states(), init)) {}

void BamapDetector::reset() { belief_ = initial_belief(table_->num_states(), init_); }

DetectorOutput BamapDetector::step(const SymbolObservation& obs) {
  moments_ = bamap_moments(belief_, *table_);
  const double tau = bamap_threshold(moments_, priors_);
  evaluate_likelihoods(obs.count, *table_, lik_);
  engine_.update(belief_, lik_);
  return {fixed_threshold_decide(obs.count, tau), tau};
}

MmseFilter design_mmse_filter(const TapSet& taps, int molecules_per_on, const Priors& priors,
                              int length) {
  if (length < 1) throw std::invalid_argument("design_mmse_filter: length must be >= 1");
  if (!(priors.p1 > 0.0 && priors.p0 > 0.0))
    throw std::invalid_argument("design_mmse_filter: needs 0 < p1 < 1");
  const double n = molecules_per_on;
  const double input_var = priors.p0 * priors.p1;
  const auto& h = taps.taps;
  const int k_max = static_cast<int>(h.size());

  double noise_var = 0.0;
  for (double v : taps.var_factors) noise_var += v;
  noise_var *= n * priors.p1;
  noise_var = std::max(noise_var, kVarianceFloor);

  auto autocorr = [&](int lag) {
    double acc = 0.0;
    for (int k = 0; k + lag < k_max; ++k) acc += h[k] * h[k + lag];
    return acc;
  };

  Eigen::MatrixXd cov(length, length);
  for (int i = 0; i < length; ++i)
    for (int j = 0; j < length; ++j)
      cov(i, j) = n * n * input_var * autocorr(std::abs(i - j)) + (i == j ? noise_var : 0.0);
  Eigen::VectorXd cross = Eigen::VectorXd::Zero(length);
  cross(0) = n * h[0] * input_var;  // only y_t carries X_t in a causal window

  const Eigen::VectorXd w = cov.ldlt().solve(cross);
  MmseFilter f;
  f.weights.assign(w.data(), w.data() + w.size());
  f.offset = n * priors.p1 * taps.sum();
  return f;
}

GenieMmseDetector::GenieMmseDetector(const Channel& channel, Priors priors, int length)
    : channel_(&channel),
      priors_(priors),
      filter_(design_mmse_filter(channel.taps, channel.config.molecules_per_on, priors,
                                 length > 0 ? length : channel.taps.memory_order + 1)) {
  reset();
}

void GenieMmseDetector::reset() { window_.assign(filter_.weights.size(), 0.0); }

double GenieMmseDetector::equalize(double y) {
  window_.pop_back();
  window_.push_front(y);
  double z = 0.0;
  for (std::size_t j = 0; j < window_.size(); ++j)
    z += filter_.weights[j] * (window_[j] - filter_.offset);
  return z;
}

double GenieMmseDetector::threshold(StateId s) const {
  if (!calibrated()) throw Uncalibrated("genie_mmse: calibrate() before use");
  return thresholds_.at(s);
}

DetectorOutput GenieMmseDetector::step(const SymbolObservation& obs) {
  if (!calibrated()) throw Uncalibrated("genie_mmse: calibrate() before use");
  const double z = equalize(obs.count);
  return {fixed_threshold_decide(z, thresholds_.at(obs.true_state)), z};
}

void GenieMmseDetector::calibrate(std::size_t symbols, std::uint64_t seed, SampleMode mode) {
  const RunRecord trace =
      run_trace(*channel_, priors_.p1, symbols,
                derive_seed(seed, {static_cast<std::uint64_t>(StreamPurpose::kCalibration)}),
                mode);
  calibrate(trace);
}

namespace {

struct RunningMoments {
  std::size_t n = 0;
  double mean = 0.0;
  double m2 = 0.0;

  void add(double v) {
    ++n;
    const double d = v - mean;
    mean += d / static_cast<double>(n);
    m2 += d * (v - mean);
  }
  double variance() const { return n > 1 ? m2 / static_cast<double>(n - 1) : 0.0; }
};

}  // namespace

void GenieMmseDetector::calibrate(const RunRecord& trace) {
  const std::size_t states = channel_->table.num_states();
  std::vector<RunningMoments> per_state(2 * states);
  RunningMoments pooled[2];

  reset();
  for (std::size_t t = 0; t < trace.size(); ++t) {
    const double z = equalize(trace.counts[t]);
    const Bit x = trace.bits[t];
    per_state[x * states + trace.states[t]].add(z);
    pooled[x].add(z);
  }
  reset();
  if (pooled[0].n < 2 || pooled[1].n < 2)
    throw std::invalid_argument("genie_mmse calibration needs both inputs at least twice");

  const MixtureMoments pooled_mm{pooled[0].mean, pooled[0].variance(), pooled[1].mean,
                                 pooled[1].variance()};
  const double pooled_tau = bamap_threshold(pooled_mm, priors_);

  std::vector<double> taus(states);
  for (std::size_t s = 0; s < states; ++s) {
    const RunningMoments& r0 = per_state[s];
    const RunningMoments& r1 = per_state[states + s];
    MixtureMoments mm = pooled_mm;
    if (r0.n >= 2) {
      mm.mean0 = r0.mean;
      mm.var0 = r0.variance();
    }
    if (r1.n >= 2) {
      mm.mean1 = r1.mean;
      mm.var1 = r1.variance();
    }
    try {
      taus[s] = bamap_threshold(mm, priors_);
    } catch (const DegenerateMoments&) {
      taus[s] = pooled_tau;
    }
  }
  thresholds_ = std::move(taus);
}

PowerAdjustTransmitter::PowerAdjustTransmitter(const TapSet& taps, int molecules_per_on)
    : taps_(&taps), budget_(molecules_per_on) {
  reset();
}

void PowerAdjustTransmitter::reset() {
  history_.assign(static_cast<std::size_t>(taps_->memory_order), 0.0);
}

double PowerAdjustTransmitter::residual() const {
  double r = 0.0;
  for (std::size_t k = 1; k < taps_->taps.size(); ++k) r += taps_->taps[k] * history_[k - 1];
  return r;
}

double PowerAdjustTransmitter::emit(Bit x) {
  double emission = 0.0;
  if (x) {
    const double h0 = taps_->taps[0];
    emission = h0 > 0.0 ? std::clamp(budget_ - residual() / h0, 0.0, budget_) : budget_;
  }
  if (!history_.empty()) {
    history_.pop_back();
    history_.push_front(emission);
  }
  return emission;
}

PowerAdjustedTrace run_power_adjusted_trace(const Channel& channel, double prior_p1,
                                            std::size_t n, std::uint64_t seed,
                                            SampleMode mode) {
  if (n < 1) throw std::invalid_argument("run_power_adjusted_trace: n must be >= 1");
  Engine bit_engine = make_engine(seed, StreamPurpose::kBits);
  return run_power_adjusted_trace(channel, generate_bits(n, prior_p1, bit_engine), seed, mode);
}

PowerAdjustedTrace run_power_adjusted_trace(const Channel& channel, std::vector<Bit> bits,
                                            std::uint64_t seed, SampleMode mode) {
  const std::size_t n = bits.size();
  if (n < 1) throw std::invalid_argument("run_power_adjusted_trace: n must be >= 1");
  Engine noise_engine = make_engine(seed, StreamPurpose::kNoise);
  const TapSet& taps = channel.taps;
  const int m = taps.memory_order;

  PowerAdjustedTrace out;
  out.record.seed = seed;
  out.record.mode = mode;
  out.record.bits = std::move(bits);
  out.record.states.resize(n);
  out.record.counts.resize(n);
  out.emissions.resize(n);

  PowerAdjustTransmitter tx(taps, channel.config.molecules_per_on);
  StateId s = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const Bit x = out.record.bits[t];
    out.record.states[t] = s;
    out.emissions[t] = tx.emit(x);
    const int reach = static_cast<int>(std::min<std::size_t>(t, static_cast<std::size_t>(m)));
    if (mode == SampleMode::kGaussian) {
      double mean = 0.0, var = 0.0;
      for (int k = 0; k <= reach; ++k) {
        mean += taps.taps[k] * out.emissions[t - k];
        var += taps.var_factors[k] * out.emissions[t - k];
      }
      boost::random::normal_distribution<double> normal(mean,
                                                        std::sqrt(std::max(var, kVarianceFloor)));
      out.record.counts[t] = normal(noise_engine);
    } else {
      std::int64_t total = 0;
      for (int k = 0; k <= reach; ++k) {
        const auto molecules = static_cast<std::int64_t>(std::llround(out.emissions[t - k]));
        if (molecules == 0 || taps.taps[k] <= 0.0) continue;
        boost::random::binomial_distribution<std::int64_t, double> draw(molecules, taps.taps[k]);
        total += draw(noise_engine);
      }
      out.record.counts[t] = static_cast<double>(total);
    }
    s = channel.table.next_state(s, x);
  }
  return out;
}

}  // namespace mcvd
