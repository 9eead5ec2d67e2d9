#include "mcvd/belief_engine.hpp"

#include <Eigen/Core>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <ostream>

namespace mcvd {

namespace {
thread_local std::uint64_t t_density_evaluations = 0;
}

namespace instrumentation {
std::uint64_t density_evaluations() { return t_density_evaluations; }
void reset_density_evaluations() { t_density_evaluations = 0; }
void add_density_evaluations(std::uint64_t n) { t_density_evaluations += n; }
}  // namespace instrumentation

Priors Priors::from_p1(double p1) {
  if (!(p1 >= 0.0 && p1 <= 1.0)) throw std::invalid_argument("prior p1 outside [0, 1]");
  Priors p;
  p.p1 = p1;
  p.p0 = 1.0 - p1;
  p.log_p1 = p1 > 0.0 ? std::log(p1) : kNegInf;
  p.log_p0 = p.p0 > 0.0 ? std::log1p(-p1) : kNegInf;
  return p;
}

double log_sum_exp(std::span<const double> values) {
  double hi = kNegInf;
  for (double v : values) hi = std::max(hi, v);
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (double v : values) acc += std::exp(v - hi);
  return hi + std::log(acc);
}

double gaussian_log_density(double y, double mean, double variance) {
  ++t_density_evaluations;
  const double v = std::max(variance, kVarianceFloor);
  const double d = y - mean;
  return -0.5 * std::log(2.0 * std::numbers::pi * v) - d * d / (2.0 * v);
}

Belief Belief::point_mass(std::size_t num_states, StateId state) {
  if (state >= num_states) throw std::invalid_argument("point_mass: state out of range");
  std::vector<double> p(num_states, 0.0);
  p[state] = 1.0;
  return Belief(std::move(p));
}

Belief Belief::uniform(std::size_t num_states) {
  if (num_states == 0) throw std::invalid_argument("uniform belief over zero states");
  return Belief(std::vector<double>(num_states, 1.0 / static_cast<double>(num_states)));
}

Belief Belief::from_log_weights(std::vector<double> log_weights) {
  const double z = log_sum_exp(log_weights);
  if (!std::isfinite(z)) throw NumericalFailure("belief normalization: all weights vanished");
  for (double& w : log_weights) w = std::exp(w - z);
  return Belief(std::move(log_weights));
}

std::vector<double> Belief::log_weights() const {
  std::vector<double> w(p_.size());
  std::transform(p_.begin(), p_.end(), w.begin(), [](double p) { return std::log(p); });
  return w;
}

double Belief::entropy_bits() const {
  double h = 0.0;
  for (double p : p_)
    if (p > 0.0) h -= p * std::log(p);
  return h / std::numbers::ln2;
}

void evaluate_likelihoods(double y, const StateTable& table, StateLikelihoods& out) {
  const std::size_t n = table.num_states();
  out.log_f0.resize(n);
  out.log_f1.resize(n);
  for (Bit x = 0; x < 2; ++x) {
    const double* mu = table.means(x);
    const double* norm = table.log_normalizers(x);
    const double* hp = table.half_precisions(x);
    double* dst = x ? out.log_f1.data() : out.log_f0.data();
    for (std::size_t s = 0; s < n; ++s) {
      const double d = y - mu[s];
      dst[s] = norm[s] - d * d * hp[s];
    }
  }
  t_density_evaluations += 2 * n;
}

StateLikelihoods evaluate_likelihoods(double y, const StateTable& table) {
  StateLikelihoods lik;
  evaluate_likelihoods(y, table, lik);
  return lik;
}

double predictive_log_density(const Belief& belief, const StateLikelihoods& lik,
                              const Priors& priors) {
  const auto w = belief.log_weights();
  double hi = kNegInf;
  for (std::size_t s = 0; s < w.size(); ++s) {
    hi = std::max({hi, w[s] + priors.log_p0 + lik.log_f0[s], w[s] + priors.log_p1 + lik.log_f1[s]});
  }
  if (hi == kNegInf) return kNegInf;
  double acc = 0.0;
  for (std::size_t s = 0; s < w.size(); ++s) {
    acc += std::exp(w[s] + priors.log_p0 + lik.log_f0[s] - hi) +
           std::exp(w[s] + priors.log_p1 + lik.log_f1[s] - hi);
  }
  return hi + std::log(acc);
}

double predictive_log_density(const Belief& belief, double y, const StateTable& table,
                              const Priors& priors) {
  return predictive_log_density(belief, evaluate_likelihoods(y, table), priors);
}

BeliefEngine::BeliefEngine(const StateTable& table, Priors priors)
    : table_(&table), priors_(priors), scratch_(table.num_states()) {}

double StepMasses::log_predictive() const { return log_add_exp(log_mass0, log_mass1); }

namespace {

// Below this the rescaled mass has lost too much range to trust.
constexpr double kMinLinearMass = 1e-280;

}  // namespace

StepMasses BeliefEngine::update(Belief& belief, const StateLikelihoods& lik) {
  const std::size_t n = table_->num_states();
  if (belief.num_states() != n) throw std::invalid_argument("belief size does not match table");
  const double* alpha = belief.p_.data();

  double c = kNegInf;
  for (std::size_t s = 0; s < n; ++s)
    if (alpha[s] > 0.0) c = std::max({c, lik.log_f0[s], lik.log_f1[s]});
  if (c == kNegInf) throw NumericalFailure("belief update: all weights vanished");

  g0_.resize(n);
  g1_.resize(n);
  using Eigen::ArrayXd;
  const Eigen::Map<const ArrayXd> a(alpha, static_cast<Eigen::Index>(n));
  Eigen::Map<ArrayXd> g0(g0_.data(), static_cast<Eigen::Index>(n));
  Eigen::Map<ArrayXd> g1(g1_.data(), static_cast<Eigen::Index>(n));
  g0 = a * (Eigen::Map<const ArrayXd>(lik.log_f0.data(), static_cast<Eigen::Index>(n)) - c).exp();
  g1 = a * (Eigen::Map<const ArrayXd>(lik.log_f1.data(), static_cast<Eigen::Index>(n)) - c).exp();

  const int m = table_->memory_order();
  double acc[2] = {0.0, 0.0};
  if (m == 0) {
    acc[0] = priors_.p0 * g0_[0];
    acc[1] = priors_.p1 * g1_[0];
    scratch_[0] = acc[0] + acc[1];
  } else {
    // Each target s' has input x = bit 0 of s' and the two predecessors that
    // differ only in their oldest bit.
    const StateId high = StateId{1} << (m - 1);
    const std::size_t half = n / 2;
    for (std::size_t pred_a = 0; pred_a < half; ++pred_a) {
      const std::size_t pred_b = pred_a | high;
      const double to0 = priors_.p0 * (g0_[pred_a] + g0_[pred_b]);
      const double to1 = priors_.p1 * (g1_[pred_a] + g1_[pred_b]);
      scratch_[2 * pred_a] = to0;
      scratch_[2 * pred_a + 1] = to1;
      acc[0] += to0;
      acc[1] += to1;
    }
  }
  const double total = acc[0] + acc[1];
  if (!(total >= kMinLinearMass) || !std::isfinite(total)) return update_log_domain(belief, lik);

  StepMasses masses{c + std::log(acc[0]), c + std::log(acc[1])};
  const double inv = 1.0 / total;
  for (double& v : scratch_) v *= inv;
  std::swap(belief.p_, scratch_);
  scratch_.resize(n);
  return masses;
}

StepMasses BeliefEngine::update_log_domain(Belief& belief, const StateLikelihoods& lik) {
  const std::size_t n = table_->num_states();
  const std::vector<double> w = belief.log_weights();
  const double lp0 = priors_.log_p0;
  const double lp1 = priors_.log_p1;
  const int m = table_->memory_order();
  std::vector<double> log_next(n);
  StepMasses masses;
  if (m == 0) {
    masses.log_mass0 = w[0] + lp0 + lik.log_f0[0];
    masses.log_mass1 = w[0] + lp1 + lik.log_f1[0];
    log_next[0] = masses.log_predictive();
  } else {
    const StateId high = StateId{1} << (m - 1);
    for (std::size_t target = 0; target < n; ++target) {
      const StateId pred_a = static_cast<StateId>(target >> 1);
      const StateId pred_b = pred_a | high;
      const double* lf = (target & 1U) ? lik.log_f1.data() : lik.log_f0.data();
      const double lp = (target & 1U) ? lp1 : lp0;
      log_next[target] = log_add_exp(w[pred_a] + lf[pred_a], w[pred_b] + lf[pred_b]) + lp;
    }
    double hi = kNegInf;
    for (double v : log_next) hi = std::max(hi, v);
    if (hi == kNegInf) throw NumericalFailure("belief update: all weights vanished");
    double acc[2] = {0.0, 0.0};
    for (std::size_t target = 0; target < n; ++target)
      acc[target & 1U] += std::exp(log_next[target] - hi);
    masses.log_mass0 = hi + std::log(acc[0]);
    masses.log_mass1 = hi + std::log(acc[1]);
  }
  const double z = masses.log_predictive();
  if (!std::isfinite(z)) throw NumericalFailure("belief update: all weights vanished");
  for (std::size_t s = 0; s < n; ++s) belief.p_[s] = std::exp(log_next[s] - z);
  return masses;
}

StepMasses BeliefEngine::update(Belief& belief, double y) {
  evaluate_likelihoods(y, *table_, lik_);
  return update(belief, lik_);
}

void write_belief_rows(std::size_t t, const Belief& belief, std::ostream& out) {
  const auto old_precision = out.precision(17);
  for (std::size_t s = 0; s < belief.num_states(); ++s)
    out << t << ',' << s << ',' << belief.probability(static_cast<StateId>(s)) << '\n';
  out.precision(old_precision);
}

}  // namespace mcvd
