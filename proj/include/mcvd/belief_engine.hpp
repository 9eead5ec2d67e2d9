#pragma once

// Causal forward recursion over ISI states.
//
//   alpha_t(s) = Pr{S_t = s | Y^{t-1}}
//   alpha_{t+1}(s') ∝ sum_s alpha_t(s) sum_x p_x f(y_t | s, x) 1{s' = nxt(s, x)}
//
// Beliefs are stored as probabilities. Each step rescales the likelihoods by
// their largest value before exponentiating and falls back to the natural-log
// domain when the rescaled mass would underflow.

#include <cmath>
#include <cstdint>
#include <iosfwd>
#include <limits>
#include <span>
#include <stdexcept>
#include <utility>
#include <vector>

#include "mcvd/channel_model.hpp"

namespace mcvd {

inline constexpr double kNegInf = -std::numeric_limits<double>::infinity();

class NumericalFailure : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Input prior. Either probability may be zero.
struct Priors {
  double p0 = 0.5;
  double p1 = 0.5;
  double log_p0 = -0.6931471805599453;
  double log_p1 = -0.6931471805599453;

  static Priors from_p1(double p1);
  double log_prior(Bit x) const { return x ? log_p1 : log_p0; }
};

/// log(exp(a) + exp(b)) without overflow; -inf absorbs.
inline double log_add_exp(double a, double b);

/// log(sum_i exp(v_i)); -inf for an empty or all -inf input.
double log_sum_exp(std::span<const double> values);

namespace instrumentation {
/// Per-thread count of Gaussian log-density evaluations.
std::uint64_t density_evaluations();
void reset_density_evaluations();
void add_density_evaluations(std::uint64_t n);
}  // namespace instrumentation

/// log N(y; mean, variance) with the variance floored at kVarianceFloor.
double gaussian_log_density(double y, double mean, double variance);

class Belief {
 public:
  /// Point mass on `state` (state 0 is the cold start).
  static Belief point_mass(std::size_t num_states, StateId state = 0);
  static Belief uniform(std::size_t num_states);
  /// From raw log weights; normalizes.
  static Belief from_log_weights(std::vector<double> log_weights);

  std::size_t num_states() const { return p_.size(); }
  std::vector<double> log_weights() const;
  double log_weight(StateId s) const { return std::log(p_[s]); }
  double probability(StateId s) const { return p_[s]; }
  std::span<const double> probabilities() const { return p_; }
  /// Shannon entropy in bits.
  double entropy_bits() const;

 private:
  friend class BeliefEngine;
  explicit Belief(std::vector<double> p) : p_(std::move(p)) {}

  std::vector<double> p_;
};

/// log f(y | s, x) for every state and both inputs, computed once per symbol
/// and shared by the detectors, the predictive density and the update.
struct StateLikelihoods {
  std::vector<double> log_f0;
  std::vector<double> log_f1;

  std::span<const double> for_input(Bit x) const { return x ? log_f1 : log_f0; }
};

/// Fills `out` with exactly 2 * num_states Gaussian log-density evaluations.
void evaluate_likelihoods(double y, const StateTable& table, StateLikelihoods& out);
StateLikelihoods evaluate_likelihoods(double y, const StateTable& table);

/// log p(y | F_{t-1}) = log sum_s alpha(s) [p_0 f(y|s,0) + p_1 f(y|s,1)].
double predictive_log_density(const Belief& belief, const StateLikelihoods& lik,
                              const Priors& priors);
double predictive_log_density(const Belief& belief, double y, const StateTable& table,
                              const Priors& priors);

/// Owns the scratch buffers for repeated updates of one belief.
/// log sum_s alpha(s) p_x f(y | s, x) for x = 0, 1, a by-product of one
/// forward step. Their difference is the mixture LLR and their log-sum the
/// predictive density.
struct StepMasses {
  double log_mass0 = kNegInf;
  double log_mass1 = kNegInf;

  double llr() const { return log_mass1 - log_mass0; }
  double log_predictive() const;
};

class BeliefEngine {
 public:
  BeliefEngine(const StateTable& table, Priors priors);

  const StateTable& table() const { return *table_; }
  const Priors& priors() const { return priors_; }

  /// One forward step given precomputed likelihoods of y_t. Throws
  /// NumericalFailure if every weight underflows.
  StepMasses update(Belief& belief, const StateLikelihoods& lik);
  StepMasses update(Belief& belief, double y);

 private:
  const StateTable* table_;
  Priors priors_;
  StepMasses update_log_domain(Belief& belief, const StateLikelihoods& lik);

  std::vector<double> scratch_;
  std::vector<double> g0_, g1_;  // alpha(s) f(y | s, x), rescaled
  StateLikelihoods lik_;
};

/// CSV rows "t,s,alpha" for one belief (debug dump).
void write_belief_rows(std::size_t t, const Belief& belief, std::ostream& out);

inline double log_add_exp(double a, double b) {
  if (a < b) std::swap(a, b);
  if (b == kNegInf) return a;
  return a + std::log1p(std::exp(b - a));
}

}  // namespace mcvd
