#pragma once

// Finite-state heteroscedastic representation of a diffusive molecular
// channel with an absorbing spherical receiver and On-Off Keying.
//
// An emission at the start of window t-k contributes a fraction h_k of its
// molecules to window t. With memory order m the received count in window t
// is conditionally Gaussian given (X_t, S_t) where S_t = (X_{t-1..t-m}).

#include <cstddef>
#include <cstdint>
#include <string_view>
#include <vector>

namespace mcvd {

enum class CountingModel { kPoisson, kBinomial };

std::string_view to_string(CountingModel model);
CountingModel parse_counting_model(std::string_view text);

using StateId = std::uint32_t;
using Bit = std::uint8_t;

/// Floor applied to every variance before a Gaussian density is evaluated.
/// Keeps the empty-channel state (s = 0, x = 0) a narrow but proper density.
inline constexpr double kVarianceFloor = 1e-6;

struct ChannelConfig {
  double tx_distance_um = 12.5;     // point source to receiver center
  double rx_radius_um = 5.0;
  double diffusion_um2_per_s = 79.4;
  double symbol_duration_s = 0.25;
  int molecules_per_on = 1000;
  double prior_p1 = 0.5;
  CountingModel counting_model = CountingModel::kBinomial;

  /// Throws std::invalid_argument when a physical invariant is violated.
  void validate() const;

  /// Probability that a molecule is ever absorbed, r_r / d.
  double capture_limit() const { return rx_radius_um / tx_distance_um; }
};

/// Cumulative probability that a single molecule has been absorbed by time
/// t: (r_r/d) erfc((d - r_r) / sqrt(4 D t)).
double hit_probability(double t_seconds, const ChannelConfig& cfg);

struct TapSet {
  std::vector<double> taps;         // h_0..h_m
  std::vector<double> var_factors;  // v_0..v_m
  int memory_order = 0;
  CountingModel counting_model = CountingModel::kBinomial;

  double sum() const;
};

/// Builds a tap set from explicit arrival fractions (synthetic channels).
TapSet make_taps(std::vector<double> taps, CountingModel model);

/// h_k = F_hit((k+1) T_s) - F_hit(k T_s) for k = 0..m.
TapSet compute_taps(const ChannelConfig& cfg, int memory_order);

struct MemoryOrderChoice {
  int memory_order = 0;
  bool capped = false;  // true when m_max was reached before the coverage target
};

inline constexpr double kDefaultCoverage = 0.70;
inline constexpr int kDefaultMaxMemoryOrder = 15;

/// Smallest m with sum_{k<=m} h_k >= coverage * r_r/d, capped at m_max.
MemoryOrderChoice select_memory_order(const ChannelConfig& cfg,
                                      double coverage = kDefaultCoverage,
                                      int m_max = kDefaultMaxMemoryOrder);

/// Per-(input, state) count moments and the shift-register transition map.
///
/// Bit (k-1) of a state id stores X_{t-k}; bit 0 is the most recent input.
/// next_state(s, x) = ((s << 1) | x) masked to m bits.
class StateTable {
 public:
  /// Moments from taps: mu_{x,s} = N (h_0 x + sum_k h_k b_k(s)), same for
  /// the variance with v_k.
  static StateTable build(const TapSet& taps, int molecules_per_on);

  /// Arbitrary per-(x,s) moments, for synthetic channels. Each vector must
  /// have 2^m entries.
  static StateTable from_moments(int memory_order, std::vector<double> mean0,
                                 std::vector<double> var0, std::vector<double> mean1,
                                 std::vector<double> var1);

  int memory_order() const { return memory_order_; }
  std::size_t num_states() const { return num_states_; }

  double mean(Bit x, StateId s) const { return mean_[index(x, s)]; }
  double variance(Bit x, StateId s) const { return var_[index(x, s)]; }
  /// Variance with kVarianceFloor applied.
  double floored_variance(Bit x, StateId s) const { return floored_var_[index(x, s)]; }
  /// -0.5 * log(2 pi floored_variance), cached for density evaluation.
  double log_normalizer(Bit x, StateId s) const { return log_norm_[index(x, s)]; }
  /// 1 / (2 floored_variance).
  double half_precision(Bit x, StateId s) const { return half_prec_[index(x, s)]; }

  StateId next_state(StateId s, Bit x) const {
    return static_cast<StateId>(((s << 1) | x) & mask_);
  }

  /// Contiguous per-input arrays of length num_states(), used by hot loops.
  const double* means(Bit x) const { return mean_.data() + x * num_states_; }
  const double* log_normalizers(Bit x) const { return log_norm_.data() + x * num_states_; }
  const double* half_precisions(Bit x) const { return half_prec_.data() + x * num_states_; }

 private:
  StateTable(int memory_order, std::vector<double> mean, std::vector<double> var);

  std::size_t index(Bit x, StateId s) const { return x * num_states_ + s; }

  int memory_order_ = 0;
  std::size_t num_states_ = 1;
  StateId mask_ = 0;
  std::vector<double> mean_;  // [x * S + s]
  std::vector<double> var_;
  std::vector<double> floored_var_;
  std::vector<double> log_norm_;
  std::vector<double> half_prec_;
};

/// Bit k-1 of s, i.e. X_{t-k} for k = 1..m.
inline Bit state_bit(StateId s, int k) { return static_cast<Bit>((s >> (k - 1)) & 1U); }

/// Everything a simulation needs about one (config, m) cell.
struct Channel {
  ChannelConfig config;
  TapSet taps;
  StateTable table;
};

Channel make_channel(const ChannelConfig& cfg, int memory_order);

}  // namespace mcvd
