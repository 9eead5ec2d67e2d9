#include "mcvd/channel_model.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace mcvd {

std::string_view to_string(CountingModel model) {
  return model == CountingModel::kPoisson ? "poisson" : "binomial";
}

CountingModel parse_counting_model(std::string_view text) {
  if (text == "poisson") return CountingModel::kPoisson;
  if (text == "binomial") return CountingModel::kBinomial;
  throw std::invalid_argument("unknown counting model '" + std::string(text) + "'");
}

void ChannelConfig::validate() const {
  if (!(rx_radius_um > 0.0)) throw std::invalid_argument("rx_radius must be positive");
  if (!(tx_distance_um > rx_radius_um))
    throw std::invalid_argument("tx_distance must exceed rx_radius");
  if (!(diffusion_um2_per_s > 0.0)) throw std::invalid_argument("diffusion_coeff must be positive");
  if (!(symbol_duration_s > 0.0)) throw std::invalid_argument("symbol_duration must be positive");
  if (molecules_per_on < 1) throw std::invalid_argument("molecules_per_on must be >= 1");
  if (!(prior_p1 > 0.0 && prior_p1 < 1.0))
    throw std::invalid_argument("prior_p1 must lie in (0, 1)");
}

double hit_probability(double t_seconds, const ChannelConfig& cfg) {
  if (!(t_seconds >= 0.0)) throw std::invalid_argument("hit_probability: negative time");
  if (t_seconds == 0.0) return 0.0;
  const double gap = cfg.tx_distance_um - cfg.rx_radius_um;
  return cfg.capture_limit() *
         std::erfc(gap / std::sqrt(4.0 * cfg.diffusion_um2_per_s * t_seconds));
}

double TapSet::sum() const { return std::accumulate(taps.begin(), taps.end(), 0.0); }

TapSet make_taps(std::vector<double> taps, CountingModel model) {
  if (taps.empty()) throw std::invalid_argument("make_taps: need at least h_0");
  TapSet out;
  out.memory_order = static_cast<int>(taps.size()) - 1;
  out.counting_model = model;
  out.var_factors.reserve(taps.size());
  for (double h : taps) {
    if (!(h >= 0.0 && h <= 1.0)) throw std::invalid_argument("make_taps: tap outside [0, 1]");
    out.var_factors.push_back(model == CountingModel::kPoisson ? h : h * (1.0 - h));
  }
  out.taps = std::move(taps);
  return out;
}

TapSet compute_taps(const ChannelConfig& cfg, int memory_order) {
  if (memory_order < 0) throw std::invalid_argument("compute_taps: negative memory order");
  std::vector<double> h(static_cast<std::size_t>(memory_order) + 1);
  double prev = 0.0;
  for (int k = 0; k <= memory_order; ++k) {
    const double cur = hit_probability((k + 1) * cfg.symbol_duration_s, cfg);
    h[k] = cur - prev;
    prev = cur;
  }
  if (std::all_of(h.begin(), h.end(), [](double v) { return v == 0.0; }))
    throw std::invalid_argument("compute_taps: degenerate channel, every tap is zero");
  return make_taps(std::move(h), cfg.counting_model);
}

MemoryOrderChoice select_memory_order(const ChannelConfig& cfg, double coverage, int m_max) {
  if (!(coverage > 0.0 && coverage < 1.0))
    throw std::invalid_argument("select_memory_order: coverage must lie in (0, 1)");
  if (m_max < 1) throw std::invalid_argument("select_memory_order: m_max must be >= 1");
  const double target = coverage * cfg.capture_limit();
  // Telescoping: sum_{k<=m} h_k = F_hit((m+1) T_s).
  for (int m = 0; m <= m_max; ++m) {
    if (hit_probability((m + 1) * cfg.symbol_duration_s, cfg) >= target) return {m, false};
  }
  return {m_max, true};
}

StateTable::StateTable(int memory_order, std::vector<double> mean, std::vector<double> var)
    : memory_order_(memory_order),
      num_states_(std::size_t{1} << memory_order),
      mask_(static_cast<StateId>((std::uint64_t{1} << memory_order) - 1)),
      mean_(std::move(mean)),
      var_(std::move(var)) {
  floored_var_.resize(var_.size());
  log_norm_.resize(var_.size());
  half_prec_.resize(var_.size());
  for (std::size_t i = 0; i < var_.size(); ++i) {
    const double v = std::max(var_[i], kVarianceFloor);
    floored_var_[i] = v;
    log_norm_[i] = -0.5 * std::log(2.0 * std::numbers::pi * v);
    half_prec_[i] = 0.5 / v;
  }
}

StateTable StateTable::build(const TapSet& taps, int molecules_per_on) {
  const int m = taps.memory_order;
  if (m < 0 || m > 24) throw std::invalid_argument("build_state_table: memory order out of range");
  if (taps.taps.size() != static_cast<std::size_t>(m) + 1 || taps.var_factors.size() != taps.taps.size())
    throw std::invalid_argument("build_state_table: tap vector length does not match m");
  const std::size_t states = std::size_t{1} << m;
  const double n = molecules_per_on;
  std::vector<double> mean(2 * states), var(2 * states);
  for (std::size_t s = 0; s < states; ++s) {
    double mu = 0.0, sigma2 = 0.0;
    for (int k = 1; k <= m; ++k) {
      if (state_bit(static_cast<StateId>(s), k)) {
        mu += taps.taps[k];
        sigma2 += taps.var_factors[k];
      }
    }
    mean[s] = n * mu;
    var[s] = n * sigma2;
    mean[states + s] = n * (taps.taps[0] + mu);
    var[states + s] = n * (taps.var_factors[0] + sigma2);
  }
  return StateTable(m, std::move(mean), std::move(var));
}

StateTable StateTable::from_moments(int memory_order, std::vector<double> mean0,
                                    std::vector<double> var0, std::vector<double> mean1,
                                    std::vector<double> var1) {
  if (memory_order < 0 || memory_order > 24)
    throw std::invalid_argument("from_moments: memory order out of range");
  const std::size_t states = std::size_t{1} << memory_order;
  if (mean0.size() != states || var0.size() != states || mean1.size() != states ||
      var1.size() != states)
    throw std::invalid_argument("from_moments: every moment vector needs 2^m entries");
  for (double v : var0)
    if (v < 0.0) throw std::invalid_argument("from_moments: negative variance");
  for (double v : var1)
    if (v < 0.0) throw std::invalid_argument("from_moments: negative variance");
  mean0.insert(mean0.end(), mean1.begin(), mean1.end());
  var0.insert(var0.end(), var1.begin(), var1.end());
  return StateTable(memory_order, std::move(mean0), std::move(var0));
}

Channel make_channel(const ChannelConfig& cfg, int memory_order) {
  cfg.validate();
  TapSet taps = compute_taps(cfg, memory_order);
  StateTable table = StateTable::build(taps, cfg.molecules_per_on);
  return Channel{cfg, std::move(taps), std::move(table)};
}

}  // namespace mcvd
