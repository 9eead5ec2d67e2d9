#include "mcvd/sequence_simulator.hpp"

#include <boost/random/bernoulli_distribution.hpp>
#include <boost/random/binomial_distribution.hpp>
#include <boost/random/normal_distribution.hpp>
#include <algorithm>
#include <cmath>
#include <ostream>
#include <stdexcept>
#include <string>

namespace mcvd {

std::string_view to_string(SampleMode mode) {
  return mode == SampleMode::kGaussian ? "gaussian" : "binomial";
}

SampleMode parse_sample_mode(std::string_view text) {
  if (text == "gaussian") return SampleMode::kGaussian;
  if (text == "binomial") return SampleMode::kBinomial;
  throw std::invalid_argument("unknown sample mode '" + std::string(text) + "'");
}

std::vector<Bit> generate_bits(std::size_t n, double p1, Engine& engine) {
  if (!(p1 >= 0.0 && p1 <= 1.0)) throw std::invalid_argument("generate_bits: p1 outside [0, 1]");
  std::vector<Bit> bits(n);
  boost::random::bernoulli_distribution<double> coin(p1);
  for (auto& b : bits) b = coin(engine) ? 1 : 0;
  return bits;
}

double sample_count_gaussian(Bit x, StateId s, const StateTable& table, Engine& engine) {
  boost::random::normal_distribution<double> normal(table.mean(x, s),
                                                    std::sqrt(table.floored_variance(x, s)));
  return normal(engine);
}

std::int64_t sample_count_binomial(std::span<const Bit> history, const TapSet& taps,
                                   int molecules_per_on, Engine& engine) {
  std::int64_t total = 0;
  const std::size_t terms = std::min(history.size(), taps.taps.size());
  for (std::size_t k = 0; k < terms; ++k) {
    if (!history[k] || taps.taps[k] <= 0.0) continue;
    boost::random::binomial_distribution<std::int64_t, double> draw(molecules_per_on,
                                                                    taps.taps[k]);
    total += draw(engine);
  }
  return total;
}

namespace {

RunRecord simulate(const StateTable& table, const TapSet* taps, int molecules_per_on,
                   double prior_p1, std::size_t n, std::uint64_t seed, SampleMode mode) {
  if (n < 1) throw std::invalid_argument("run_trace: n must be >= 1");
  if (mode == SampleMode::kBinomial && taps == nullptr)
    throw std::invalid_argument("run_trace: binomial mode needs taps");
  Engine bit_engine = make_engine(seed, StreamPurpose::kBits);
  Engine noise_engine = make_engine(seed, StreamPurpose::kNoise);

  RunRecord rec;
  rec.seed = seed;
  rec.mode = mode;
  rec.bits = generate_bits(n, prior_p1, bit_engine);
  rec.states.resize(n);
  rec.counts.resize(n);

  const int m = table.memory_order();
  std::vector<Bit> history(static_cast<std::size_t>(m) + 1, 0);
  StateId s = 0;
  for (std::size_t t = 0; t < n; ++t) {
    const Bit x = rec.bits[t];
    rec.states[t] = s;
    if (mode == SampleMode::kGaussian) {
      rec.counts[t] = sample_count_gaussian(x, s, table, noise_engine);
    } else {
      history[0] = x;
      for (int k = 1; k <= m; ++k) history[k] = state_bit(s, k);
      rec.counts[t] =
          static_cast<double>(sample_count_binomial(history, *taps, molecules_per_on, noise_engine));
    }
    s = table.next_state(s, x);
  }
  return rec;
}

}  // namespace

RunRecord run_trace(const Channel& channel, std::size_t n, std::uint64_t seed, SampleMode mode) {
  return run_trace(channel, channel.config.prior_p1, n, seed, mode);
}

RunRecord run_trace(const Channel& channel, double prior_p1, std::size_t n, std::uint64_t seed,
                    SampleMode mode) {
  return simulate(channel.table, &channel.taps, channel.config.molecules_per_on, prior_p1, n,
                  seed, mode);
}

RunRecord run_trace(const StateTable& table, double prior_p1, std::size_t n, std::uint64_t seed) {
  return simulate(table, nullptr, 0, prior_p1, n, seed, SampleMode::kGaussian);
}

void write_csv(const RunRecord& record, std::ostream& out) {
  out << "t,bit,state,count\n";
  const auto old_precision = out.precision(17);
  for (std::size_t t = 0; t < record.size(); ++t) {
    out << t << ',' << int{record.bits[t]} << ',' << record.states[t] << ','
        << record.counts[t] << '\n';
  }
  out.precision(old_precision);
}

}  // namespace mcvd
