#pragma once

// Reproducible symbol/state/count traces for the finite-state channel.

#include <cstdint>
#include <iosfwd>
#include <span>
#include <string_view>
#include <vector>

#include "mcvd/channel_model.hpp"
#include "mcvd/rng.hpp"

namespace mcvd {

enum class SampleMode {
  kGaussian,  // Y ~ N(mu_{x,s}, sigma^2_{x,s}), untruncated
  kBinomial,  // Y = sum_k Binomial(N x_{t-k}, h_k), independent terms
};

std::string_view to_string(SampleMode mode);
SampleMode parse_sample_mode(std::string_view text);

struct RunRecord {
  std::vector<Bit> bits;
  std::vector<StateId> states;  // states[t] = S_t, the state seen by symbol t
  std::vector<double> counts;
  std::uint64_t seed = 0;
  SampleMode mode = SampleMode::kGaussian;

  std::size_t size() const { return bits.size(); }
};

/// I.i.d. Bernoulli(p1) bits. p1 may be 0 or 1.
std::vector<Bit> generate_bits(std::size_t n, double p1, Engine& engine);

double sample_count_gaussian(Bit x, StateId s, const StateTable& table, Engine& engine);

/// history[k] = X_{t-k} for k = 0..m (history[0] is the current input).
std::int64_t sample_count_binomial(std::span<const Bit> history, const TapSet& taps,
                                   int molecules_per_on, Engine& engine);

/// Cold-start trace: S_0 = 0. Bits and noise draw from separate streams of
/// `seed`, so the bit sequence does not depend on the mode.
RunRecord run_trace(const Channel& channel, std::size_t n, std::uint64_t seed,
                    SampleMode mode = SampleMode::kGaussian);

/// Same, with an explicit prior that may sit on the boundary {0, 1}.
RunRecord run_trace(const Channel& channel, double prior_p1, std::size_t n,
                    std::uint64_t seed, SampleMode mode = SampleMode::kGaussian);

/// Gaussian-mode trace on a bare table (synthetic channels without taps).
RunRecord run_trace(const StateTable& table, double prior_p1, std::size_t n,
                    std::uint64_t seed);

/// CSV with header "t,bit,state,count".
void write_csv(const RunRecord& record, std::ostream& out);

}  // namespace mcvd
