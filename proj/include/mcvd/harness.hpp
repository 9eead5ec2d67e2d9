#pragma once

// Experiment orchestration behind the `mcvd` command line tool.
//
// Config files are flat `key = value` text; `#` starts a comment. Units are
// part of the key names. Recognized keys:
//
//   tx_distance_um          center-to-center distance d          (12.5)
//   rx_radius_um            receiver radius r_r                  (5)
//   diffusion_um2_per_s     diffusion coefficient D              (79.4)
//   ts_seconds              symbol duration for `trace`          (0.25)
//   ntx_molecules           molecules per "on" symbol for `trace`(1000)
//   prior_p1                Pr{X = 1}                            (0.5)
//   counting_model          poisson | binomial                   (binomial)
//   ts_grid_seconds         comma list                           (8 log-spaced, 0.1..2.0)
//   ntx_grid                comma list                           (500,1000,2000)
//   methods                 comma list of soft_bamap, bamap, fixed, genie_mmse, genie_pa
//   n_symbols               symbols per trial                    (100000)
//   trials                  independent trials per cell          (1)
//   base_seed               unsigned 64-bit                      (1)
//   coverage                memory-order capture fraction        (0.7)
//   m_max                   memory-order cap                     (15)
//   fixed_threshold         tau for the fixed detector           (90)
//   sample_mode             gaussian | binomial                  (gaussian)
//   trace_symbols           length of the `trace` output         (50)
//   calibration_symbols     Genie-MMSE / Genie-PA calibration    (100000)
//   threshold_grid_points   fixed-threshold sweep resolution     (64)
//   output_dir              CSV destination                      (results)
//   workers                 worker threads                       (1)
//
// Seeds: every trace uses derive_seed(base_seed, {method id, T_s index,
// N_Tx index, trial}) with the method ids of MethodId below and grid indices
// in config order.

#include <cstdint>
#include <iosfwd>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "mcvd/channel_model.hpp"
#include "mcvd/sequence_simulator.hpp"

namespace mcvd::harness {

enum class Method { kSoftBamap, kBamap, kFixed, kGenieMmse, kGeniePa };

std::string_view method_name(Method method);
Method parse_method(std::string_view text);
const std::vector<Method>& registered_methods();

/// Stable ids mixed into cell seeds.
enum class MethodId : std::uint64_t {
  kSoftBamap = 0,
  kBamap = 1,
  kFixed = 2,
  kGenieMmse = 3,
  kGeniePa = 4,
  kChannelRate = 5,
  kTrace = 6,
};

MethodId method_id(Method method);

class ConfigError : public std::runtime_error {
 public:
  ConfigError(const std::string& source, int line, const std::string& what);
  int line() const { return line_; }

 private:
  int line_;
};

struct ExperimentSpec {
  ChannelConfig channel;
  std::vector<Method> methods = registered_methods();
  std::vector<double> ts_grid;
  std::vector<int> ntx_grid{500, 1000, 2000};
  std::size_t n_symbols = 100000;
  std::size_t trials = 1;
  std::uint64_t base_seed = 1;
  double coverage = 0.7;
  int m_max = 15;
  double fixed_threshold = 90.0;
  SampleMode mode = SampleMode::kGaussian;
  std::size_t trace_symbols = 50;
  std::size_t calibration_symbols = 100000;
  std::size_t threshold_grid_points = 64;
  std::string output_dir = "results";
  unsigned workers = 1;

  ExperimentSpec();

  /// Throws std::invalid_argument. Rate experiments need n_symbols >= 1000.
  void validate(bool rate_experiment = false) const;
};

ExperimentSpec parse_experiment_spec(std::istream& in, const std::string& source = "config");
ExperimentSpec load_experiment_spec(const std::string& path);

std::uint64_t cell_seed(std::uint64_t base_seed, MethodId method, std::size_t ts_index,
                        std::size_t ntx_index, std::size_t trial);

/// Channel for one grid cell, memory order chosen by select_memory_order.
Channel channel_for_cell(const ExperimentSpec& spec, double ts_seconds, int ntx);

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void write(std::ostream& out) const;
};

/// Ordered key/value text, one `key = value` per line.
struct Manifest {
  std::vector<std::pair<std::string, std::string>> entries;

  void add(std::string key, std::string value) {
    entries.emplace_back(std::move(key), std::move(value));
  }
  void write(std::ostream& out) const;
};

struct CommandResult {
  CsvTable table;
  Manifest manifest;
};

/// Columns: ts_seconds, m, capped, sum_h, h_0 .. h_M (blank past each row's m).
CommandResult cmd_taps(const ExperimentSpec& spec);

/// Columns: method, ts_seconds, ntx, m, ber, std_error, errors, symbols, seed, status.
CommandResult cmd_ber(const ExperimentSpec& spec);

/// Columns: method, ts_seconds, ntx, m, rate, std_error, throughput, ber, seed,
/// threshold, status. Methods: channel (R_n estimator), soft_bamap, bamap,
/// fixed (swept tau), genie_mmse and genie_pa (conditional on S), plus the
/// unconditional rates of the genie decisions as *_uncond.
CommandResult cmd_rate(const ExperimentSpec& spec);

/// Columns: t, bit, state, count, mu0, mu0_lo, mu0_hi, mu1, mu1_lo, mu1_hi,
/// tau_bamap, tau_fixed, llr_soft, belief_entropy_bits. `belief_dump`
/// receives "t,s,alpha" rows when non-null.
CommandResult cmd_trace(const ExperimentSpec& spec, std::ostream* belief_dump = nullptr);

/// Result of one BER cell.
struct BerCell {
  std::uint64_t errors = 0;
  std::uint64_t symbols = 0;
  double ber() const { return symbols ? static_cast<double>(errors) / symbols : 0.0; }
  double std_error() const;
};

/// Runs one method on one trial trace. `seed` drives the trace and any
/// calibration.
BerCell run_ber_trial(const ExperimentSpec& spec, const Channel& channel, Method method,
                      std::uint64_t seed);

/// Writes `result` as <dir>/<stem>.csv and <dir>/<stem>_manifest.txt.
void write_result(const CommandResult& result, const std::string& dir, const std::string& stem);

/// %.12g, so identical inputs give byte-identical files.
std::string format_number(double v);

}  // namespace mcvd::harness
