#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>
#include <vector>

#include "mcvd/detectors.hpp"
#include "mcvd/info_rate.hpp"
#include "oracles.hpp"
#include "support.hpp"

using namespace mcvd;

namespace {

double peak_density(double p0, double v0, double p1, double v1) {
  return std::max(p0 / std::sqrt(2 * M_PI * v0), p1 / std::sqrt(2 * M_PI * v1));
}

double map_residual(double tau, double p0, double mu0, double v0, double p1, double mu1, double v1) {
  return std::abs(oracle::weighted_density(p0, tau, mu0, v0) - oracle::weighted_density(p1, tau, mu1, v1));
}

}  // namespace

TEST_CASE("fixed threshold tie rule") {
  CHECK(fixed_threshold_decide(100, 90) == 1);
  CHECK(fixed_threshold_decide(90, 90) == 0);
  CHECK(fixed_threshold_decide(0, 90) == 0);
  FixedThresholdDetector det(90);
  CHECK(det.step({91, 0}).decision == 1);
  CHECK(det.step({91, 0}).statistic == 90);
}

TEST_CASE("soft LLR equals the belief-weighted mixture log ratio") {
  std::mt19937_64 rng(5);
  for (int trial = 0; trial < 50; ++trial) {
    const oracle::Model md = oracle::random_model(trial % 4, rng);
    const StateTable table = support::to_table(md);
    const Priors pr = Priors::from_p1(md.p1);
    std::vector<double> w(table.num_states());
    for (double& v : w) v = std::log(std::uniform_real_distribution<double>(0.01, 1.0)(rng));
    const Belief b = Belief::from_log_weights(w);
    const double y = std::uniform_real_distribution<double>(-2.0, 20.0)(rng);
    long double num = 0, den = 0;
    for (StateId s = 0; s < table.num_states(); ++s) {
      num += b.probability(s) * std::exp(oracle::log_gauss(y, md.mean[1][s], md.var[1][s]));
      den += b.probability(s) * std::exp(oracle::log_gauss(y, md.mean[0][s], md.var[0][s]));
    }
    const double want = static_cast<double>(std::log(md.p1 * num) - std::log((1 - md.p1) * den));
    CHECK(soft_bamap_llr(b, y, table, pr) == doctest::Approx(want).epsilon(1e-10));
  }
}

TEST_CASE("soft BA-MAP LLR is the causal symbol posterior log ratio") {
  std::mt19937_64 rng(31);
  for (int trial = 0; trial < 40; ++trial) {
    const oracle::Model md = oracle::random_model(trial % 4, rng);
    const oracle::Sampled tr = oracle::sample(md, 10, rng);
    const oracle::Enumeration e = oracle::enumerate(md, tr.y);
    const StateTable table = support::to_table(md);
    SoftBamapDetector det(table, Priors::from_p1(md.p1));
    for (std::size_t t = 0; t < tr.y.size(); ++t) {
      const DetectorOutput o = det.step({tr.y[t], 0});
      const double want = static_cast<double>(e.llr[t]);
      CHECK(o.statistic == doctest::Approx(want).epsilon(1e-9).scale(1.0));
      if (std::abs(want) > 1e-9) CHECK(o.decision == (want > 0 ? 1 : 0));
    }
  }
}

TEST_CASE("soft BA-MAP evaluates exactly 2 * 2^m densities per symbol") {
  for (int m = 0; m <= 12; ++m) {
    const Channel ch = support::default_channel(0.2, m);
    SoftBamapDetector det(ch.table, Priors::from_p1(0.5));
    const RunRecord rec = run_trace(ch, 20, 3);
    for (std::size_t t = 0; t < rec.size(); ++t) {
      instrumentation::reset_density_evaluations();
      det.step({rec.counts[t], 0});
      CHECK(instrumentation::density_evaluations() == 2 * (std::uint64_t{1} << m));
    }
  }
}

TEST_CASE("BA-MAP threshold closed form") {
  MixtureMoments mm{50, 400, 150, 400};
  CHECK(bamap_threshold(mm, Priors::from_p1(0.5)) == doctest::Approx(100.0));
  const double tau = bamap_threshold(mm, Priors::from_p1(0.1));
  CHECK(tau == doctest::Approx(100.0 + 400.0 * std::log(9.0) / 100.0).epsilon(1e-12));
  CHECK(tau == doctest::Approx(108.789).epsilon(1e-5));
  CHECK(map_residual(tau, 0.9, 50, 400, 0.1, 150, 400) < 1e-9 * peak_density(0.9, 400, 0.1, 400));
}

TEST_CASE("BA-MAP threshold with unequal variances") {
  const MixtureMoments mm{50, 100, 150, 900};
  const double tau = bamap_threshold(mm, Priors::from_p1(0.5));
  CHECK(tau > 50);
  CHECK(tau < 150);
  CHECK(map_residual(tau, 0.5, 50, 100, 0.5, 150, 900) < 1e-9 * peak_density(0.5, 100, 0.5, 900));
  const double bis = oracle::bisect_crossing(0.5, 50, 100, 0.5, 150, 900, 50, 150);
  CHECK(tau == doctest::Approx(bis).epsilon(1e-10));
}

TEST_CASE("BA-MAP threshold degenerate and boundary priors") {
  CHECK_THROWS_AS(bamap_threshold({10, 1, 10, 1}, Priors::from_p1(0.5)), DegenerateMoments);
  CHECK_THROWS_AS(bamap_threshold({10, 1, 5, 1}, Priors::from_p1(0.5)), DegenerateMoments);
  CHECK(bamap_threshold({0, 1, 10, 1}, Priors::from_p1(0.0)) == std::numeric_limits<double>::infinity());
  CHECK(bamap_threshold({0, 1, 10, 1}, Priors::from_p1(1.0)) == -std::numeric_limits<double>::infinity());
  // One broad, one narrow mixture and a heavy prior: no crossing at all.
  CHECK(bamap_threshold({0, 1, 0.5, 100}, Priors::from_p1(0.99)) == doctest::Approx(0.25));
}

TEST_CASE("BA-MAP threshold sits between the means whenever a crossing exists there") {
  std::mt19937_64 rng(99);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  int crossings = 0;
  for (int i = 0; i < 5000; ++i) {
    const double mu0 = 200 * u(rng), mu1 = mu0 + 0.5 + 150 * u(rng);
    const double v0 = 0.5 + 500 * u(rng), v1 = (i % 5 == 0) ? v0 : 0.5 + 500 * u(rng);
    const double p1 = 0.01 + 0.98 * u(rng);
    const Priors pr = Priors::from_p1(p1);
    auto g = [&](double t) {
      return (std::log(1 - p1) + oracle::log_gauss(t, mu0, v0)) - (std::log(p1) + oracle::log_gauss(t, mu1, v1));
    };
    if ((g(mu0) > 0) == (g(mu1) > 0)) continue;
    ++crossings;
    const double tau = bamap_threshold({mu0, v0, mu1, v1}, pr);
    CHECK(tau > mu0);
    CHECK(tau < mu1);
    CHECK(map_residual(tau, 1 - p1, mu0, v0, p1, mu1, v1) < 1e-9 * peak_density(1 - p1, v0, p1, v1));
  }
  CHECK(crossings > 2000);
}

TEST_CASE("mixture moments are the belief-weighted first and second moments") {
  std::mt19937_64 rng(4);
  const oracle::Model md = oracle::random_model(3, rng);
  const StateTable table = support::to_table(md);
  std::vector<double> w(8);
  for (double& v : w) v = std::log(std::uniform_real_distribution<double>(0.01, 1.0)(rng));
  const Belief b = Belief::from_log_weights(w);
  for (int x = 0; x < 2; ++x) {
    long double m1 = 0, m2 = 0;
    for (StateId s = 0; s < 8; ++s) {
      m1 += b.probability(s) * md.mean[x][s];
      m2 += b.probability(s) * (md.var[x][s] + md.mean[x][s] * md.mean[x][s]);
    }
    const MixtureMoments mm = bamap_moments(b, table);
    CHECK((x ? mm.mean1 : mm.mean0) == doctest::Approx(static_cast<double>(m1)));
    CHECK((x ? mm.var1 : mm.var0) == doctest::Approx(static_cast<double>(m2 - m1 * m1)));
  }
}

TEST_CASE("BA-MAP and soft BA-MAP coincide for a point mass with equal variances") {
  const StateTable table = StateTable::from_moments(2, {0, 2, 4, 6}, {3, 3, 3, 3}, {5, 7, 9, 11}, {3, 3, 3, 3});
  for (double p1 : {0.2, 0.5, 0.8}) {
    const Priors pr = Priors::from_p1(p1);
    for (StateId s = 0; s < 4; ++s) {
      const Belief b = Belief::point_mass(4, s);
      const double tau = bamap_threshold(bamap_moments(b, table), pr);
      for (double y = -10; y <= 25; y += 0.037) {
        const double llr = soft_bamap_llr(b, y, table, pr);
        if (std::abs(llr) < 1e-9) continue;
        CHECK((llr > 0) == (y > tau));
      }
    }
  }
}

TEST_CASE("BA-MAP detector threshold lies between the mixture means") {
  const Channel ch = support::default_channel(0.15, 9);
  BamapDetector det(ch.table, Priors::from_p1(0.5));
  const RunRecord rec = run_trace(ch, 2000, 8);
  for (std::size_t t = 0; t < rec.size(); ++t) {
    const DetectorOutput o = det.step({rec.counts[t], rec.states[t]});
    CHECK(o.statistic > det.last_moments().mean0);
    CHECK(o.statistic < det.last_moments().mean1);
  }
}

TEST_CASE("detectors are reproducible after reset") {
  const Channel ch = support::default_channel(0.2, 6);
  const RunRecord rec = run_trace(ch, 500, 12);
  SoftBamapDetector soft(ch.table, Priors::from_p1(0.5));
  BamapDetector hard(ch.table, Priors::from_p1(0.5));
  for (Detector* d : std::vector<Detector*>{&soft, &hard}) {
    const DecisionTrace a = run_detector(*d, rec);
    const DecisionTrace b = run_detector(*d, rec);
    CHECK(a.statistics == b.statistics);
  }
  SoftBamapDetector uni(ch.table, Priors::from_p1(0.5), BeliefInit::kUniform);
  CHECK(uni.belief().entropy_bits() == doctest::Approx(6.0));
  CHECK(soft.name() == "soft_bamap");
  CHECK(hard.name() == "bamap");
}

TEST_CASE("memoryless MMSE filter is the scalar Wiener gain") {
  const TapSet taps = make_taps({0.2}, CountingModel::kBinomial);
  const Priors pr = Priors::from_p1(0.3);
  const MmseFilter f = design_mmse_filter(taps, 500, pr, 1);
  const double sig = 500.0 * 500.0 * 0.21 * 0.04;
  const double noise = 500.0 * 0.3 * 0.16;
  REQUIRE(f.weights.size() == 1);
  CHECK(f.weights[0] == doctest::Approx(500.0 * 0.2 * 0.21 / (sig + noise)));
  CHECK(f.offset == doctest::Approx(500.0 * 0.3 * 0.2));
  CHECK_THROWS_AS(design_mmse_filter(taps, 500, pr, 0), std::invalid_argument);
  CHECK_THROWS_AS(design_mmse_filter(taps, 500, Priors::from_p1(0.0), 1), std::invalid_argument);
}

TEST_CASE("MMSE error is orthogonal to the observation window") {
  const Channel ch = support::default_channel(0.3, 4);
  const Priors pr = Priors::from_p1(0.5);
  const MmseFilter f = design_mmse_filter(ch.taps, 1000, pr, 5);
  const RunRecord rec = run_trace(ch, 200000, 21);
  const std::size_t len = f.weights.size();
  std::vector<double> corr(len, 0.0), scale(len, 0.0);
  std::size_t used = 0;
  for (std::size_t t = 20; t < rec.size(); ++t) {
    double z = 0.0;
    for (std::size_t j = 0; j < len; ++j) z += f.weights[j] * (rec.counts[t - j] - f.offset);
    const double err = (rec.bits[t] - 0.5) - z;
    for (std::size_t j = 0; j < len; ++j) {
      corr[j] += err * (rec.counts[t - j] - f.offset);
      scale[j] += std::abs(rec.counts[t - j] - f.offset) * 0.5;
    }
    ++used;
  }
  for (std::size_t j = 0; j < len; ++j) CHECK(std::abs(corr[j]) < 0.02 * scale[j]);
}

TEST_CASE("genie MMSE refuses to run uncalibrated") {
  const Channel ch = support::default_channel(0.3, 3);
  GenieMmseDetector det(ch, Priors::from_p1(0.5));
  CHECK_FALSE(det.calibrated());
  CHECK_THROWS_AS(det.step({1.0, 0}), Uncalibrated);
  CHECK_THROWS_AS(det.threshold(0), Uncalibrated);
  CHECK(det.filter().weights.size() == 4);
  det.calibrate(20000, 1);
  CHECK(det.calibrated());
  CHECK_NOTHROW(det.step({1.0, 0}));
}

TEST_CASE("memoryless genie MMSE is the single-Gaussian-pair MAP rule on y") {
  // Background noise on the silent input keeps the floor out of play: it would
  // otherwise act in different units on y and on the equalized z.
  const Channel base = support::default_channel(2.0, 0, 300);
  const double sig = 300.0 * base.taps.taps[0];
  const Channel ch{base.config, base.taps,
                   StateTable::from_moments(0, {5.0}, {5.0}, {5.0 + sig},
                                            {5.0 + sig * (1.0 - base.taps.taps[0])})};
  const Priors pr = Priors::from_p1(0.5);
  GenieMmseDetector det(ch, pr);
  det.calibrate(100000, 4);
  const double w = det.filter().weights[0];
  REQUIRE(w > 0);
  const double tau_y = det.threshold(0) / w + det.filter().offset;
  const double want = bamap_threshold({ch.table.mean(0, 0), ch.table.variance(0, 0), ch.table.mean(1, 0),
                                       ch.table.variance(1, 0)},
                                      pr);
  // Calibration moments carry Monte Carlo error; the crossing moves by a
  // small fraction of the bit-1 spread.
  CHECK(std::abs(tau_y - want) < 0.05 * std::sqrt(ch.table.variance(1, 0)));
}

TEST_CASE("genie MMSE on ISI-free taps matches the fixed MAP threshold") {
  ChannelConfig cfg;
  cfg.molecules_per_on = 200;
  const TapSet taps = make_taps({0.05, 0.0, 0.0, 0.0}, CountingModel::kBinomial);
  const Channel ch{cfg, taps, StateTable::build(taps, 200)};
  const Priors pr = Priors::from_p1(0.5);
  GenieMmseDetector genie(ch, pr);
  genie.calibrate(100000, 2);
  const double tau = bamap_threshold({ch.table.mean(0, 0), ch.table.variance(0, 0), ch.table.mean(1, 0),
                                      ch.table.variance(1, 0)},
                                     pr);
  FixedThresholdDetector fixed(tau);
  const RunRecord rec = run_trace(ch, 200000, 6);
  const double ber_g = bit_error_rate(rec.bits, run_detector(genie, rec).decisions);
  const double ber_f = bit_error_rate(rec.bits, run_detector(fixed, rec).decisions);
  const double se = std::sqrt(ber_f * (1 - ber_f) / rec.size());
  CHECK(std::abs(ber_g - ber_f) < 3 * se);
}

TEST_CASE("genie MMSE beats the fixed threshold at short symbol durations") {
  const Channel ch = support::default_channel(0.15, 8);
  const Priors pr = Priors::from_p1(0.5);
  GenieMmseDetector genie(ch, pr);
  genie.calibrate(100000, 3);
  FixedThresholdDetector fixed(90);
  const RunRecord rec = run_trace(ch, 30000, 7);
  const double ber_g = bit_error_rate(rec.bits, run_detector(genie, rec).decisions);
  const double ber_f = bit_error_rate(rec.bits, run_detector(fixed, rec).decisions);
  CHECK(ber_g < ber_f);
}

TEST_CASE("power adjustment emissions") {
  const TapSet taps = make_taps({0.1, 0.05, 0.02}, CountingModel::kBinomial);
  PowerAdjustTransmitter tx(taps, 1000);
  CHECK(tx.emit(1) == 1000);  // nothing in flight
  CHECK(tx.residual() == doctest::Approx(50.0));
  CHECK(tx.emit(1) == doctest::Approx(1000 - 50.0 / 0.1));
  CHECK(tx.emit(0) == 0);
  tx.reset();
  CHECK(tx.residual() == 0);
  const TapSet heavy = make_taps({0.01, 0.2}, CountingModel::kBinomial);
  PowerAdjustTransmitter tx2(heavy, 1000);
  tx2.emit(1);
  CHECK(tx2.residual() >= 0.01 * 1000);
  CHECK(tx2.emit(1) == 0);  // clamp binds
}

TEST_CASE("power adjustment holds an all-ones stream near N h_0") {
  const Channel ch = support::default_channel(1.0, 2);
  const std::vector<Bit> ones(20000, 1);
  const PowerAdjustedTrace pa = run_power_adjusted_trace(ch, ones, 5);
  double mean = 0.0;
  for (std::size_t t = 100; t < ones.size(); ++t) mean += pa.record.counts[t];
  mean /= static_cast<double>(ones.size() - 100);
  CHECK(mean == doctest::Approx(1000 * ch.taps.taps[0]).epsilon(0.01));
  const PowerAdjustedTrace pb = run_power_adjusted_trace(ch, ones, 5, SampleMode::kBinomial);
  for (double e : pb.emissions) {
    CHECK(e >= 0.0);
    CHECK(e <= 1000.0);
  }
}

TEST_CASE("power-adjusted traces share the bit stream of plain traces") {
  const Channel ch = support::default_channel(0.5, 4);
  const PowerAdjustedTrace pa = run_power_adjusted_trace(ch, 0.5, 1000, 77);
  const RunRecord plain = run_trace(ch, 1000, 77);
  CHECK(pa.record.bits == plain.bits);
  CHECK(pa.record.states == plain.states);
  const PowerAdjustedTrace again = run_power_adjusted_trace(ch, 0.5, 1000, 77);
  CHECK(pa.record.counts == again.record.counts);
}
