#include <doctest.h>

#include <cmath>
#include <random>
#include <set>
#include <stdexcept>

#include "mcvd/channel_model.hpp"
#include "oracles.hpp"

using namespace mcvd;

namespace {

ChannelConfig default_geometry(double ts) {
  ChannelConfig cfg;
  cfg.symbol_duration_s = ts;
  return cfg;
}

}  // namespace

TEST_CASE("hit probability agrees with a 50-digit erfc") {
  const ChannelConfig cfg;
  for (double t : {1e-3, 0.01, 0.05, 0.1, 0.25, 0.5, 1.0, 3.0, 10.0, 100.0, 1e4}) {
    const double want = static_cast<double>(oracle::hit_probability(t, 12.5, 5.0, 79.4));
    CHECK(hit_probability(t, cfg) == doctest::Approx(want).epsilon(1e-13));
  }
}

TEST_CASE("hit probability edge behaviour") {
  const ChannelConfig cfg;
  CHECK(hit_probability(0.0, cfg) == 0.0);
  CHECK_THROWS_AS(hit_probability(-1e-9, cfg), std::invalid_argument);
  CHECK(hit_probability(1e14, cfg) == doctest::Approx(cfg.capture_limit()).epsilon(1e-6));
  double prev = 0.0;
  for (int i = 1; i <= 400; ++i) {
    const double cur = hit_probability(0.01 * i, cfg);
    CHECK(cur >= prev);
    CHECK(cur < cfg.capture_limit());
    prev = cur;
  }
}

TEST_CASE("taps telescope to the hit probability and stay below the capture bound") {
  std::mt19937_64 rng(7);
  std::uniform_real_distribution<double> ts_dist(0.02, 5.0);
  std::uniform_int_distribution<int> m_dist(0, 24);
  for (int trial = 0; trial < 500; ++trial) {
    const ChannelConfig cfg = default_geometry(ts_dist(rng));
    const int m = m_dist(rng);
    const TapSet taps = compute_taps(cfg, m);
    REQUIRE(taps.taps.size() == static_cast<std::size_t>(m) + 1);
    const double want =
        static_cast<double>(oracle::hit_probability((m + 1) * cfg.symbol_duration_s, 12.5, 5.0, 79.4));
    CHECK(std::abs(taps.sum() - want) <= 1e-12 * want);
    CHECK(taps.sum() < 0.4);
    for (double h : taps.taps) CHECK(h >= 0.0);
  }
}

TEST_CASE("individual taps match first differences of the oracle") {
  const ChannelConfig cfg = default_geometry(0.25);
  const TapSet taps = compute_taps(cfg, 9);
  for (int k = 0; k <= 9; ++k) {
    const oracle::Big want = oracle::hit_probability((k + 1) * 0.25, 12.5, 5.0, 79.4) -
                             oracle::hit_probability(k * 0.25, 12.5, 5.0, 79.4);
    CHECK(taps.taps[k] == doctest::Approx(static_cast<double>(want)).epsilon(1e-12));
  }
  CHECK(taps.taps[0] == doctest::Approx(0.09357).epsilon(1e-4));
}

TEST_CASE("variance factors follow the counting model") {
  const std::vector<double> h{0.3, 0.1, 0.05};
  const TapSet poisson = make_taps(h, CountingModel::kPoisson);
  const TapSet binomial = make_taps(h, CountingModel::kBinomial);
  for (std::size_t k = 0; k < h.size(); ++k) {
    CHECK(poisson.var_factors[k] == h[k]);
    CHECK(binomial.var_factors[k] == doctest::Approx(h[k] * (1 - h[k])));
  }
  CHECK_THROWS_AS(make_taps({}, CountingModel::kPoisson), std::invalid_argument);
  CHECK_THROWS_AS(make_taps({1.5}, CountingModel::kPoisson), std::invalid_argument);
  CHECK_THROWS_AS(make_taps({-0.1}, CountingModel::kPoisson), std::invalid_argument);
}

TEST_CASE("counting model names round trip") {
  for (auto m : {CountingModel::kPoisson, CountingModel::kBinomial})
    CHECK(parse_counting_model(to_string(m)) == m);
  CHECK_THROWS_AS(parse_counting_model("gamma"), std::invalid_argument);
}

TEST_CASE("memory order is the smallest m reaching the coverage target") {
  for (double ts : {0.1, 0.15, 0.2, 0.25, 0.3, 0.5, 1.0, 2.0}) {
    const ChannelConfig cfg = default_geometry(ts);
    const auto choice = select_memory_order(cfg, 0.7, 40);
    const double target = 0.7 * 0.4;
    const auto cover = [&](int m) {
      return static_cast<double>(oracle::hit_probability((m + 1) * ts, 12.5, 5.0, 79.4));
    };
    CHECK_FALSE(choice.capped);
    CHECK(cover(choice.memory_order) >= target);
    if (choice.memory_order > 0) CHECK(cover(choice.memory_order - 1) < target);
  }
}

TEST_CASE("memory order at the default grid") {
  const std::pair<double, int> expected[] = {{0.15, 15}, {0.2, 11}, {0.25, 9}, {0.3, 7},
                                             {0.4, 5},   {0.5, 4},  {1.0, 2},  {2.0, 1}};
  for (auto [ts, m] : expected) {
    const auto choice = select_memory_order(default_geometry(ts));
    CHECK(choice.memory_order == m);
  }
  const auto capped = select_memory_order(default_geometry(0.1));
  CHECK(capped.memory_order == 15);
  CHECK(capped.capped);
}

TEST_CASE("memory order never increases with the symbol duration") {
  int prev = 1000;
  for (int i = 0; i < 200; ++i) {
    const double ts = 0.05 + 0.02 * i;
    const int m = select_memory_order(default_geometry(ts), 0.7, 60).memory_order;
    CHECK(m <= prev);
    prev = m;
  }
}

TEST_CASE("memory order rejects bad arguments") {
  const ChannelConfig cfg;
  CHECK_THROWS_AS(select_memory_order(cfg, 0.0), std::invalid_argument);
  CHECK_THROWS_AS(select_memory_order(cfg, 1.0), std::invalid_argument);
  CHECK_THROWS_AS(select_memory_order(cfg, 0.7, 0), std::invalid_argument);
}

TEST_CASE("config validation") {
  ChannelConfig ok;
  CHECK_NOTHROW(ok.validate());
  auto bad = [](auto mutate) {
    ChannelConfig c;
    mutate(c);
    return c;
  };
  CHECK_THROWS_AS(bad([](ChannelConfig& c) { c.rx_radius_um = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](ChannelConfig& c) { c.tx_distance_um = 5; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](ChannelConfig& c) { c.diffusion_um2_per_s = -1; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](ChannelConfig& c) { c.symbol_duration_s = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](ChannelConfig& c) { c.molecules_per_on = 0; }).validate(), std::invalid_argument);
  CHECK_THROWS_AS(bad([](ChannelConfig& c) { c.prior_p1 = 1.0; }).validate(), std::invalid_argument);
  CHECK(ok.capture_limit() == doctest::Approx(0.4));
}

TEST_CASE("state table moments are sums of active taps") {
  const TapSet taps = make_taps({0.2, 0.1, 0.05, 0.02}, CountingModel::kBinomial);
  const int n = 1000;
  const StateTable table = StateTable::build(taps, n);
  REQUIRE(table.num_states() == 8);
  for (StateId s = 0; s < 8; ++s) {
    // s = X_{t-1} + 2 X_{t-2} + 4 X_{t-3}
    const int b1 = s & 1, b2 = (s >> 1) & 1, b3 = (s >> 2) & 1;
    const double isi = 0.1 * b1 + 0.05 * b2 + 0.02 * b3;
    const double isi_v = 0.09 * b1 + 0.0475 * b2 + 0.0196 * b3;
    CHECK(table.mean(0, s) == doctest::Approx(n * isi));
    CHECK(table.mean(1, s) == doctest::Approx(n * (0.2 + isi)));
    CHECK(table.variance(0, s) == doctest::Approx(n * isi_v));
    CHECK(table.variance(1, s) == doctest::Approx(n * (0.16 + isi_v)));
  }
  CHECK(table.variance(0, 0) == 0.0);
  CHECK(table.floored_variance(0, 0) == kVarianceFloor);
  CHECK(table.log_normalizer(0, 0) == doctest::Approx(-0.5 * std::log(2 * M_PI * 1e-6)));
  CHECK(table.half_precision(1, 3) == doctest::Approx(0.5 / table.variance(1, 3)));
  CHECK(table.means(1)[5] == table.mean(1, 5));
}

TEST_CASE("transition graph is de Bruijn") {
  for (int m = 0; m <= 10; ++m) {
    const StateTable table = StateTable::from_moments(
        m, std::vector<double>(std::size_t{1} << m, 0.0), std::vector<double>(std::size_t{1} << m, 1.0),
        std::vector<double>(std::size_t{1} << m, 1.0), std::vector<double>(std::size_t{1} << m, 1.0));
    const std::size_t n = table.num_states();
    std::vector<int> in_degree(n, 0);
    for (StateId s = 0; s < n; ++s) {
      std::set<StateId> targets;
      for (Bit x : {Bit{0}, Bit{1}}) {
        const StateId nx = table.next_state(s, x);
        REQUIRE(nx < n);
        ++in_degree[nx];
        targets.insert(nx);
        if (m > 0) {
          CHECK(state_bit(nx, 1) == x);
          for (int k = 2; k <= m; ++k) CHECK(state_bit(nx, k) == state_bit(s, k - 1));
        }
      }
      CHECK(targets.size() == (m == 0 ? 1u : 2u));
    }
    for (int d : in_degree) CHECK(d == 2);
  }
}

TEST_CASE("from_moments validates sizes and variances") {
  CHECK_THROWS_AS(StateTable::from_moments(1, {0}, {1, 1}, {1, 1}, {1, 1}), std::invalid_argument);
  CHECK_THROWS_AS(StateTable::from_moments(0, {0}, {-1}, {1}, {1}), std::invalid_argument);
  CHECK_THROWS_AS(StateTable::from_moments(-1, {}, {}, {}, {}), std::invalid_argument);
}

TEST_CASE("make_channel wires config, taps and table together") {
  const Channel ch = make_channel(default_geometry(0.5), 4);
  CHECK(ch.taps.memory_order == 4);
  CHECK(ch.table.memory_order() == 4);
  CHECK(ch.table.mean(1, 0) == doctest::Approx(1000 * ch.taps.taps[0]));
  CHECK_THROWS_AS(compute_taps(default_geometry(0.5), -1), std::invalid_argument);
}
