#include <cmath>
#include <random>
#include <vector>

#include "doctest.h"

#include "jackson/simulator.hpp"
#include "networks.hpp"

using namespace jackson;

namespace {

ErrorCode code_of(auto&& f) {
  try {
    f();
  } catch (const Error& e) {
    return e.code();
  }
  FAIL("no error thrown");
  return ErrorCode::InvalidArgument;
}

SimConfig config(std::uint64_t seed, std::size_t tags) {
  SimConfig c;
  c.seed = seed;
  c.tagged_customers = tags;
  return c;
}

}  // namespace

TEST_SUITE("simulator") {

TEST_CASE("same seed, same samples") {
  const auto spec = testnet::three_node(1.0, 2.0, 2.0, 2.0, 0.5);
  const auto a = simulate(spec, config(9, 2000));
  const auto b = simulate(spec, config(9, 2000));
  const auto c = simulate(spec, config(10, 2000));
  REQUIRE(a.samples.size() == b.samples.size());
  bool identical = true;
  for (std::size_t i = 0; i < a.samples.size(); ++i) {
    identical = identical && a.samples[i].total == b.samples[i].total &&
                a.samples[i].path == b.samples[i].path;
  }
  CHECK(identical);
  CHECK(a.samples[5].total != c.samples[5].total);
}

TEST_CASE("M/M/1 sojourn, PASTA and Little's law") {
  const auto spec = testnet::tandem<double>({2.0}, 1.0);
  const auto result = simulate(spec, config(1, 200'000));
  REQUIRE(result.samples.size() == 200'000);
  const auto first = empirical_moments(result.samples, 1);
  CHECK(std::abs(first.mean - 1.0) <= 4.0 * first.mean_se);
  CHECK(std::abs(first.variance - 1.0) <= 4.0 * first.variance_se);

  double seen = 0.0;
  for (const auto& s : result.samples) seen += s.seen_on_arrival;
  CHECK(seen / 200'000.0 == doctest::Approx(1.0).epsilon(0.05));

  const auto& stats = result.statistics;
  CHECK(stats.stable);
  const double little = stats.exogenous_rate * stats.mean_sojourn_all;
  const double tolerance = 4.0 * std::hypot(stats.mean_population_se, stats.exogenous_rate * stats.mean_sojourn_all_se);
  CHECK(std::abs(stats.mean_population - little) <= tolerance);
}

TEST_CASE("throughput equals the traffic solution") {
  Eigen::VectorXd v(3), mu(3);
  v << 0.6, 0.3, 0.0;
  mu << 3.0, 2.5, 4.0;
  Eigen::MatrixXd P(3, 3);
  P << 0.0, 0.4, 0.3, 0.2, 0.0, 0.5, 0.1, 0.1, 0.2;
  const auto spec = testnet::from(v, mu, P);
  const auto traffic = solve_traffic_equations(spec);
  const auto result = simulate(spec, config(3, 100'000));
  for (Index j = 0; j < 3; ++j) {
    CHECK(std::abs(result.statistics.throughput(j) - traffic.theta(j)) <=
          4.0 * result.statistics.throughput_se(j));
  }
}

TEST_CASE("tandem node sojourns are exponential and uncorrelated") {
  const auto spec = testnet::tandem<double>({2.0, 3.0}, 1.0);
  const auto result = simulate(spec, config(4, 100'000));
  double first = 0.0, second = 0.0;
  for (const auto& s : result.samples) {
    first += s.node_sojourns[0];
    second += s.node_sojourns[1];
  }
  CHECK(first / 1e5 == doctest::Approx(1.0).epsilon(0.03));
  CHECK(second / 1e5 == doctest::Approx(0.5).epsilon(0.03));
  const auto r = correlation(result.samples, 0, 1);
  CHECK(r.count == 100'000);
  CHECK(r.lower < r.upper);
  CHECK(std::abs(r.r) < 0.02);
}

TEST_CASE("feedback queue moments") {
  const auto spec = testnet::feedback(1.0, 3.0, 0.5);
  const auto result = simulate(spec, config(42, 100'000));
  const auto m = empirical_moments(result.samples, 1);
  CHECK(std::abs(m.mean - 2.0) <= 3.0 * m.mean_se);
  CHECK(std::abs(m.variance - 44.0 / 7.0) <= 3.0 * m.variance_se);
  std::size_t revisits = 0;
  for (const auto& s : result.samples) revisits += s.path.size() > 1;
  CHECK(static_cast<double>(revisits) / 1e5 == doctest::Approx(0.5).epsilon(0.02));
}

TEST_CASE("entry and path filters") {
  Eigen::VectorXd v(3), mu(3);
  v << 1.0, 0.5, 0.0;
  mu << 3.0, 3.0, 3.0;
  Eigen::MatrixXd P = Eigen::MatrixXd::Zero(3, 3);
  P(0, 1) = 0.5;
  P(0, 2) = 0.5;
  P(1, 2) = 1.0;
  const auto spec = testnet::from(v, mu, P);

  auto c = config(5, 6000);
  c.entry_filter = 1;
  const auto entry = simulate(spec, c);
  CHECK(entry.statistics.tagged == 6000);
  CHECK(entry.samples.size() > 1000);
  CHECK(entry.samples.size() < 3000);
  for (const auto& s : entry.samples) CHECK(s.entry() == 1);

  c.entry_filter.reset();
  c.path_filter = {0, 1, 2};
  const auto path = simulate(spec, c);
  for (const auto& s : path.samples) CHECK(s.path == std::vector<Index>{0, 1, 2});
  CHECK(path.samples.size() > 1500);
}

TEST_CASE("probe mode without exogenous traffic") {
  NetworkSpec spec{Eigen::Vector2d(0.0, 0.0), Eigen::Vector2d(2.0, 3.0), Eigen::Matrix2d::Zero(), {}};
  spec.routing(0, 1) = 1.0;
  spec = validate_spec(spec, ArrivalPolicy::AllowNone);
  const auto result = simulate(spec, config(6, 50'000));
  const auto m = empirical_moments(result.samples, 1);
  CHECK(std::abs(m.mean - (0.5 + 1.0 / 3.0)) <= 4.0 * m.mean_se);
  for (std::size_t i = 0; i < 100; ++i) CHECK(result.samples[i].seen_on_arrival == 0);
}

TEST_CASE("empirical CDF and the DKW band") {
  const auto spec = testnet::tandem<double>({2.0}, 1.0);
  const auto result = simulate(spec, config(2, 400'000));
  // Consecutive sojourns are correlated; keep every 50th so the band's
  // independence assumption is close to true.
  std::vector<SojournSample> thinned;
  for (std::size_t i = 0; i < result.samples.size(); i += 50) thinned.push_back(result.samples[i]);
  const std::vector<double> grid{0.0, 0.5, 1.0, 2.0, 4.0};
  const auto cdf = empirical_cdf(thinned, grid);
  CHECK(cdf.dkw_half_width == doctest::Approx(std::sqrt(std::log(200.0) / 16'000.0)));
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CHECK(std::abs(cdf.values[i] - (1.0 - std::exp(-grid[i]))) <= cdf.dkw_half_width);
    if (i > 0) CHECK(cdf.values[i] >= cdf.values[i - 1]);
  }
}

TEST_CASE("batch means") {
  const std::vector<double> constant(1000, 3.0);
  CHECK(batch_means_se(constant, 10) == 0.0);
  std::mt19937_64 rng(1);
  std::normal_distribution<double> normal(0.0, 2.0);
  std::vector<double> noise(100'000);
  for (double& x : noise) x = normal(rng);
  CHECK(batch_means_se(noise, 100) == doctest::Approx(2.0 / std::sqrt(1e5)).epsilon(0.25));
}

TEST_CASE("errors") {
  const auto spec = testnet::tandem<double>({2.0}, 1.0);
  CHECK(code_of([&] { simulate(spec, config(1, 0)); }) == ErrorCode::InvalidArgument);
  auto c = config(1, 1000);
  c.max_events = 100;
  CHECK(code_of([&] { simulate(spec, c); }) == ErrorCode::MaxEventsExceeded);
  const std::vector<SojournSample> one(1);
  CHECK(code_of([&] { empirical_moments(one, 1); }) == ErrorCode::TooFewSamples);
  CHECK(code_of([&] { correlation(one, 0, 1); }) == ErrorCode::TooFewSamples);
}

}
