#include <cmath>
#include <random>
#include <set>
#include <vector>

#include "doctest.h"

#include "jackson/erlang.hpp"
#include "jackson/moments.hpp"
#include "jackson/uniformization.hpp"
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

// Counts (stage, ahead, counts) tuples with ahead <= counts[stage node] by
// walking the full box.
std::size_t brute_force_size(Index nodes, const std::vector<Index>& stage_nodes, int cap) {
  std::size_t total = 1;
  std::vector<int> n(static_cast<std::size_t>(nodes), 0);
  const std::size_t cells = static_cast<std::size_t>(std::pow(cap + 1, nodes));
  for (Index node : stage_nodes) {
    for (std::size_t cell = 0; cell < cells; ++cell) {
      std::size_t rest = cell;
      for (Index j = 0; j < nodes; ++j) {
        n[static_cast<std::size_t>(j)] = static_cast<int>(rest % static_cast<std::size_t>(cap + 1));
        rest /= static_cast<std::size_t>(cap + 1);
      }
      total += static_cast<std::size_t>(n[static_cast<std::size_t>(node)]) + 1;
    }
  }
  return total;
}

struct Pipeline {
  MarkedStateSpace space;
  RandomizedChain chain;
  InitialDistribution initial;
};

Pipeline pipeline(const NetworkSpec& spec, int cap, Index entry = 0, PathMode mode = PathMode::random()) {
  const auto traffic = solve_traffic_equations(spec);
  auto space = build_state_space(spec, traffic, entry, mode, cap);
  const auto generator = build_generator(space, spec);
  auto chain = randomize(generator.Q, generator.alpha);
  auto initial = initial_distribution(space, traffic);
  return {std::move(space), std::move(chain), std::move(initial)};
}

std::vector<double> linspace(double stop, std::size_t points) {
  std::vector<double> grid(points);
  for (std::size_t i = 0; i < points; ++i) grid[i] = stop * static_cast<double>(i) / static_cast<double>(points - 1);
  return grid;
}

}  // namespace

TEST_SUITE("uniformization") {

TEST_CASE("state space sizes agree with enumeration") {
  CHECK(MarkedStateSpace(1, 0, PathMode::random(), 2).size() == 7);
  CHECK(MarkedStateSpace(2, 0, PathMode::random(), 1).size() == 13);
  for (Index J = 1; J <= 3; ++J) {
    for (int cap = 0; cap <= 4; ++cap) {
      std::vector<Index> stages;
      for (Index j = 0; j < J; ++j) stages.push_back(j);
      const MarkedStateSpace space(J, 0, PathMode::random(), cap);
      CHECK(space.size() == brute_force_size(J, stages, cap));
      CHECK(MarkedStateSpace::count(J, J, cap) == static_cast<double>(space.size()));
    }
  }
  const MarkedStateSpace revisit(1, 0, PathMode::fixed({0, 0, 0}), 3);
  CHECK(revisit.size() == brute_force_size(1, {0, 0, 0}, 3));
}

TEST_CASE("state ids round-trip and respect the box") {
  for (const auto& mode : {PathMode::random(), PathMode::fixed({1, 0, 2, 0})}) {
    const MarkedStateSpace space(3, mode.is_fixed() ? 1 : 0, mode, 3);
    std::set<std::vector<int>> seen;
    for (std::size_t id = 1; id < space.size(); ++id) {
      const MarkedState state = space.state(id);
      CHECK(space.id(state) == id);
      CHECK(state.node == space.stage_node(state.stage));
      CHECK(state.ahead >= 0);
      CHECK(state.ahead <= state.counts[static_cast<std::size_t>(state.node)]);
      for (int n : state.counts) CHECK((n >= 0 && n <= 3));
      std::vector<int> key = state.counts;
      key.push_back(static_cast<int>(state.stage));
      key.push_back(state.ahead);
      CHECK(seen.insert(key).second);
    }
    CHECK(space.state(0).absorbed);
    CHECK(space.id(space.state(0)) == 0);
  }
}

TEST_CASE("initial distribution of a single node") {
  const auto spec = testnet::tandem<double>({2.0}, 1.0);
  const auto traffic = solve_traffic_equations(spec);
  const auto space = build_state_space(spec, traffic, 0, PathMode::random(), 2);
  const auto initial = initial_distribution(space, traffic);
  CHECK(initial.deficit == doctest::Approx(0.125).epsilon(1e-15));
  CHECK(initial.psi.sum() == doctest::Approx(0.875).epsilon(1e-15));
  for (int n = 0; n <= 2; ++n) {
    MarkedState state{false, 0, 0, n, {n}};
    CHECK(initial.psi(static_cast<Eigen::Index>(space.id(state))) == doctest::Approx(std::pow(0.5, n + 1)));
  }
}

TEST_CASE("initial distribution is the truncated product form") {
  const auto spec = testnet::three_node(1.0, 2.0, 1.5, 3.0, 0.4);
  const auto traffic = solve_traffic_equations(spec);
  const auto space = build_state_space(spec, traffic, 0, PathMode::random(), 4);
  const auto initial = initial_distribution(space, traffic);
  double kept = 1.0;
  for (Index j = 0; j < 3; ++j) kept *= 1.0 - std::pow(traffic.rho(j), 5);
  CHECK(initial.psi.sum() == doctest::Approx(kept).epsilon(1e-13));
  CHECK(initial.deficit == doctest::Approx(1.0 - kept).epsilon(1e-13));
  for (std::size_t id = 1; id < space.size(); ++id) {
    const auto state = space.state(id);
    const double weight = initial.psi(static_cast<Eigen::Index>(id));
    if (state.stage != 0 || state.ahead != state.counts[0]) {
      CHECK(weight == 0.0);
    } else {
      CHECK(weight == doctest::Approx(stationary_probability(traffic, std::span<const int>(state.counts))).epsilon(1e-13));
    }
  }
}

TEST_CASE("randomized chain is substochastic with tracked loss") {
  std::mt19937_64 rng(21);
  for (int trial = 0; trial < 40; ++trial) {
    const auto spec = testnet::random_network(rng, 3, 0.8);
    const auto p = pipeline(spec, 3);
    const Eigen::VectorXd rows = p.chain.R * Eigen::VectorXd::Ones(p.chain.R.cols());
    for (Eigen::Index x = 1; x < rows.size(); ++x) {
      CHECK(std::abs(rows(x) + p.chain.loss(x) - 1.0) <= 1e-12);
      CHECK(p.chain.loss(x) >= 0.0);
    }
    for (Eigen::Index x = 0; x < p.chain.R.outerSize(); ++x) {
      for (SparseRowMatrix::InnerIterator it(p.chain.R, x); it; ++it) CHECK(it.value() >= -1e-15);
    }
  }
}

TEST_CASE("the two absorption formulae agree") {
  std::mt19937_64 rng(8);
  for (int trial = 0; trial < 30; ++trial) {
    const auto spec = testnet::random_network(rng, 3, 0.8);
    const auto p = pipeline(spec, 2);
    const auto trace = trace_jumps(p.chain, p.initial, 300, 0.0);
    REQUIRE(trace.h_flow.size() == 301);
    for (std::size_t n = 0; n < trace.h_flow.size(); ++n) {
      CHECK(std::abs(trace.h_flow[n] - trace.h_mass[n]) <= 1e-12);
      CHECK(trace.h_flow[n] >= 0.0);
    }
  }
}

TEST_CASE("M/M/1 bounds contain the exponential law") {
  const auto spec = testnet::tandem<double>({2.0}, 1.0);
  SojournOptions options;
  options.epsilon = 1e-6;
  options.cap = 60;
  options.grid = linspace(12.0, 61);
  const auto analysis = sojourn_analysis(spec, options);
  const double deficit = analysis.mixture.deficit();
  for (std::size_t i = 0; i < options.grid.size(); ++i) {
    const double exact = 1.0 - std::exp(-options.grid[i]);
    CHECK(analysis.bounds.lower[i] <= exact + 1e-14);
    CHECK(exact <= analysis.bounds.upper[i] + 1e-14);
    CHECK(std::abs(analysis.bounds.lower[i] - exact) <= 1e-5 + deficit);
  }
  CHECK(analysis.mixture.total() <= 1.0);
}

TEST_CASE("a single-term mixture is its Erlang law") {
  ErlangMixture mixture;
  mixture.alpha = 1.0;
  mixture.h = {0.0, 1.0};
  const auto bounds = cdf_bounds(mixture, {0.0, 0.5, 2.0});
  for (std::size_t i = 0; i < 3; ++i) {
    CHECK(bounds.lower[i] == doctest::Approx(1.0 - std::exp(-bounds.grid[i])).epsilon(1e-15));
    CHECK(bounds.upper[i] == bounds.lower[i]);
  }
}

TEST_CASE("bounds tighten monotonically in the number of jumps") {
  const auto spec = testnet::three_node(1.0, 2.0, 2.0, 2.0, 0.5);
  SojournOptions options;
  options.epsilon = 1e-5;
  options.cap = 12;
  options.grid = linspace(10.0, 41);
  const auto analysis = sojourn_analysis(spec, options);
  std::vector<double> lower(options.grid.size(), 0.0);
  std::vector<double> upper(options.grid.size(), 1.0);
  for (std::size_t k = 0; k <= analysis.mixture.jumps(); k += 7) {
    const auto bounds = cdf_bounds(analysis.mixture.prefix(k), options.grid);
    for (std::size_t i = 0; i < lower.size(); ++i) {
      CHECK(bounds.lower[i] >= lower[i] - 1e-15);
      CHECK(bounds.upper[i] <= upper[i] + 1e-15);
      CHECK(bounds.lower[i] <= bounds.upper[i]);
      lower[i] = bounds.lower[i];
      upper[i] = bounds.upper[i];
    }
  }
}

TEST_CASE("absorbed mass grows with the cap") {
  const auto spec = testnet::feedback(1.0, 3.0, 0.5);
  double previous = 0.0;
  for (int cap = 0; cap <= 12; ++cap) {
    const auto p = pipeline(spec, cap);
    const auto trace = trace_jumps(p.chain, p.initial, 150, 0.0);
    double total = 0.0;
    for (double h : trace.h_flow) total += h;
    CHECK(total >= previous - 1e-15);
    CHECK(total <= 1.0);
    previous = total;
  }
}

TEST_CASE("moment lower bounds") {
  const auto spec = testnet::tandem<double>({2, 2, 2}, 1.0);
  SojournOptions options;
  options.epsilon = 1e-9;
  options.cap = 40;
  options.grid = {0.0};
  const auto analysis = sojourn_analysis(spec, options);
  CHECK(analysis.moment_lower_bounds[0] == expected_jumps(analysis.mixture) / analysis.mixture.alpha);
  const std::vector<double> exact{3.0, 12.0, 60.0, 360.0};
  for (std::size_t m = 0; m < 4; ++m) {
    CHECK(analysis.moment_lower_bounds[m] <= exact[m]);
    CHECK(analysis.moment_lower_bounds[m] >= exact[m] * (1.0 - 1e-4));
  }
}

TEST_CASE("feedback queue second-moment lower bound") {
  const auto spec = testnet::feedback(1.0, 3.0, 0.5);
  SojournOptions options;
  options.epsilon = 1e-10;
  options.cap = 70;
  options.grid = {0.0};
  const auto analysis = sojourn_analysis(spec, options);
  const double exact = 44.0 / 7.0 + 4.0;
  CHECK(analysis.moment_lower_bounds[1] <= exact);
  CHECK(analysis.moment_lower_bounds[1] == doctest::Approx(exact).epsilon(1e-5));
}

TEST_CASE("overtake-free networks: lower bounds approach the exact moments") {
  std::mt19937_64 rng(17);
  int checked = 0;
  for (int trial = 0; trial < 200 && checked < 5; ++trial) {
    const auto spec = testnet::random_network(rng, 3, 0.6, true);
    if (!classify_topology(spec).overtake_free_moment_condition) continue;
    const auto traffic = solve_traffic_equations(spec);
    const auto table = detail::overtake_free_moment_table(spec, traffic, 3);
    for (Index entry = 0; entry < spec.nodes(); ++entry) {
      SojournOptions options;
      options.entry = entry;
      options.epsilon = 1e-7;
      options.grid = {0.0};
      options.max_moment = 3;
      const auto analysis = sojourn_analysis(spec, options);
      for (int m = 1; m <= 3; ++m) {
        const double exact = table(entry, m - 1);
        CHECK(analysis.moment_lower_bounds[static_cast<std::size_t>(m - 1)] <= exact * (1.0 + 1e-12));
        CHECK(analysis.moment_lower_bounds[static_cast<std::size_t>(m - 1)] >= exact * (1.0 - 2e-3));
      }
    }
    ++checked;
  }
  CHECK(checked == 5);
}

TEST_CASE("fixed path through a tandem matches random routing") {
  const auto spec = testnet::tandem<double>({2.0, 3.0, 2.5}, 1.0);
  SojournOptions options;
  options.epsilon = 1e-6;
  options.cap = 15;
  options.grid = linspace(8.0, 17);
  const auto random = sojourn_analysis(spec, options);
  options.path = PathMode::fixed({0, 1, 2});
  const auto fixed = sojourn_analysis(spec, options);
  REQUIRE(random.mixture.h.size() == fixed.mixture.h.size());
  for (std::size_t i = 0; i < options.grid.size(); ++i) {
    CHECK(random.bounds.lower[i] == doctest::Approx(fixed.bounds.lower[i]).epsilon(1e-12));
  }
}

TEST_CASE("fixed paths in the three-node network split the random law") {
  // P(S <= t) = p P(S <= t | 1,2,3) + (1-p) P(S <= t | 1,3), and the fixed-path
  // mixtures are the path-conditional laws.
  const double p = 0.4;
  const auto spec = testnet::three_node(1.0, 2.0, 1.5, 2.5, p);
  SojournOptions options;
  options.epsilon = 1e-8;
  options.cap = 22;
  options.grid = linspace(8.0, 9);
  const auto random = sojourn_analysis(spec, options);
  options.path = PathMode::fixed({0, 1, 2});
  const auto upper_path = sojourn_analysis(spec, options);
  options.path = PathMode::fixed({0, 2});
  const auto direct = sojourn_analysis(spec, options);
  for (std::size_t i = 0; i < options.grid.size(); ++i) {
    const double mixed = p * upper_path.bounds.lower[i] + (1 - p) * direct.bounds.lower[i];
    CHECK(std::abs(mixed - random.bounds.lower[i]) <= 1e-5);
  }
}

TEST_CASE("defaults") {
  const auto spec = testnet::tandem<double>({2, 4}, 1.0);
  const auto traffic = solve_traffic_equations(spec);
  const int cap = default_cap(traffic, 1e-4);
  auto tail = [](int c) { return std::pow(0.5, c + 1) / 0.5; };
  CHECK(tail(cap) < 1e-4 / 4);
  CHECK(tail(cap - 1) >= 1e-4 / 4);
  const auto grid = default_time_grid(spec, traffic, 0, PathMode::random(), 101);
  CHECK(grid.size() == 101);
  CHECK(grid.front() == 0.0);
  CHECK(grid.back() == doctest::Approx(5.0 * (1.0 + 1.0 / 3.0)));
}

TEST_CASE("errors") {
  const auto spec = testnet::three_node(1.0, 2.0, 2.0, 2.0, 0.5);
  const auto traffic = solve_traffic_equations(spec);
  CHECK(code_of([&] { build_state_space(spec, traffic, 0, PathMode::random(), -1); }) == ErrorCode::CapTooSmall);
  CHECK_NOTHROW(build_state_space(spec, traffic, 0, PathMode::random(), 0));
  CHECK(code_of([&] { build_state_space(spec, traffic, 0, PathMode::fixed({1, 2}), 3); }) == ErrorCode::UnreachablePath);
  CHECK(code_of([&] { build_state_space(spec, traffic, 0, PathMode::fixed({0, 2, 1}), 3); }) == ErrorCode::UnreachablePath);
  CHECK(code_of([&] { build_state_space(spec, traffic, 0, PathMode::fixed({0, 1}), 3); }) == ErrorCode::UnreachablePath);
  CHECK(code_of([&] { build_state_space(spec, traffic, 0, PathMode::random(), 50, 1e5); }) == ErrorCode::StateSpaceTooLarge);

  const auto unstable = testnet::tandem<double>({2, 4}, 3.0);
  SojournOptions options;
  CHECK(code_of([&] { sojourn_analysis(unstable, options); }) == ErrorCode::UnstableNetwork);
  options.epsilon = 1.5;
  CHECK(code_of([&] { sojourn_analysis(spec, options); }) == ErrorCode::InvalidArgument);
  options.epsilon = 1e-6;
  options.max_jumps = 3;
  CHECK(code_of([&] { sojourn_analysis(spec, options); }) == ErrorCode::NoConvergence);

  const auto generator = build_generator(build_state_space(spec, traffic, 0, PathMode::random(), 2), spec);
  CHECK(code_of([&] { randomize(generator.Q, 0.5 * generator.alpha); }) == ErrorCode::AlphaTooSmall);
}

}
