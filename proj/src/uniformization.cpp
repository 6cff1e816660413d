#include "jackson/uniformization.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "jackson/erlang.hpp"
#include "jackson/error.hpp"
#include "jackson/moments.hpp"

namespace jackson {

namespace {

std::size_t ipow(std::size_t base, Index exponent) {
  std::size_t result = 1;
  for (Index i = 0; i < exponent; ++i) result *= base;
  return result;
}

// Departure probability 1 - sum_l p_jl, computed here so unvalidated specs work.
double departure_probability(const NetworkSpec& spec, Index j) {
  return std::max(0.0, 1.0 - spec.routing.row(j).sum());
}

}  // namespace

// ---------------------------------------------------------------------------
// MarkedStateSpace

MarkedStateSpace::MarkedStateSpace(Index nodes, Index entry, PathMode mode, int cap)
    : nodes_(nodes),
      stages_(mode.is_fixed() ? static_cast<Index>(mode.path.size()) : nodes),
      entry_(entry),
      mode_(std::move(mode)),
      cap_(cap) {
  const auto radix = static_cast<std::size_t>(cap_) + 1;
  others_ = ipow(radix, nodes_ - 1);
  stage_block_ = others_ * radix * (radix + 1) / 2;
  size_ = 1 + static_cast<std::size_t>(stages_) * stage_block_;
}

double MarkedStateSpace::count(Index nodes, Index stages, int cap) {
  const double radix = static_cast<double>(cap) + 1.0;
  return 1.0 + static_cast<double>(stages) * std::pow(radix, static_cast<double>(nodes - 1)) *
                   radix * (radix + 1.0) / 2.0;
}

Index MarkedStateSpace::stage_node(Index stage) const {
  return mode_.is_fixed() ? mode_.path[static_cast<std::size_t>(stage)] : stage;
}

std::size_t MarkedStateSpace::ahead_offset(int ahead) const {
  const auto a = static_cast<std::size_t>(ahead);
  const auto radix = static_cast<std::size_t>(cap_) + 1;
  if (a == 0) return 0;
  return others_ * (a * radix - a * (a - 1) / 2);
}

std::size_t MarkedStateSpace::id(const MarkedState& state) const {
  if (state.absorbed) return 0;
  const Index marked = stage_node(state.stage);
  std::size_t local = 0;
  for (Index j = 0; j < nodes_; ++j) {
    const auto n = static_cast<std::size_t>(state.counts[static_cast<std::size_t>(j)]);
    if (j == marked) {
      local = local * static_cast<std::size_t>(cap_ - state.ahead + 1) +
              (n - static_cast<std::size_t>(state.ahead));
    } else {
      local = local * static_cast<std::size_t>(cap_ + 1) + n;
    }
  }
  return 1 + static_cast<std::size_t>(state.stage) * stage_block_ + ahead_offset(state.ahead) +
         local;
}

MarkedState MarkedStateSpace::state(std::size_t id) const {
  MarkedState state;
  if (id == 0) {
    state.absorbed = true;
    return state;
  }
  if (id >= size_) throw Error(ErrorCode::InvalidArgument, "state id out of range");
  std::size_t rest = id - 1;
  state.stage = static_cast<Index>(rest / stage_block_);
  rest %= stage_block_;
  state.node = stage_node(state.stage);

  int ahead = 0;
  while (rest >= static_cast<std::size_t>(cap_ - ahead + 1) * others_) {
    rest -= static_cast<std::size_t>(cap_ - ahead + 1) * others_;
    ++ahead;
  }
  state.ahead = ahead;

  state.counts.assign(static_cast<std::size_t>(nodes_), 0);
  for (Index j = nodes_ - 1; j >= 0; --j) {
    const bool marked = j == state.node;
    const auto radix = static_cast<std::size_t>(marked ? cap_ - ahead + 1 : cap_ + 1);
    const auto digit = static_cast<int>(rest % radix);
    rest /= radix;
    state.counts[static_cast<std::size_t>(j)] = marked ? digit + ahead : digit;
  }
  return state;
}

// ---------------------------------------------------------------------------
// ErlangMixture

double ErlangMixture::total() const {
  return std::accumulate(h.begin(), h.end(), 0.0);
}

double ErlangMixture::deficit() const {
  return std::max(0.0, 1.0 - total());
}

ErlangMixture ErlangMixture::prefix(std::size_t k) const {
  ErlangMixture cut = *this;
  if (k + 1 < cut.h.size()) cut.h.resize(k + 1);
  return cut;
}

// ---------------------------------------------------------------------------
// Pipeline stages

MarkedStateSpace build_state_space(const NetworkSpec& spec, const TrafficSolution& traffic,
                                   Index entry, const PathMode& mode, int cap,
                                   double max_states) {
  const Index J = spec.nodes();
  detail::require_index(spec, entry);
  detail::require_stable(traffic);
  if (cap < 0) throw Error(ErrorCode::CapTooSmall, "cap must be >= 0");

  if (mode.is_fixed()) {
    const auto& path = mode.path;
    for (Index j : path) detail::require_index(spec, j);
    if (path.front() != entry) {
      throw Error(ErrorCode::UnreachablePath, "path must start at the entry node");
    }
    for (std::size_t i = 0; i + 1 < path.size(); ++i) {
      if (!(spec.routing(path[i], path[i + 1]) > 0.0)) {
        throw Error(ErrorCode::UnreachablePath, "no routing from node " +
                                                    std::to_string(path[i] + 1) + " to node " +
                                                    std::to_string(path[i + 1] + 1));
      }
    }
    if (!(departure_probability(spec, path.back()) > 0.0)) {
      throw Error(ErrorCode::UnreachablePath, "customers cannot leave from the last path node");
    }
  }

  const Index stages = mode.is_fixed() ? static_cast<Index>(mode.path.size()) : J;
  const double size = MarkedStateSpace::count(J, stages, cap);
  if (size > max_states) {
    throw Error(ErrorCode::StateSpaceTooLarge,
                std::to_string(static_cast<long long>(size)) + " states exceed the limit of " +
                    std::to_string(static_cast<long long>(max_states)));
  }
  return MarkedStateSpace(J, entry, mode, cap);
}

Generator build_generator(const MarkedStateSpace& space, const NetworkSpec& spec) {
  using Triplet = Eigen::Triplet<double, std::ptrdiff_t>;
  const Index J = spec.nodes();
  const int cap = space.cap();

  std::vector<double> leave(static_cast<std::size_t>(J));
  for (Index j = 0; j < J; ++j) leave[static_cast<std::size_t>(j)] = departure_probability(spec, j);

  std::vector<Triplet> entries;
  entries.reserve(space.size() * static_cast<std::size_t>(J + 3));

  for (std::size_t x = 1; x < space.size(); ++x) {
    MarkedState state = space.state(x);
    auto& n = state.counts;
    const Index marked = state.node;
    const auto row = static_cast<std::ptrdiff_t>(x);
    double outflow = 0.0;
    double clipped = 0.0;

    auto add = [&](const MarkedState& target, double rate) {
      if (rate <= 0.0) return;
      entries.emplace_back(row, static_cast<std::ptrdiff_t>(space.id(target)), rate);
      outflow += rate;
    };
    // A background customer served at j moves on per P or leaves.
    auto route_background = [&](Index j, double rate, bool was_ahead) {
      const auto uj = static_cast<std::size_t>(j);
      for (Index l = 0; l < J; ++l) {
        const double p = spec.routing(j, l);
        if (!(p > 0.0)) continue;
        if (l == j && !was_ahead) continue;  // self-loop behind or away from the marked customer
        const auto ul = static_cast<std::size_t>(l);
        MarkedState target = state;
        target.counts[uj] -= 1;
        if (was_ahead) target.ahead -= 1;
        if (target.counts[ul] + 1 > cap) {
          clipped += rate * p;
          continue;
        }
        target.counts[ul] += 1;
        add(target, rate * p);
      }
      if (leave[uj] > 0.0) {
        MarkedState target = state;
        target.counts[uj] -= 1;
        if (was_ahead) target.ahead -= 1;
        add(target, rate * leave[uj]);
      }
    };

    for (Index j = 0; j < J; ++j) {
      const auto uj = static_cast<std::size_t>(j);
      const double v = spec.arrival_rates(j);
      if (v > 0.0) {
        if (n[uj] < cap) {
          MarkedState target = state;
          target.counts[uj] += 1;
          add(target, v);
        } else {
          clipped += v;
        }
      }

      const double mu = spec.service_rates(j);
      if (j != marked) {
        if (n[uj] > 0) route_background(j, mu, false);
      } else if (state.ahead > 0) {
        route_background(j, mu, true);
      } else if (space.path_mode().is_fixed()) {
        MarkedState target;
        if (state.stage + 1 < space.stages()) {
          target = state;
          target.stage = state.stage + 1;
          target.node = space.stage_node(target.stage);
          target.ahead = n[static_cast<std::size_t>(target.node)];
        } else {
          target.absorbed = true;
        }
        add(target, mu);
      } else {
        for (Index l = 0; l < J; ++l) {
          const double p = spec.routing(j, l);
          if (!(p > 0.0)) continue;
          MarkedState target = state;
          target.stage = l;
          target.node = l;
          target.ahead = n[static_cast<std::size_t>(l)];
          add(target, mu * p);
        }
        MarkedState gone;
        gone.absorbed = true;
        add(gone, mu * leave[uj]);
      }
    }
    entries.emplace_back(row, row, -(outflow + clipped));
  }

  Generator generator;
  const auto size = static_cast<Eigen::Index>(space.size());
  generator.Q.resize(size, size);
  generator.Q.setFromTriplets(entries.begin(), entries.end());
  generator.alpha = spec.arrival_rates.sum() + spec.service_rates.sum();
  return generator;
}

RandomizedChain randomize(const SparseRowMatrix& Q, double alpha) {
  if (!(alpha > 0.0)) throw Error(ErrorCode::AlphaTooSmall, "alpha must be positive");
  const Eigen::Index size = Q.rows();
  SparseRowMatrix identity(size, size);
  identity.setIdentity();

  RandomizedChain chain;
  chain.alpha = alpha;
  chain.R = identity + Q / alpha;
  chain.loss.resize(size);
  for (Eigen::Index x = 0; x < size; ++x) {
    double row_sum = 0.0;
    double diagonal = 0.0;
    for (SparseRowMatrix::InnerIterator it(chain.R, x); it; ++it) {
      row_sum += it.value();
      if (it.col() == x) diagonal = it.value();
    }
    if (diagonal < -1e-12) {
      throw Error(ErrorCode::AlphaTooSmall,
                  "alpha below the total outflow of state " + std::to_string(x));
    }
    chain.loss(x) = std::max(0.0, 1.0 - row_sum);
  }
  return chain;
}

InitialDistribution initial_distribution(const MarkedStateSpace& space,
                                         const TrafficSolution& traffic) {
  detail::require_stable(traffic);
  const Index J = space.nodes();
  const int cap = space.cap();

  InitialDistribution initial;
  initial.psi = Eigen::VectorXd::Zero(static_cast<Eigen::Index>(space.size()));

  std::vector<std::vector<double>> geometric(static_cast<std::size_t>(J));
  double kept = 1.0;
  for (Index j = 0; j < J; ++j) {
    const double rho = traffic.rho(j);
    auto& g = geometric[static_cast<std::size_t>(j)];
    g.resize(static_cast<std::size_t>(cap) + 1);
    double power = 1.0;
    for (int k = 0; k <= cap; ++k) {
      g[static_cast<std::size_t>(k)] = (1.0 - rho) * power;
      power *= rho;
    }
    kept *= 1.0 - power;  // power == rho^{cap+1}
  }
  initial.deficit = 1.0 - kept;

  MarkedState state;
  state.stage = space.path_mode().is_fixed() ? 0 : space.entry();
  state.node = space.stage_node(state.stage);
  state.counts.assign(static_cast<std::size_t>(J), 0);
  while (true) {
    double weight = 1.0;
    for (Index j = 0; j < J; ++j) {
      weight *= geometric[static_cast<std::size_t>(j)]
                         [static_cast<std::size_t>(state.counts[static_cast<std::size_t>(j)])];
    }
    state.ahead = state.counts[static_cast<std::size_t>(state.node)];
    initial.psi(static_cast<Eigen::Index>(space.id(state))) = weight;

    // odometer over {0..cap}^J, last node fastest
    Index j = J - 1;
    while (j >= 0 && state.counts[static_cast<std::size_t>(j)] == cap) {
      state.counts[static_cast<std::size_t>(j)] = 0;
      --j;
    }
    if (j < 0) break;
    ++state.counts[static_cast<std::size_t>(j)];
  }
  return initial;
}

JumpTrace trace_jumps(const RandomizedChain& chain, const InitialDistribution& initial,
                      std::size_t jumps, double epsilon) {
  JumpTrace trace;
  Eigen::VectorXd phi = initial.psi;
  const double absorbed = phi(0);
  phi(0) = 0.0;
  double remaining = phi.sum();

  trace.h_flow.push_back(absorbed);
  trace.h_mass.push_back((1.0 - initial.deficit) - remaining);
  trace.remaining.push_back(remaining);
  trace.lost.push_back(0.0);

  Eigen::VectorXd next(phi.size());
  for (std::size_t n = 1; n <= jumps; ++n) {
    if (epsilon > 0.0 && remaining <= epsilon) break;
    next.noalias() = chain.R.transpose() * phi;
    const double entered = next(0);
    next(0) = 0.0;
    const double lost = chain.loss.dot(phi);
    const double still = next.sum();

    trace.h_flow.push_back(entered);
    trace.h_mass.push_back(remaining - still - lost);
    trace.remaining.push_back(still);
    trace.lost.push_back(lost);
    remaining = still;
    phi.swap(next);
  }
  return trace;
}

ErlangMixture compute_h(const RandomizedChain& chain, const InitialDistribution& initial,
                        double epsilon, std::size_t max_jumps) {
  if (!(epsilon > 0.0 && epsilon < 1.0)) {
    throw Error(ErrorCode::InvalidArgument, "epsilon must lie in (0, 1)");
  }
  JumpTrace trace = trace_jumps(chain, initial, max_jumps, epsilon);
  if (trace.remaining.back() > epsilon) {
    throw Error(ErrorCode::NoConvergence,
                "A-mass still " + std::to_string(trace.remaining.back()) + " after " +
                    std::to_string(max_jumps) + " jumps");
  }
  ErlangMixture mixture;
  mixture.alpha = chain.alpha;
  mixture.h = std::move(trace.h_flow);
  mixture.epsilon = epsilon;
  mixture.initial_deficit = initial.deficit;
  mixture.clipped = std::accumulate(trace.lost.begin(), trace.lost.end(), 0.0);
  mixture.unresolved = trace.remaining.back();
  return mixture;
}

CdfBounds cdf_bounds(const ErlangMixture& mixture, const std::vector<double>& grid) {
  for (std::size_t i = 0; i < grid.size(); ++i) {
    if (!(grid[i] >= 0.0) || (i > 0 && grid[i] < grid[i - 1])) {
      throw Error(ErrorCode::InvalidArgument, "grid must be sorted and nonnegative");
    }
  }
  CdfBounds bounds;
  bounds.grid = grid;
  bounds.epsilon = mixture.epsilon;
  bounds.lower.reserve(grid.size());
  bounds.upper.reserve(grid.size());

  const double missing = mixture.deficit();
  const std::size_t k = mixture.jumps();
  for (double t : grid) {
    const auto erlang = erlang_cdf_table(k, mixture.alpha, t);
    double lower = 0.0;
    for (std::size_t n = 0; n <= k && n < mixture.h.size(); ++n) lower += mixture.h[n] * erlang[n];
    lower = std::clamp(lower, 0.0, 1.0);
    bounds.lower.push_back(lower);
    bounds.upper.push_back(std::min(1.0, lower + missing));
  }
  return bounds;
}

double expected_jumps(const ErlangMixture& mixture) {
  double sum = 0.0;
  for (std::size_t n = 0; n < mixture.h.size(); ++n) sum += static_cast<double>(n) * mixture.h[n];
  return sum;
}

double moment_lower_bound(const ErlangMixture& mixture, int m) {
  if (m < 1) throw Error(ErrorCode::InvalidArgument, "moment order must be >= 1");
  if (m == 1) return expected_jumps(mixture) / mixture.alpha;

  double sum = 0.0;
  for (std::size_t n = 1; n < mixture.h.size(); ++n) {
    double rising = 1.0;
    for (int i = 0; i < m; ++i) rising *= static_cast<double>(n) + i;
    sum += rising * mixture.h[n];
  }
  return sum / std::pow(mixture.alpha, m);
}

int default_cap(const TrafficSolution& traffic, double epsilon) {
  detail::require_stable(traffic);
  const double rho = traffic.rho.maxCoeff();
  if (!(rho > 0.0)) return 0;
  const double target = epsilon / (2.0 * static_cast<double>(traffic.rho.size()));
  int cap = 0;
  double tail = rho / (1.0 - rho);  // rho^{cap+1} / (1 - rho)
  while (!(tail < target)) {
    tail *= rho;
    ++cap;
  }
  return cap;
}

std::vector<double> default_time_grid(const NetworkSpec& spec, const TrafficSolution& traffic,
                                      Index entry, const PathMode& mode, std::size_t points) {
  double mean = 0.0;
  if (mode.is_fixed()) {
    for (Index j : mode.path) mean += 1.0 / (spec.service_rates(j) - traffic.theta(j));
  } else {
    mean = first_moments(spec, traffic).values(entry);
  }
  std::vector<double> grid(points);
  const double stop = 5.0 * mean;
  for (std::size_t i = 0; i < points; ++i) {
    grid[i] = points > 1 ? stop * static_cast<double>(i) / static_cast<double>(points - 1) : 0.0;
  }
  return grid;
}

SojournAnalysis sojourn_analysis(const NetworkSpec& spec, const SojournOptions& options) {
  const TrafficSolution traffic = solve_traffic_equations(spec);
  detail::require_stable(traffic);

  SojournAnalysis analysis;
  analysis.cap = options.cap ? *options.cap : default_cap(traffic, options.epsilon);
  const auto space = build_state_space(spec, traffic, options.entry, options.path, analysis.cap,
                                       options.max_states);
  analysis.states = space.size();

  const Generator generator = build_generator(space, spec);
  const RandomizedChain chain = randomize(generator.Q, generator.alpha);
  const InitialDistribution initial = initial_distribution(space, traffic);
  analysis.mixture = compute_h(chain, initial, options.epsilon, options.max_jumps);

  const auto grid = options.grid.empty()
                        ? default_time_grid(spec, traffic, options.entry, options.path, 101)
                        : options.grid;
  analysis.bounds = cdf_bounds(analysis.mixture, grid);
  for (int m = 1; m <= options.max_moment; ++m) {
    analysis.moment_lower_bounds.push_back(moment_lower_bound(analysis.mixture, m));
  }
  return analysis;
}

}  // namespace jackson
