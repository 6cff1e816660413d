#ifndef JACKSON_NETWORK_HPP
#define JACKSON_NETWORK_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jackson/erlang.hpp"
#include "jackson/error.hpp"

namespace jackson {

using Index = Eigen::Index;

/// An open Jackson network: single-server FCFS exponential nodes fed by
/// independent Poisson streams, with Bernoulli routing.
template <typename Scalar>
struct Network {
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using Matrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic>;

  Vector arrival_rates;  // exogenous rate per node
  Vector service_rates;
  Matrix routing;        // routing(j, l) = probability j -> l after service
  Vector departure;      // 1 - row sums; filled in by validate_spec

  Index nodes() const { return service_rates.size(); }
};

using NetworkSpec = Network<double>;

template <typename Scalar>
struct Traffic {
  typename Network<Scalar>::Vector theta;  // total arrival rate per node
  typename Network<Scalar>::Vector rho;    // theta / mu
  bool stable = false;
};

using TrafficSolution = Traffic<double>;

struct TopologyClass {
  bool acyclic = false;
  bool has_feedback = false;
  bool overtake_free_moment_condition = false;
};

enum class ArrivalPolicy { RequireExogenous, AllowNone };

namespace detail {

template <typename Scalar>
constexpr Scalar kStabilityMargin = Scalar(1e-12);

template <typename Scalar>
constexpr Scalar kRowSumSlack = Scalar(1e-12);

template <typename Scalar>
constexpr Scalar kSpectralSlack = Scalar(1e-10);

template <typename Scalar>
Scalar spectral_radius(const typename Network<Scalar>::Matrix& routing) {
  if (routing.size() == 0) return Scalar(0);
  Eigen::EigenSolver<typename Network<Scalar>::Matrix> solver(routing, false);
  return solver.eigenvalues().cwiseAbs().maxCoeff();
}

template <typename Scalar>
void require_index(const Network<Scalar>& spec, Index j) {
  if (j < 0 || j >= spec.nodes()) {
    throw Error(ErrorCode::InvalidArgument, "node index " + std::to_string(j) + " out of range");
  }
}

template <typename Scalar>
void require_stable(const Traffic<Scalar>& traffic) {
  if (!traffic.stable) throw Error(ErrorCode::UnstableNetwork, "some node has rho >= 1");
}

/// Sum of independent exponentials (phase-type with sequential phases),
/// evaluated by uniformization of the phase chain. Used when rates are
/// neither all distinct nor all equal.
template <typename Scalar>
Scalar sequential_phase_cdf(const std::vector<Scalar>& rates, Scalar t) {
  using std::exp;
  const Scalar alpha = *std::max_element(rates.begin(), rates.end());
  const Scalar x = alpha * t;
  const std::size_t phases = rates.size();

  // distribution over phases 0..phases-1 plus absorbed mass
  std::vector<Scalar> occupancy(phases, Scalar(0));
  occupancy[0] = Scalar(1);
  Scalar absorbed = Scalar(0);

  const auto reach = static_cast<std::size_t>(std::ceil(x + Scalar(12) * std::sqrt(x) + Scalar(50)));
  const auto pois = poisson_weights(x, reach);
  Scalar cdf = Scalar(0);
  for (std::size_t n = 0; n <= reach; ++n) {
    cdf += pois[n] * absorbed;
    Scalar carry = Scalar(0);
    for (std::size_t i = 0; i < phases; ++i) {
      const Scalar advance = occupancy[i] * rates[i] / alpha;
      occupancy[i] += carry - advance;
      carry = advance;
    }
    absorbed += carry;
  }
  return std::clamp(cdf, Scalar(0), Scalar(1));
}

template <typename Scalar>
Scalar hypoexponential_cdf(const std::vector<Scalar>& rates, Scalar t) {
  using std::abs;
  using std::exp;
  if (rates.empty()) return Scalar(1);
  if (!(t > Scalar(0))) return Scalar(0);

  const Scalar max_rate = *std::max_element(rates.begin(), rates.end());
  const Scalar close = Scalar(1e-8) * max_rate;
  bool all_close = true;
  bool any_close = false;
  for (std::size_t i = 0; i < rates.size(); ++i) {
    for (std::size_t j = i + 1; j < rates.size(); ++j) {
      const bool near = abs(rates[i] - rates[j]) < close;
      all_close = all_close && near;
      any_close = any_close || near;
    }
  }

  if (all_close) {
    Scalar mean_rate = Scalar(0);
    for (Scalar r : rates) mean_rate += r;
    mean_rate /= static_cast<Scalar>(rates.size());
    return erlang_cdf(rates.size(), mean_rate, t);
  }
  if (any_close) return sequential_phase_cdf(rates, t);

  // 1 - sum_i (prod_{j != i} r_j / (r_j - r_i)) exp(-r_i t)
  Scalar survival = Scalar(0);
  for (std::size_t i = 0; i < rates.size(); ++i) {
    Scalar coefficient = Scalar(1);
    for (std::size_t j = 0; j < rates.size(); ++j) {
      if (j != i) coefficient *= rates[j] / (rates[j] - rates[i]);
    }
    survival += coefficient * exp(-rates[i] * t);
  }
  return std::clamp(Scalar(1) - survival, Scalar(0), Scalar(1));
}

}  // namespace detail

/// Checks the structural constraints of a network and fills in the departure
/// probabilities q_j = 1 - sum_l p_jl.
template <typename Scalar>
Network<Scalar> validate_spec(Network<Scalar> spec,
                              ArrivalPolicy policy = ArrivalPolicy::RequireExogenous) {
  const Index J = spec.nodes();
  if (J < 1) throw Error(ErrorCode::InvalidArgument, "network needs at least one node");
  if (spec.arrival_rates.size() != J || spec.routing.rows() != J || spec.routing.cols() != J) {
    throw Error(ErrorCode::InvalidArgument, "inconsistent dimensions");
  }
  if (!spec.arrival_rates.allFinite() || !spec.service_rates.allFinite() ||
      !spec.routing.allFinite()) {
    throw Error(ErrorCode::InvalidArgument, "non-finite value in network");
  }
  for (Index j = 0; j < J; ++j) {
    if (spec.arrival_rates(j) < Scalar(0)) {
      throw Error(ErrorCode::NegativeRate, "arrival rate at node " + std::to_string(j + 1));
    }
    if (!(spec.service_rates(j) > Scalar(0))) {
      throw Error(ErrorCode::NegativeRate, "service rate at node " + std::to_string(j + 1) +
                                               " must be positive");
    }
  }
  if ((spec.routing.array() < Scalar(0)).any() || (spec.routing.array() > Scalar(1)).any()) {
    throw Error(ErrorCode::InvalidProbability, "routing entries must lie in [0, 1]");
  }
  const typename Network<Scalar>::Vector row_sums = spec.routing.rowwise().sum();
  for (Index j = 0; j < J; ++j) {
    if (row_sums(j) > Scalar(1) + detail::kRowSumSlack<Scalar>) {
      throw Error(ErrorCode::RowSumExceedsOne, "routing row " + std::to_string(j + 1));
    }
  }
  if (policy == ArrivalPolicy::RequireExogenous && !(spec.arrival_rates.sum() > Scalar(0))) {
    throw Error(ErrorCode::NoExogenousArrivals, "all exogenous rates are zero");
  }
  if (detail::spectral_radius<Scalar>(spec.routing) >= Scalar(1) - detail::kSpectralSlack<Scalar>) {
    throw Error(ErrorCode::NonInvertibleRouting, "customers may never leave (spectral radius of P >= 1)");
  }
  spec.departure = (Scalar(1) - row_sums.array()).max(Scalar(0)).matrix();
  return spec;
}

/// Solves theta = v + P^T theta with a dense LU of (I - P^T).
template <typename Scalar>
Traffic<Scalar> solve_traffic_equations(const Network<Scalar>& spec) {
  using Matrix = typename Network<Scalar>::Matrix;
  const Index J = spec.nodes();
  if (detail::spectral_radius<Scalar>(spec.routing) >= Scalar(1) - detail::kSpectralSlack<Scalar>) {
    throw Error(ErrorCode::NonInvertibleRouting, "I - P is singular");
  }
  const Matrix system = Matrix::Identity(J, J) - spec.routing.transpose();
  Traffic<Scalar> traffic;
  traffic.theta = system.partialPivLu().solve(spec.arrival_rates);
  traffic.theta = traffic.theta.cwiseMax(spec.arrival_rates);
  traffic.rho = traffic.theta.cwiseQuotient(spec.service_rates);
  traffic.stable = (traffic.rho.array() < Scalar(1) - detail::kStabilityMargin<Scalar>).all();
  return traffic;
}

/// Product-form equilibrium probability prod_j (1 - rho_j) rho_j^{n_j}.
template <typename Scalar>
Scalar stationary_probability(const Traffic<Scalar>& traffic, std::span<const int> counts) {
  using std::pow;
  detail::require_stable(traffic);
  if (static_cast<Index>(counts.size()) != traffic.rho.size()) {
    throw Error(ErrorCode::InvalidArgument, "state has wrong dimension");
  }
  Scalar probability = Scalar(1);
  for (std::size_t j = 0; j < counts.size(); ++j) {
    if (counts[j] < 0) throw Error(ErrorCode::InvalidArgument, "negative queue length");
    const Scalar rho = traffic.rho(static_cast<Index>(j));
    probability *= (Scalar(1) - rho) * pow(rho, counts[j]);
  }
  return probability;
}

/// Topological order of the routing digraph (edge j -> l iff p_jl > 0), ties
/// broken by smallest node index. Returns fewer than J nodes when cyclic.
template <typename Scalar>
std::vector<Index> topological_order(const Network<Scalar>& spec) {
  const Index J = spec.nodes();
  std::vector<int> indegree(static_cast<std::size_t>(J), 0);
  for (Index j = 0; j < J; ++j)
    for (Index l = 0; l < J; ++l)
      if (spec.routing(j, l) > Scalar(0)) ++indegree[static_cast<std::size_t>(l)];

  std::priority_queue<Index, std::vector<Index>, std::greater<>> ready;
  for (Index j = 0; j < J; ++j)
    if (indegree[static_cast<std::size_t>(j)] == 0) ready.push(j);

  std::vector<Index> order;
  while (!ready.empty()) {
    const Index j = ready.top();
    ready.pop();
    order.push_back(j);
    for (Index l = 0; l < J; ++l) {
      if (spec.routing(j, l) > Scalar(0) && --indegree[static_cast<std::size_t>(l)] == 0) {
        ready.push(l);
      }
    }
  }
  return order;
}

template <typename Scalar>
TopologyClass classify_topology(const Network<Scalar>& spec) {
  const Index J = spec.nodes();
  const auto order = topological_order(spec);

  TopologyClass topology;
  topology.acyclic = static_cast<Index>(order.size()) == J;
  topology.has_feedback = !topology.acyclic;
  if (!topology.acyclic) return topology;

  // paths[i][l]: number of directed paths i -> l, saturated at 2
  std::vector<std::vector<int>> paths(static_cast<std::size_t>(J),
                                      std::vector<int>(static_cast<std::size_t>(J), 0));
  bool single_path = true;
  for (Index source = 0; source < J && single_path; ++source) {
    auto& count = paths[static_cast<std::size_t>(source)];
    count[static_cast<std::size_t>(source)] = 1;
    for (Index j : order) {
      const int through = count[static_cast<std::size_t>(j)];
      if (through == 0) continue;
      for (Index l = 0; l < J; ++l) {
        if (spec.routing(j, l) > Scalar(0)) {
          auto& c = count[static_cast<std::size_t>(l)];
          c = std::min(2, c + through);
        }
      }
    }
    for (Index l = 0; l < J; ++l)
      if (l != source && count[static_cast<std::size_t>(l)] > 1) single_path = false;
  }
  topology.overtake_free_moment_condition = single_path;
  return topology;
}

/// P(S_j <= t) = 1 - exp(-(mu_j - theta_j) t) for a node of an acyclic network.
template <typename Scalar>
Scalar node_sojourn_cdf_acyclic(const Network<Scalar>& spec, const Traffic<Scalar>& traffic,
                                Index j, Scalar t) {
  using std::exp;
  detail::require_index(spec, j);
  if (!classify_topology(spec).acyclic) throw Error(ErrorCode::NotAcyclic, "network has feedback");
  detail::require_stable(traffic);
  if (!(t > Scalar(0))) return Scalar(0);
  return Scalar(1) - exp(-(spec.service_rates(j) - traffic.theta(j)) * t);
}

/// Distribution of the path sojourn time if per-node sojourns were independent
/// exponentials with rates mu_j - theta_j (hypoexponential / Erlang).
template <typename Scalar>
Scalar path_sojourn_cdf_independent(const Network<Scalar>& spec, const Traffic<Scalar>& traffic,
                                    std::span<const Index> path, Scalar t) {
  if (path.empty()) throw Error(ErrorCode::InvalidArgument, "empty path");
  for (std::size_t i = 0; i < path.size(); ++i) {
    detail::require_index(spec, path[i]);
    for (std::size_t k = 0; k < i; ++k)
      if (path[k] == path[i]) throw Error(ErrorCode::RepeatedNode, "path visits a node twice");
  }
  if (!classify_topology(spec).acyclic) throw Error(ErrorCode::NotAcyclic, "network has feedback");
  detail::require_stable(traffic);

  std::vector<Scalar> rates;
  rates.reserve(path.size());
  for (Index j : path) rates.push_back(spec.service_rates(j) - traffic.theta(j));
  return detail::hypoexponential_cdf(rates, t);
}

}  // namespace jackson

#endif  // JACKSON_NETWORK_HPP
