#ifndef JACKSON_MOMENTS_HPP
#define JACKSON_MOMENTS_HPP

#include <cmath>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "jackson/error.hpp"
#include "jackson/network.hpp"

namespace jackson {

enum class MomentMethod { MatrixFirstMoment, OvertakeFreeRecursion, ClosedForm };

/// E[T_j^order] for every node j, where T_j is the remaining network sojourn
/// of a customer arriving (from outside or from another node) at j.
template <typename Scalar>
struct MomentReport {
  int order = 1;
  typename Network<Scalar>::Vector values;
  MomentMethod method = MomentMethod::MatrixFirstMoment;
};

namespace detail {

template <typename Scalar>
void require_overtake_free(const Network<Scalar>& spec) {
  if (!classify_topology(spec).overtake_free_moment_condition) {
    throw Error(ErrorCode::NotOvertakeFree,
                "exact higher moments need an acyclic network with at most one path per node pair");
  }
}

/// Column r-1 holds E[T_j^r], r = 1..max_order.
///
/// Under the single-path condition T_l is independent of the queue N_j seen by
/// the customer moving j -> l, and N_j is geometric(rho_j), so
///   mu_j^{-n} E[prod_{m=1..n} (N_j + m)] = n! / (mu_j - theta_j)^n,
/// which turns the flow equations into
///   E[T_j^r] = r!/d_j^r + sum_l p_jl ( E[T_l^r] + sum_{n=1}^{r-1} C(r,n) n!/d_j^n E[T_l^{r-n}] ),
/// d_j = mu_j - theta_j, evaluated in reverse topological order.
template <typename Scalar>
typename Network<Scalar>::Matrix overtake_free_moment_table(const Network<Scalar>& spec,
                                                            const Traffic<Scalar>& traffic,
                                                            int max_order) {
  require_stable(traffic);
  require_overtake_free(spec);
  if (max_order < 1) throw Error(ErrorCode::InvalidArgument, "moment order must be >= 1");

  const Index J = spec.nodes();
  typename Network<Scalar>::Matrix table = Network<Scalar>::Matrix::Zero(J, max_order);
  const auto order = topological_order(spec);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Index j = *it;
    const Scalar rate = spec.service_rates(j) - traffic.theta(j);
    for (int r = 1; r <= max_order; ++r) {
      // own = r!/rate^r; coefficient runs through C(r,n) n!/rate^n
      Scalar own = Scalar(1);
      for (int m = 1; m <= r; ++m) own *= Scalar(m) / rate;
      Scalar value = own;
      for (Index l = 0; l < J; ++l) {
        const Scalar p = spec.routing(j, l);
        if (!(p > Scalar(0))) continue;
        Scalar carried = table(l, r - 1);
        Scalar coefficient = Scalar(1);
        for (int n = 1; n < r; ++n) {
          coefficient *= Scalar(r - n + 1) / rate;
          carried += coefficient * table(l, r - n - 1);
        }
        value += p * carried;
      }
      table(j, r - 1) = value;
    }
  }
  return table;
}

template <typename Scalar>
bool is_tandem(const Network<Scalar>& spec) {
  const Index J = spec.nodes();
  if (!(spec.arrival_rates(0) > Scalar(0))) return false;
  for (Index j = 1; j < J; ++j)
    if (spec.arrival_rates(j) != Scalar(0)) return false;
  for (Index j = 0; j < J; ++j)
    for (Index l = 0; l < J; ++l)
      if (spec.routing(j, l) != (l == j + 1 ? Scalar(1) : Scalar(0))) return false;
  return true;
}

template <typename Scalar>
void require_feedback_parameters(Scalar v, Scalar mu, Scalar p) {
  if (!(p >= Scalar(0) && p < Scalar(1))) {
    throw Error(ErrorCode::InvalidProbability, "feedback probability must lie in [0, 1)");
  }
  if (!(v >= Scalar(0) && mu > Scalar(0))) throw Error(ErrorCode::NegativeRate, "rates");
  if (!((Scalar(1) - p) * mu - v > kStabilityMargin<Scalar> * mu)) {
    throw Error(ErrorCode::UnstableNetwork, "(1 - p) mu must exceed v");
  }
}

}  // namespace detail

/// E[T] = (I - P)^{-1} [1/(mu_j - theta_j)]; valid for any stable network.
template <typename Scalar>
MomentReport<Scalar> first_moments(const Network<Scalar>& spec, const Traffic<Scalar>& traffic) {
  using Matrix = typename Network<Scalar>::Matrix;
  using Vector = typename Network<Scalar>::Vector;
  detail::require_stable(traffic);
  const Index J = spec.nodes();
  const Vector per_visit = (spec.service_rates - traffic.theta).cwiseInverse();
  const Matrix system = Matrix::Identity(J, J) - spec.routing;
  return {1, system.partialPivLu().solve(per_visit), MomentMethod::MatrixFirstMoment};
}

/// Mean number found at node j by an arriving customer, theta_j / (mu_j - theta_j).
template <typename Scalar>
Scalar mean_queue_length(const Network<Scalar>& spec, const Traffic<Scalar>& traffic, Index j) {
  detail::require_index(spec, j);
  detail::require_stable(traffic);
  return traffic.theta(j) / (spec.service_rates(j) - traffic.theta(j));
}

/// E[T_j^2] = 2/d_j^2 + sum_l p_jl E[T_l^2] + (2/d_j) sum_l p_jl E[T_l], d_j = mu_j - theta_j.
template <typename Scalar>
MomentReport<Scalar> second_moments_overtake_free(const Network<Scalar>& spec,
                                                  const Traffic<Scalar>& traffic,
                                                  const MomentReport<Scalar>& first) {
  detail::require_stable(traffic);
  detail::require_overtake_free(spec);
  if (first.order != 1 || first.values.size() != spec.nodes()) {
    throw Error(ErrorCode::InvalidArgument, "expected first moments for every node");
  }
  const Index J = spec.nodes();
  typename Network<Scalar>::Vector second = Network<Scalar>::Vector::Zero(J);
  const auto order = topological_order(spec);
  for (auto it = order.rbegin(); it != order.rend(); ++it) {
    const Index j = *it;
    const Scalar rate = spec.service_rates(j) - traffic.theta(j);
    Scalar value = Scalar(2) / (rate * rate);
    for (Index l = 0; l < J; ++l) {
      const Scalar p = spec.routing(j, l);
      if (p > Scalar(0)) value += p * (second(l) + Scalar(2) / rate * first.values(l));
    }
    second(j) = value;
  }
  return {2, second, MomentMethod::OvertakeFreeRecursion};
}

template <typename Scalar>
MomentReport<Scalar> higher_moments_overtake_free(const Network<Scalar>& spec,
                                                  const Traffic<Scalar>& traffic, int order) {
  const auto table = detail::overtake_free_moment_table(spec, traffic, order);
  return {order, table.col(order - 1), MomentMethod::OvertakeFreeRecursion};
}

/// VAR[T_j] = sum_{l >= j} (mu_l - v)^{-2} for a series of M/M/1 queues.
template <typename Scalar>
Scalar tandem_variance(const Network<Scalar>& spec, const Traffic<Scalar>& traffic, Index j) {
  detail::require_index(spec, j);
  if (!detail::is_tandem(spec)) throw Error(ErrorCode::NotTandem, "routing is not a simple series");
  detail::require_stable(traffic);
  const Scalar v = spec.arrival_rates(0);
  Scalar variance = Scalar(0);
  for (Index l = j; l < spec.nodes(); ++l) {
    const Scalar rate = spec.service_rates(l) - v;
    variance += Scalar(1) / (rate * rate);
  }
  return variance;
}

/// Sojourn variance of an M/M/1 queue with Bernoulli feedback (probability p).
template <typename Scalar>
Scalar feedback_variance(Scalar v, Scalar mu, Scalar p) {
  detail::require_feedback_parameters(v, mu, p);
  const Scalar base = (Scalar(1) - p) * mu - v;
  const Scalar spread = (Scalar(1) - p * p) * mu;
  return (spread + v * p) / (base * base * (spread - v * p));
}

/// COV[N(tau-), T] for the feedback queue, in the closed form as published
/// (dimensionally a rate, not count x time; use for sign and trend only).
template <typename Scalar>
Scalar feedback_covariance(Scalar v, Scalar mu, Scalar p) {
  detail::require_feedback_parameters(v, mu, p);
  return v * (Scalar(1) - p) * mu / ((Scalar(1) - p * p) * mu - v * p);
}

/// Raw moments E[S^r], r = 1..max_order, of the path sojourn when per-node
/// sojourns are independent exponentials with rates mu_j - theta_j (exact on
/// overtake-free paths). Element r-1 holds the r-th moment.
template <typename Scalar>
std::vector<Scalar> independent_path_moments(const Network<Scalar>& spec,
                                             const Traffic<Scalar>& traffic,
                                             std::span<const Index> path, int max_order) {
  detail::require_stable(traffic);
  if (max_order < 1) throw Error(ErrorCode::InvalidArgument, "moment order must be >= 1");
  std::vector<Scalar> moments(static_cast<std::size_t>(max_order) + 1, Scalar(0));
  moments[0] = Scalar(1);
  for (Index j : path) {
    detail::require_index(spec, j);
    const Scalar rate = spec.service_rates(j) - traffic.theta(j);
    std::vector<Scalar> next(moments.size(), Scalar(0));
    for (int r = 0; r <= max_order; ++r) {
      Scalar coefficient = Scalar(1);  // C(r,n) n! / rate^n
      Scalar value = moments[static_cast<std::size_t>(r)];
      for (int n = 1; n <= r; ++n) {
        coefficient *= Scalar(r - n + 1) / rate;
        value += coefficient * moments[static_cast<std::size_t>(r - n)];
      }
      next[static_cast<std::size_t>(r)] = value;
    }
    moments = std::move(next);
  }
  moments.erase(moments.begin());
  return moments;
}

enum class CorrelationVerdict { ConditionsHold, ConditionsFail };

template <typename Scalar>
struct CorrelationCheck {
  CorrelationVerdict verdict = CorrelationVerdict::ConditionsFail;
  Scalar rate_condition = Scalar(0);  // left side of the rate inequality, must be < 1
  Scalar radicand = Scalar(0);        // under the square root of the p-interval
  std::optional<Scalar> p_lower;      // empty when the radicand is negative
  std::optional<Scalar> p_upper;
};

/// Sufficient conditions for positive correlation of S_1 and S_3 in the
/// three-node network (1 -> 2 with p, 1 -> 3 with 1 - p, 2 -> 3).
///
/// Both inequalities are evaluated literally. With s = v + mu1 + mu2 + mu3 the
/// rate condition reads 2 s sqrt(a/s + b) < 1 and the p-interval is
///   mu2 c_-/(1 - v c_-) < p < mu2 c_+/(1 - v c_+),  c_pm = 1/(2s) pm sqrt(1/s^2 + 4a/s - 4b)/2,
/// with a = 1/(mu1 - v) + 1/(mu3 - v), b = 1/(mu1 - v)^2 + 1/(mu3 - v)^2.
template <typename Scalar>
CorrelationCheck<Scalar> three_node_positive_correlation(Scalar v, Scalar mu1, Scalar mu2,
                                                         Scalar mu3, Scalar p) {
  using std::sqrt;
  if (!(p >= Scalar(0) && p <= Scalar(1))) {
    throw Error(ErrorCode::InvalidProbability, "p must lie in [0, 1]");
  }
  if (!(mu1 > v && mu2 > p * v && mu3 > v)) {
    throw Error(ErrorCode::UnstableNetwork, "three-node network is unstable");
  }
  const Scalar s = v + mu1 + mu2 + mu3;
  const Scalar d1 = mu1 - v;
  const Scalar d3 = mu3 - v;
  const Scalar a = Scalar(1) / d1 + Scalar(1) / d3;
  const Scalar b = Scalar(1) / (d1 * d1) + Scalar(1) / (d3 * d3);

  CorrelationCheck<Scalar> check;
  check.rate_condition = Scalar(2) * s * sqrt(a / s + b);
  check.radicand = Scalar(1) / (s * s) + Scalar(4) / s * a - Scalar(4) * b;
  if (check.radicand >= Scalar(0)) {
    const Scalar root = sqrt(check.radicand) / Scalar(2);
    const Scalar c_minus = Scalar(1) / (Scalar(2) * s) - root;
    const Scalar c_plus = Scalar(1) / (Scalar(2) * s) + root;
    check.p_lower = mu2 * c_minus / (Scalar(1) - v * c_minus);
    check.p_upper = mu2 * c_plus / (Scalar(1) - v * c_plus);
  }
  const bool rates_ok = check.rate_condition < Scalar(1);
  const bool p_ok = check.p_lower && check.p_upper && *check.p_lower < p && p < *check.p_upper;
  check.verdict = rates_ok && p_ok ? CorrelationVerdict::ConditionsHold
                                   : CorrelationVerdict::ConditionsFail;
  return check;
}

}  // namespace jackson

#endif  // JACKSON_MOMENTS_HPP
