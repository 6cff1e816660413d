#ifndef JACKSON_ERLANG_HPP
#define JACKSON_ERLANG_HPP

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <vector>

#include <Eigen/Core>

namespace jackson {

/// Poisson(x) probabilities p(0..last).
///
/// The weights are generated from the mode outwards with the ratio recurrence
/// p(i+1) = p(i) x/(i+1), so large x neither underflows exp(-x) nor loses
/// precision in the tails. Entries that underflow are exactly zero.
template <typename Scalar>
std::vector<Scalar> poisson_weights(Scalar x, std::size_t last) {
  using std::exp;
  using std::floor;
  using std::lgamma;
  using std::log;
  using std::sqrt;

  std::vector<Scalar> p(last + 1, Scalar(0));
  if (x <= Scalar(0)) {
    p[0] = Scalar(1);
    return p;
  }
  auto mode = static_cast<std::size_t>(floor(x));
  mode = std::min(mode, last);
  const Scalar m = static_cast<Scalar>(mode);
  p[mode] = exp(-x + m * log(x) - lgamma(m + Scalar(1)));
  for (std::size_t i = mode; i < last; ++i) {
    p[i + 1] = p[i] * x / static_cast<Scalar>(i + 1);
  }
  for (std::size_t i = mode; i > 0; --i) {
    p[i - 1] = p[i] * static_cast<Scalar>(i) / x;
  }
  // lgamma at large x is good to ~1e-10 relative; rescale when the window
  // holds (almost) all of the mass.
  if (static_cast<Scalar>(last) >= x + Scalar(10) * sqrt(x) + Scalar(20)) {
    Scalar total = Scalar(0);
    for (const Scalar& w : p) total += w;
    for (Scalar& w : p) w /= total;
  }
  return p;
}

/// Erlang distribution functions E_{n,alpha}(t) for n = 0..max_order.
///
/// E_{n,alpha}(t) = P(Poisson(alpha t) >= n); E_0 is identically 1. Each value
/// is taken from whichever of the head sum or the tail sum is the smaller
/// quantity, so neither side suffers cancellation.
template <typename Scalar>
std::vector<Scalar> erlang_cdf_table(std::size_t max_order, Scalar alpha, Scalar t) {
  using std::ceil;
  using std::sqrt;

  std::vector<Scalar> cdf(max_order + 1, Scalar(0));
  cdf[0] = Scalar(1);
  const Scalar x = alpha * t;
  if (!(x > Scalar(0))) return cdf;

  const auto reach = static_cast<std::size_t>(ceil(x + Scalar(12) * sqrt(x) + Scalar(50)));
  const std::size_t last = std::max(max_order, reach);
  const auto p = poisson_weights(x, last);

  std::vector<Scalar> tail(last + 2, Scalar(0));
  for (std::size_t i = last + 1; i > 0; --i) tail[i - 1] = tail[i] + p[i - 1];

  Scalar head = Scalar(0);
  for (std::size_t n = 1; n <= max_order; ++n) {
    head += p[n - 1];
    Scalar value = head < Scalar(0.5) ? Scalar(1) - head : tail[n];
    cdf[n] = std::clamp(value, Scalar(0), Scalar(1));
  }
  return cdf;
}

/// E_{n,alpha}(t): distribution function of the sum of n exponentials with rate alpha.
template <typename Scalar>
Scalar erlang_cdf(std::size_t n, Scalar alpha, Scalar t) {
  if (n == 0) return Scalar(1);
  if (!(t > Scalar(0))) return Scalar(0);
  return erlang_cdf_table(n, alpha, t)[n];
}

}  // namespace jackson

#endif  // JACKSON_ERLANG_HPP
