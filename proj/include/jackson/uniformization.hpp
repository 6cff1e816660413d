#ifndef JACKSON_UNIFORMIZATION_HPP
#define JACKSON_UNIFORMIZATION_HPP

#include <cstddef>
#include <optional>
#include <vector>

#include <Eigen/Core>
#include <Eigen/SparseCore>

#include "jackson/network.hpp"

namespace jackson {

using SparseRowMatrix = Eigen::SparseMatrix<double, Eigen::RowMajor>;

/// How the marked customer is routed: per P, or along a prescribed node list.
/// Background customers are always routed per P.
struct PathMode {
  std::vector<Index> path;  // empty = random routing

  static PathMode random() { return {}; }
  static PathMode fixed(std::vector<Index> nodes) { return {std::move(nodes)}; }
  bool is_fixed() const { return !path.empty(); }
};

/// One state of the network seen from a marked customer.
///
/// `counts` excludes the marked customer. At the marked customer's node,
/// counts[node] = ahead + behind. `stage` is the position along the fixed path
/// (equal to `node` under random routing).
struct MarkedState {
  bool absorbed = false;
  Index stage = 0;
  Index node = 0;
  int ahead = 0;
  std::vector<int> counts;

  bool operator==(const MarkedState&) const = default;
};

/// Enumeration of the truncated state space, counts[j] <= cap for every j.
/// Id 0 is the absorbing aggregate; the rest follow lexicographic order of
/// (stage, ahead, counts) and are encoded in mixed radix, so no table is stored.
class MarkedStateSpace {
 public:
  MarkedStateSpace(Index nodes, Index entry, PathMode mode, int cap);

  std::size_t size() const { return size_; }
  Index nodes() const { return nodes_; }
  Index stages() const { return stages_; }
  Index entry() const { return entry_; }
  int cap() const { return cap_; }
  const PathMode& path_mode() const { return mode_; }
  Index stage_node(Index stage) const;

  MarkedState state(std::size_t id) const;
  std::size_t id(const MarkedState& state) const;

  /// Number of states (absorbing aggregate included) for the given dimensions.
  static double count(Index nodes, Index stages, int cap);

 private:
  std::size_t ahead_offset(int ahead) const;

  Index nodes_;
  Index stages_;
  Index entry_;
  PathMode mode_;
  int cap_;
  std::size_t others_;      // (cap + 1)^(nodes - 1)
  std::size_t stage_block_;
  std::size_t size_;
};

struct Generator {
  SparseRowMatrix Q;  // over state ids; row 0 (absorbing) is empty
  double alpha = 0.0;
};

/// R = I + Q/alpha. `loss(x)` is the per-jump probability of leaving the
/// truncated box from x; stored rows of R sum to 1 - loss(x).
struct RandomizedChain {
  double alpha = 0.0;
  SparseRowMatrix R;
  Eigen::VectorXd loss;
};

struct InitialDistribution {
  Eigen::VectorXd psi;  // over state ids, entry 0 = already absorbed
  double deficit = 0.0;
};

/// h(n): probability that the uniformized chain enters B at jump n.
struct ErlangMixture {
  double alpha = 0.0;
  std::vector<double> h;
  double epsilon = 0.0;
  double initial_deficit = 0.0;  // product-form mass outside the box
  double clipped = 0.0;          // mass lost leaving the box during the jumps
  double unresolved = 0.0;       // mass still in A after the last jump

  std::size_t jumps() const { return h.empty() ? 0 : h.size() - 1; }
  double total() const;
  /// 1 - sum h(n): everything not yet accounted to absorption.
  double deficit() const;
  /// The same mixture cut after jump k (k >= jumps() returns a copy).
  ErlangMixture prefix(std::size_t k) const;
};

/// Per-jump bookkeeping of the power iteration, both absorption formulae kept.
struct JumpTrace {
  std::vector<double> h_flow;     // sum_{x in A} phi_{n-1}(x) R(x, B)
  std::vector<double> h_mass;     // A-mass difference minus box loss
  std::vector<double> remaining;  // sum_{x in A} phi_n(x)
  std::vector<double> lost;       // mass leaving the box at jump n
};

struct CdfBounds {
  std::vector<double> grid;
  std::vector<double> lower;
  std::vector<double> upper;
  double epsilon = 0.0;
};

struct SojournOptions {
  Index entry = 0;
  PathMode path = PathMode::random();
  double epsilon = 1e-6;
  std::optional<int> cap;  // default from default_cap()
  std::vector<double> grid;
  int max_moment = 4;
  std::size_t max_jumps = 1'000'000;
  double max_states = 2e7;
};

struct SojournAnalysis {
  CdfBounds bounds;
  ErlangMixture mixture;
  std::vector<double> moment_lower_bounds;  // index m-1 holds the m-th moment bound
  int cap = 0;
  std::size_t states = 0;
};

MarkedStateSpace build_state_space(const NetworkSpec& spec, const TrafficSolution& traffic,
                                   Index entry, const PathMode& mode, int cap,
                                   double max_states = 2e7);

Generator build_generator(const MarkedStateSpace& space, const NetworkSpec& spec);

RandomizedChain randomize(const SparseRowMatrix& Q, double alpha);

InitialDistribution initial_distribution(const MarkedStateSpace& space,
                                         const TrafficSolution& traffic);

/// Runs up to `jumps` steps of phi_n = phi_{n-1} R restricted to A, stopping
/// early once the A-mass is <= epsilon (epsilon = 0 never stops early).
JumpTrace trace_jumps(const RandomizedChain& chain, const InitialDistribution& initial,
                      std::size_t jumps, double epsilon);

ErlangMixture compute_h(const RandomizedChain& chain, const InitialDistribution& initial,
                        double epsilon, std::size_t max_jumps = 1'000'000);

CdfBounds cdf_bounds(const ErlangMixture& mixture, const std::vector<double>& grid);

/// sum_n n h(n), the truncated mean number of jumps to absorption.
double expected_jumps(const ErlangMixture& mixture);

/// alpha^{-m} sum_{n <= k} n (n+1) ... (n+m-1) h(n).
double moment_lower_bound(const ErlangMixture& mixture, int m);

/// Smallest cap with rho_max^{C+1} / (1 - rho_max) < epsilon / (2J).
int default_cap(const TrafficSolution& traffic, double epsilon);

/// `points` equally spaced times on [0, 5 E[T]], E[T] from the flow equations
/// (or the path sum of 1/(mu_j - theta_j) under a fixed path).
std::vector<double> default_time_grid(const NetworkSpec& spec, const TrafficSolution& traffic,
                                      Index entry, const PathMode& mode, std::size_t points);

SojournAnalysis sojourn_analysis(const NetworkSpec& spec, const SojournOptions& options);

}  // namespace jackson

#endif  // JACKSON_UNIFORMIZATION_HPP
