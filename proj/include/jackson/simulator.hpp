#ifndef JACKSON_SIMULATOR_HPP
#define JACKSON_SIMULATOR_HPP

#include <cstddef>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include <Eigen/Core>

#include "jackson/network.hpp"

namespace jackson {

struct SimConfig {
  std::uint64_t seed = 1;
  std::size_t warmup_customers = 0;
  std::optional<double> warmup_time;  // default: 10 J max_j 1/(mu_j - theta_j)
  std::size_t tagged_customers = 10'000;
  std::optional<Index> entry_filter;  // keep samples that entered here
  std::vector<Index> path_filter;     // keep samples with exactly this path
  std::size_t max_events = 4'000'000'000;
  std::size_t batches = 100;
  // Without exogenous traffic, isolated probe customers are injected here one
  // at a time into the empty network.
  Index probe_entry = 0;
};

/// One tagged customer. Visits are listed in order; a node visited twice
/// appears twice in `path`.
struct SojournSample {
  std::size_t tag = 0;  // arrival order among tagged customers
  double arrival_time = 0.0;
  int seen_on_arrival = 0;  // customers at the entry node found by the arrival
  std::vector<Index> path;
  std::vector<double> node_sojourns;
  std::vector<double> service_times;
  double total = 0.0;

  Index entry() const { return path.front(); }
  /// Sojourn of the first visit to `node`, if any.
  std::optional<double> sojourn_at(Index node) const;
};

struct SimStatistics {
  double window = 0.0;  // tagging period (simulated time)
  double mean_population = 0.0;
  double mean_population_se = 0.0;
  Eigen::VectorXd throughput;  // departures per unit time at each node
  Eigen::VectorXd throughput_se;
  double mean_sojourn_all = 0.0;  // over every tagged customer, before filtering
  double mean_sojourn_all_se = 0.0;
  double exogenous_rate = 0.0;
  std::size_t tagged = 0;
  std::size_t events = 0;
  bool stable = true;
};

struct SimResult {
  std::vector<SojournSample> samples;
  SimStatistics statistics;
};

struct MomentEstimate {
  double mean = 0.0;
  double mean_se = 0.0;
  double variance = 0.0;
  double variance_se = 0.0;
  std::size_t count = 0;
};

struct EmpiricalCdf {
  std::vector<double> grid;
  std::vector<double> values;
  double dkw_half_width = 0.0;  // 99% band
};

struct CorrelationEstimate {
  double r = 0.0;
  double lower = 0.0;  // 95% Fisher-z interval
  double upper = 0.0;
  std::size_t count = 0;
};

SimResult simulate(const NetworkSpec& spec, const SimConfig& config);

/// Mean and variance of S^r over the samples, with batch-means standard errors.
MomentEstimate empirical_moments(std::span<const SojournSample> samples, int r,
                                 std::size_t batches = 100);

EmpiricalCdf empirical_cdf(std::span<const SojournSample> samples, const std::vector<double>& grid);

CorrelationEstimate correlation(std::span<const SojournSample> samples, Index node_a, Index node_b);

/// Standard error of the mean of `values` from `batches` contiguous batches.
double batch_means_se(std::span<const double> values, std::size_t batches);

}  // namespace jackson

#endif  // JACKSON_SIMULATOR_HPP
