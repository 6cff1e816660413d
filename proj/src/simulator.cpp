#include "jackson/simulator.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <limits>
#include <numeric>
#include <random>
#include <string>

#include "jackson/error.hpp"

namespace jackson {

namespace {

constexpr double kNever = std::numeric_limits<double>::infinity();

enum StreamKind : std::uint32_t { kArrivals = 0, kServices = 1, kRouting = 2 };

std::mt19937_64 make_stream(std::uint64_t seed, Index node, StreamKind kind) {
  std::seed_seq sequence{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32),
                         static_cast<std::uint32_t>(node), static_cast<std::uint32_t>(kind)};
  return std::mt19937_64(sequence);
}

struct Customer {
  double node_arrival = 0.0;
  double service = 0.0;
  std::ptrdiff_t record = -1;  // index into the tagged records, -1 if untagged
};

struct Snapshot {
  double time = 0.0;
  double population_integral = 0.0;
  std::vector<std::size_t> departures;
};

double mean_of(std::span<const double> values) {
  return std::accumulate(values.begin(), values.end(), 0.0) / static_cast<double>(values.size());
}

}  // namespace

std::optional<double> SojournSample::sojourn_at(Index node) const {
  for (std::size_t i = 0; i < path.size(); ++i)
    if (path[i] == node) return node_sojourns[i];
  return std::nullopt;
}

double batch_means_se(std::span<const double> values, std::size_t batches) {
  const std::size_t n = values.size();
  batches = std::min(batches, n);
  if (batches < 2) return 0.0;
  const std::size_t size = n / batches;
  std::vector<double> means;
  means.reserve(batches);
  for (std::size_t b = 0; b < batches; ++b) {
    const std::size_t begin = b * size;
    const std::size_t end = b + 1 == batches ? n : begin + size;
    means.push_back(mean_of(values.subspan(begin, end - begin)));
  }
  const double grand = mean_of(means);
  double spread = 0.0;
  for (double m : means) spread += (m - grand) * (m - grand);
  return std::sqrt(spread / static_cast<double>(batches - 1) / static_cast<double>(batches));
}

SimResult simulate(const NetworkSpec& spec, const SimConfig& config) {
  const Index J = spec.nodes();
  const auto uJ = static_cast<std::size_t>(J);
  if (config.tagged_customers < 1) {
    throw Error(ErrorCode::InvalidArgument, "at least one tagged customer is required");
  }
  detail::require_index(spec, config.probe_entry);

  SimResult result;
  auto& stats = result.statistics;
  stats.exogenous_rate = spec.arrival_rates.sum();

  double warmup = 0.0;
  try {
    const auto traffic = solve_traffic_equations(spec);
    stats.stable = traffic.stable;
    double slowest = 0.0;
    for (Index j = 0; j < J; ++j) {
      const double drain = spec.service_rates(j) - traffic.theta(j);
      slowest = std::max(slowest, drain > 0.0 ? 1.0 / drain : 1.0 / spec.service_rates(j));
    }
    warmup = 10.0 * static_cast<double>(J) * slowest;
  } catch (const Error&) {
    stats.stable = false;
    warmup = 10.0 * static_cast<double>(J) / spec.service_rates.minCoeff();
  }
  if (config.warmup_time) warmup = *config.warmup_time;
  const bool probing = !(stats.exogenous_rate > 0.0);
  if (probing) warmup = 0.0;

  std::vector<std::mt19937_64> arrival_rng, service_rng, routing_rng;
  for (Index j = 0; j < J; ++j) {
    arrival_rng.push_back(make_stream(config.seed, j, kArrivals));
    service_rng.push_back(make_stream(config.seed, j, kServices));
    routing_rng.push_back(make_stream(config.seed, j, kRouting));
  }
  std::uniform_real_distribution<double> uniform(0.0, 1.0);
  auto exponential = [](std::mt19937_64& rng, double rate) {
    return std::exponential_distribution<double>(rate)(rng);
  };

  std::vector<double> next_arrival(uJ, kNever);
  std::vector<double> next_completion(uJ, kNever);
  for (Index j = 0; j < J; ++j) {
    const double v = spec.arrival_rates(j);
    if (v > 0.0) next_arrival[static_cast<std::size_t>(j)] = exponential(arrival_rng[static_cast<std::size_t>(j)], v);
  }

  std::vector<Customer> pool;
  std::vector<std::size_t> free_slots;
  std::vector<std::deque<std::size_t>> queues(uJ);
  std::vector<SojournSample> records;
  records.reserve(config.tagged_customers);

  double now = 0.0;
  double population_integral = 0.0;
  std::size_t population = 0;
  std::size_t exogenous_seen = 0;
  std::size_t tagged_in_system = 0;
  std::vector<std::size_t> departures(uJ, 0);

  const std::size_t quota = config.tagged_customers;
  const std::size_t batches = std::max<std::size_t>(1, std::min(config.batches, quota > 1 ? quota - 1 : 1));
  std::vector<Snapshot> snapshots;
  std::size_t next_snapshot = 0;
  auto snapshot_tag = [&](std::size_t b) { return b * (quota - 1) / batches; };

  auto start_service = [&](Index j) {
    const auto uj = static_cast<std::size_t>(j);
    Customer& head = pool[queues[uj].front()];
    head.service = exponential(service_rng[uj], spec.service_rates(j));
    next_completion[uj] = now + head.service;
  };

  auto join = [&](Index j, std::size_t id) {
    const auto uj = static_cast<std::size_t>(j);
    Customer& c = pool[id];
    c.node_arrival = now;
    if (c.record >= 0) {
      auto& record = records[static_cast<std::size_t>(c.record)];
      if (record.path.empty()) record.seen_on_arrival = static_cast<int>(queues[uj].size());
      record.path.push_back(j);
    }
    queues[uj].push_back(id);
    if (queues[uj].size() == 1) start_service(j);
  };

  auto admit = [&](Index j, bool tag) {
    std::size_t id;
    if (free_slots.empty()) {
      id = pool.size();
      pool.emplace_back();
    } else {
      id = free_slots.back();
      free_slots.pop_back();
    }
    pool[id] = Customer{};
    ++population;
    if (tag) {
      const std::size_t index = records.size();
      while (next_snapshot <= batches && snapshot_tag(next_snapshot) == index) {
        snapshots.push_back({now, population_integral, departures});
        ++next_snapshot;
      }
      records.emplace_back();
      records.back().tag = index;
      records.back().arrival_time = now;
      pool[id].record = static_cast<std::ptrdiff_t>(index);
      ++tagged_in_system;
    }
    join(j, id);
  };

  std::size_t events = 0;
  while (records.size() < quota || tagged_in_system > 0) {
    if (probing && population == 0 && records.size() < quota) {
      admit(config.probe_entry, true);
      continue;
    }

    double when = kNever;
    Index node = -1;
    bool is_arrival = false;
    for (std::size_t j = 0; j < uJ; ++j) {
      if (next_arrival[j] < when) {
        when = next_arrival[j];
        node = static_cast<Index>(j);
        is_arrival = true;
      }
      if (next_completion[j] < when) {
        when = next_completion[j];
        node = static_cast<Index>(j);
        is_arrival = false;
      }
    }
    if (node < 0) throw Error(ErrorCode::InvalidArgument, "no events can occur");
    if (++events > config.max_events) {
      throw Error(ErrorCode::MaxEventsExceeded,
                  "simulation stopped after " + std::to_string(config.max_events) + " events");
    }

    population_integral += static_cast<double>(population) * (when - now);
    now = when;
    const auto un = static_cast<std::size_t>(node);

    if (is_arrival) {
      ++exogenous_seen;
      const bool tag = records.size() < quota && now >= warmup &&
                       exogenous_seen > config.warmup_customers;
      admit(node, tag);
      next_arrival[un] = now + exponential(arrival_rng[un], spec.arrival_rates(node));
      continue;
    }

    const std::size_t id = queues[un].front();
    queues[un].pop_front();
    ++departures[un];
    Customer& c = pool[id];
    SojournSample* record = c.record >= 0 ? &records[static_cast<std::size_t>(c.record)] : nullptr;
    if (record) {
      record->node_sojourns.push_back(now - c.node_arrival);
      record->service_times.push_back(c.service);
    }

    next_completion[un] = kNever;
    const double u = uniform(routing_rng[un]);
    double cumulative = 0.0;
    Index next = -1;
    for (Index l = 0; l < J; ++l) {
      cumulative += spec.routing(node, l);
      if (u < cumulative) {
        next = l;
        break;
      }
    }
    if (next >= 0) {
      join(next, id);
    } else {
      if (record) {
        record->total = now - record->arrival_time;
        --tagged_in_system;
      }
      --population;
      free_slots.push_back(id);
    }

    // join() already started service if the customer fed straight back into an empty queue
    if (!queues[un].empty() && next_completion[un] == kNever) start_service(node);
  }
  stats.events = events;
  stats.tagged = records.size();

  // Time-averaged statistics over the tagging period, batched by tag count.
  if (snapshots.size() >= 2) {
    stats.window = snapshots.back().time - snapshots.front().time;
    std::vector<double> population_means;
    std::vector<std::vector<double>> rates(uJ);
    for (std::size_t b = 1; b < snapshots.size(); ++b) {
      const double span = snapshots[b].time - snapshots[b - 1].time;
      if (!(span > 0.0)) continue;
      population_means.push_back(
          (snapshots[b].population_integral - snapshots[b - 1].population_integral) / span);
      for (std::size_t j = 0; j < uJ; ++j) {
        rates[j].push_back(static_cast<double>(snapshots[b].departures[j] -
                                               snapshots[b - 1].departures[j]) /
                           span);
      }
    }
    if (stats.window > 0.0) {
      stats.mean_population =
          (snapshots.back().population_integral - snapshots.front().population_integral) /
          stats.window;
    }
    stats.mean_population_se = batch_means_se(population_means, population_means.size());
    stats.throughput.resize(J);
    stats.throughput_se.resize(J);
    for (std::size_t j = 0; j < uJ; ++j) {
      const auto total = snapshots.back().departures[j] - snapshots.front().departures[j];
      stats.throughput(static_cast<Index>(j)) =
          stats.window > 0.0 ? static_cast<double>(total) / stats.window : 0.0;
      stats.throughput_se(static_cast<Index>(j)) = batch_means_se(rates[j], rates[j].size());
    }
  } else {
    stats.throughput = Eigen::VectorXd::Zero(J);
    stats.throughput_se = Eigen::VectorXd::Zero(J);
  }

  std::vector<double> totals;
  totals.reserve(records.size());
  for (const auto& r : records) totals.push_back(r.total);
  stats.mean_sojourn_all = mean_of(totals);
  stats.mean_sojourn_all_se = batch_means_se(totals, config.batches);

  for (auto& record : records) {
    if (config.entry_filter && record.entry() != *config.entry_filter) continue;
    if (!config.path_filter.empty() && record.path != config.path_filter) continue;
    result.samples.push_back(std::move(record));
  }
  return result;
}

MomentEstimate empirical_moments(std::span<const SojournSample> samples, int r,
                                 std::size_t batches) {
  if (samples.size() < 2) throw Error(ErrorCode::TooFewSamples, "need at least two samples");
  if (r < 1) throw Error(ErrorCode::InvalidArgument, "moment order must be >= 1");
  const std::size_t n = samples.size();
  std::vector<double> values;
  values.reserve(n);
  for (const auto& s : samples) values.push_back(std::pow(s.total, r));

  MomentEstimate estimate;
  estimate.count = n;
  estimate.mean = mean_of(values);
  estimate.mean_se = batch_means_se(values, batches);

  const double correction = static_cast<double>(n) / static_cast<double>(n - 1);
  std::vector<double> squared;
  squared.reserve(n);
  for (double x : values) squared.push_back((x - estimate.mean) * (x - estimate.mean) * correction);
  estimate.variance = mean_of(squared);
  estimate.variance_se = batch_means_se(squared, batches);
  return estimate;
}

EmpiricalCdf empirical_cdf(std::span<const SojournSample> samples, const std::vector<double>& grid) {
  if (samples.empty()) throw Error(ErrorCode::TooFewSamples, "need at least one sample");
  std::vector<double> totals;
  totals.reserve(samples.size());
  for (const auto& s : samples) totals.push_back(s.total);
  std::sort(totals.begin(), totals.end());

  EmpiricalCdf cdf;
  cdf.grid = grid;
  const double n = static_cast<double>(totals.size());
  for (double t : grid) {
    const auto below = std::upper_bound(totals.begin(), totals.end(), t) - totals.begin();
    cdf.values.push_back(static_cast<double>(below) / n);
  }
  cdf.dkw_half_width = std::sqrt(std::log(2.0 / 0.01) / (2.0 * n));
  return cdf;
}

CorrelationEstimate correlation(std::span<const SojournSample> samples, Index node_a,
                                Index node_b) {
  std::vector<double> xs, ys;
  for (const auto& s : samples) {
    const auto a = s.sojourn_at(node_a);
    const auto b = s.sojourn_at(node_b);
    if (a && b) {
      xs.push_back(*a);
      ys.push_back(*b);
    }
  }
  if (xs.size() < 4) throw Error(ErrorCode::TooFewSamples, "need four samples visiting both nodes");

  const double mx = mean_of(xs);
  const double my = mean_of(ys);
  double sxy = 0.0, sxx = 0.0, syy = 0.0;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    sxy += (xs[i] - mx) * (ys[i] - my);
    sxx += (xs[i] - mx) * (xs[i] - mx);
    syy += (ys[i] - my) * (ys[i] - my);
  }
  CorrelationEstimate estimate;
  estimate.count = xs.size();
  estimate.r = sxx > 0.0 && syy > 0.0 ? sxy / std::sqrt(sxx * syy) : 0.0;
  const double z = std::atanh(std::clamp(estimate.r, -0.999999999999, 0.999999999999));
  const double half = 1.959963984540054 / std::sqrt(static_cast<double>(xs.size()) - 3.0);
  estimate.lower = std::tanh(z - half);
  estimate.upper = std::tanh(z + half);
  return estimate;
}

}  // namespace jackson
