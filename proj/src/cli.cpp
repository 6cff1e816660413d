#include "jackson/cli.hpp"

#include <algorithm>
#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <optional>

#include "CLI11.hpp"
#include "json.hpp"

#include "jackson/moments.hpp"
#include "jackson/network.hpp"
#include "jackson/network_io.hpp"
#include "jackson/report.hpp"
#include "jackson/simulator.hpp"
#include "jackson/uniformization.hpp"

namespace jackson::cli {

namespace {

using nlohmann::json;
namespace fs = std::filesystem;

struct Options {
  std::string command;
  std::string network;
  int entry = 1;
  bool entry_given = false;
  std::vector<int> path;
  double epsilon = 1e-4;
  std::optional<int> cap;
  std::string grid;
  std::size_t tags = 100'000;
  std::uint64_t seed = 42;
  bool compare_independent = false;
  std::string out_dir = ".";
  bool out_dir_given = false;
};

std::string utc_now() {
  const auto now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm parts{};
  gmtime_r(&now, &parts);
  char buffer[32];
  std::strftime(buffer, sizeof(buffer), "%Y-%m-%dT%H:%M:%SZ", &parts);
  return buffer;
}

json manifest(const Options& options, const std::string& started) {
  json parameters = {
      {"entry", options.entry},
      {"path", options.path},
      {"epsilon", options.epsilon},
      {"cap", options.cap ? json(*options.cap) : json(nullptr)},
      {"grid", options.grid.empty() ? json(nullptr) : json(options.grid)},
      {"tags", options.tags},
      {"seed", options.seed},
      {"compare_independent", options.compare_independent},
  };
  return {
      {"tool", "jackson"},
      {"version", kToolVersion},
      {"command", options.command},
      {"network", options.network},
      {"parameters", parameters},
      {"started", started},
      {"finished", utc_now()},
  };
}

Index entry_index(const NetworkSpec& spec, const Options& options) {
  const Index entry = options.entry - 1;
  detail::require_index(spec, entry);
  return entry;
}

std::vector<Index> path_indices(const NetworkSpec& spec, const Options& options) {
  std::vector<Index> path;
  for (int node : options.path) {
    path.push_back(node - 1);
    detail::require_index(spec, path.back());
  }
  return path;
}

std::ofstream open_output(const fs::path& file) {
  std::error_code ignored;
  fs::create_directories(file.parent_path(), ignored);
  std::ofstream out(file);
  if (!out) throw Error(ErrorCode::IoError, "cannot write " + file.string());
  return out;
}

void write_json(const fs::path& file, const json& document) {
  auto out = open_output(file);
  out << std::setw(2) << document << '\n';
}

bool is_three_node(const NetworkSpec& spec) {
  if (spec.nodes() != 3) return false;
  const auto& P = spec.routing;
  const double p = P(0, 1);
  return spec.arrival_rates(0) > 0.0 && spec.arrival_rates(1) == 0.0 &&
         spec.arrival_rates(2) == 0.0 && p > 0.0 && p < 1.0 &&
         std::abs(P(0, 2) - (1.0 - p)) < 1e-12 && P(1, 2) == 1.0 && P(0, 0) == 0.0 &&
         P(1, 0) == 0.0 && P(1, 1) == 0.0 && P(2, 0) == 0.0 && P(2, 1) == 0.0 && P(2, 2) == 0.0;
}

std::string yes_no(bool value) { return value ? "yes" : "no"; }

SojournOptions sojourn_options(const NetworkSpec& spec, const TrafficSolution& traffic,
                               const Options& options) {
  SojournOptions sojourn;
  sojourn.entry = entry_index(spec, options);
  const auto path = path_indices(spec, options);
  sojourn.path = path.empty() ? PathMode::random() : PathMode::fixed(path);
  sojourn.epsilon = options.epsilon;
  sojourn.cap = options.cap;
  sojourn.grid = options.grid.empty()
                     ? default_time_grid(spec, traffic, sojourn.entry, sojourn.path, 101)
                     : parse_grid(options.grid);
  return sojourn;
}

std::optional<std::vector<double>> independent_column(const NetworkSpec& spec,
                                                      const TrafficSolution& traffic,
                                                      const std::vector<Index>& path,
                                                      const std::vector<double>& grid) {
  std::vector<double> column;
  column.reserve(grid.size());
  for (double t : grid) column.push_back(path_sojourn_cdf_independent(spec, traffic, std::span<const Index>(path), t));
  return column;
}

// Exact E[S^m] for the configured entry/path, where a closed route exists.
std::optional<double> exact_moment(const NetworkSpec& spec, const TrafficSolution& traffic,
                                   Index entry, const std::vector<Index>& path, int m) {
  const auto topology = classify_topology(spec);
  if (!path.empty()) {
    if (topology.overtake_free_moment_condition) {
      return independent_path_moments(spec, traffic, std::span<const Index>(path), m).back();
    }
    if (topology.acyclic && m == 1) {
      return independent_path_moments(spec, traffic, std::span<const Index>(path), 1).back();
    }
    return std::nullopt;
  }
  if (m == 1) return first_moments(spec, traffic).values(entry);
  if (topology.overtake_free_moment_condition) {
    return higher_moments_overtake_free(spec, traffic, m).values(entry);
  }
  if (spec.nodes() == 1 && m == 2) {
    const double mean = first_moments(spec, traffic).values(0);
    return feedback_variance(spec.arrival_rates(0), spec.service_rates(0), spec.routing(0, 0)) +
           mean * mean;
  }
  return std::nullopt;
}

// ---------------------------------------------------------------------------

int cmd_analyze(const Options& options, std::ostream& out) {
  const std::string started = utc_now();
  const NetworkSpec spec = load_network(options.network);
  const TrafficSolution traffic = solve_traffic_equations(spec);
  const TopologyClass topology = classify_topology(spec);
  const Index J = spec.nodes();

  json report;
  report["schema_version"] = kSchemaVersion;
  report["theta"] = std::vector<double>(traffic.theta.begin(), traffic.theta.end());
  report["rho"] = std::vector<double>(traffic.rho.begin(), traffic.rho.end());
  report["stable"] = traffic.stable;
  report["topology"] = {{"acyclic", topology.acyclic},
                        {"has_feedback", topology.has_feedback},
                        {"overtake_free", topology.overtake_free_moment_condition}};
  json refusals = json::object();

  out << "network: " << options.network << " (" << J << " nodes)\n";
  out << "node,arrival,service,theta,rho\n";
  for (Index j = 0; j < J; ++j) {
    out << j + 1 << ',' << format_number(spec.arrival_rates(j)) << ','
        << format_number(spec.service_rates(j)) << ',' << format_number(traffic.theta(j)) << ','
        << format_number(traffic.rho(j)) << '\n';
  }
  out << "stable: " << yes_no(traffic.stable) << '\n';
  out << "topology: acyclic=" << yes_no(topology.acyclic)
      << " feedback=" << yes_no(topology.has_feedback)
      << " overtake_free=" << yes_no(topology.overtake_free_moment_condition) << '\n';

  if (!traffic.stable) {
    out << "moments: suppressed (UnstableNetwork)\n";
    refusals["moments"] = "UnstableNetwork";
  } else {
    const auto first = first_moments(spec, traffic);
    report["mean_sojourn"] = std::vector<double>(first.values.begin(), first.values.end());
    std::vector<double> queues;
    for (Index j = 0; j < J; ++j) queues.push_back(mean_queue_length(spec, traffic, j));
    report["mean_queue_length"] = queues;

    std::optional<Eigen::MatrixXd> higher;
    try {
      higher = detail::overtake_free_moment_table(spec, traffic, 4);
    } catch (const Error& e) {
      refusals["higher_moments"] = std::string(to_string(e.code()));
    }
    std::optional<std::vector<double>> tandem;
    if (detail::is_tandem(spec)) {
      tandem.emplace();
      for (Index j = 0; j < J; ++j) tandem->push_back(tandem_variance(spec, traffic, j));
      report["tandem_variance"] = *tandem;
    }

    out << "node,E[T],E[N],E[T^2],VAR[T],E[T^3],E[T^4]" << (tandem ? ",VAR_tandem" : "") << '\n';
    std::vector<double> second, variance;
    for (Index j = 0; j < J; ++j) {
      out << j + 1 << ',' << format_number(first.values(j)) << ',' << format_number(queues[static_cast<std::size_t>(j)]);
      if (higher) {
        const double var = (*higher)(j, 1) - first.values(j) * first.values(j);
        second.push_back((*higher)(j, 1));
        variance.push_back(var);
        out << ',' << format_number((*higher)(j, 1)) << ',' << format_number(var) << ','
            << format_number((*higher)(j, 2)) << ',' << format_number((*higher)(j, 3));
      } else {
        out << ",refused,refused,refused,refused";
      }
      if (tandem) out << ',' << format_number((*tandem)[static_cast<std::size_t>(j)]);
      out << '\n';
    }
    if (higher) {
      report["second_moment"] = second;
      report["variance"] = variance;
      report["third_moment"] = std::vector<double>(higher->col(2).begin(), higher->col(2).end());
      report["fourth_moment"] = std::vector<double>(higher->col(3).begin(), higher->col(3).end());
    } else {
      out << "higher moments: refused (" << refusals["higher_moments"].get<std::string>()
          << "); use the cdf command for lower bounds\n";
    }

    if (J == 1 && spec.routing(0, 0) > 0.0) {
      const double v = spec.arrival_rates(0), mu = spec.service_rates(0), p = spec.routing(0, 0);
      const double var = feedback_variance(v, mu, p);
      const double cov = feedback_covariance(v, mu, p);
      out << "feedback queue: VAR[T]=" << format_number(var) << " COV[N,T]=" << format_number(cov)
          << '\n';
      report["feedback"] = {{"variance", var}, {"covariance", cov}};
    }

    if (is_three_node(spec)) {
      const auto check = three_node_positive_correlation(
          spec.arrival_rates(0), spec.service_rates(0), spec.service_rates(1),
          spec.service_rates(2), spec.routing(0, 1));
      const bool holds = check.verdict == CorrelationVerdict::ConditionsHold;
      out << "positive correlation S1,S3: " << (holds ? "ConditionsHold" : "ConditionsFail")
          << " (rate condition " << format_number(check.rate_condition) << " < 1: "
          << yes_no(check.rate_condition < 1.0) << "; p-interval "
          << (check.p_lower ? "[" + format_number(*check.p_lower) + ", " +
                                  format_number(*check.p_upper) + "]"
                            : std::string("empty (radicand ") + format_number(check.radicand) + ")")
          << ")\n";
      report["three_node_correlation"] = {
          {"verdict", holds ? "ConditionsHold" : "ConditionsFail"},
          {"rate_condition", check.rate_condition},
          {"radicand", check.radicand},
          {"p_lower", check.p_lower ? json(*check.p_lower) : json(nullptr)},
          {"p_upper", check.p_upper ? json(*check.p_upper) : json(nullptr)},
      };
    }
  }
  report["refusals"] = refusals;
  if (options.out_dir_given) {
    report["manifest"] = manifest(options, started);
    write_json(fs::path(options.out_dir) / "analyze.json", report);
  }
  return kOk;
}

int cmd_cdf(const Options& options, std::ostream& out) {
  const std::string started = utc_now();
  const NetworkSpec spec = load_network(options.network);
  const TrafficSolution traffic = solve_traffic_equations(spec);
  detail::require_stable(traffic);
  const SojournOptions sojourn = sojourn_options(spec, traffic, options);
  if (options.compare_independent && !sojourn.path.is_fixed()) {
    throw Error(ErrorCode::InvalidArgument, "--compare-independent needs --path");
  }
  const SojournAnalysis analysis = sojourn_analysis(spec, sojourn);

  std::optional<std::vector<double>> independent;
  if (options.compare_independent) {
    independent = independent_column(spec, traffic, sojourn.path.path, analysis.bounds.grid);
  }

  const fs::path dir(options.out_dir);
  {
    auto csv = open_output(dir / "cdf.csv");
    write_cdf_csv(csv, analysis.bounds, independent);
  }
  json summary = summary_json(analysis);
  if (const auto mean = exact_moment(spec, traffic, sojourn.entry, sojourn.path.path, 1)) {
    summary["reference_mean"] = *mean;
  }
  summary["manifest"] = manifest(options, started);
  write_json(dir / "cdf_summary.json", summary);

  out << "k=" << analysis.mixture.jumps() << " alpha=" << format_number(analysis.mixture.alpha)
      << " deficit=" << format_number(analysis.mixture.deficit())
      << " E[T]>=" << format_number(analysis.moment_lower_bounds.front()) << '\n';
  out << "wrote " << (dir / "cdf.csv").string() << " and " << (dir / "cdf_summary.json").string()
      << '\n';
  return kOk;
}

SimConfig sim_config(const NetworkSpec& spec, const Options& options) {
  SimConfig config;
  config.seed = options.seed;
  config.tagged_customers = options.tags;
  config.path_filter = path_indices(spec, options);
  if (options.entry_given) config.entry_filter = entry_index(spec, options);
  if (!config.path_filter.empty()) config.entry_filter = config.path_filter.front();
  return config;
}

int cmd_simulate(const Options& options, std::ostream& out, std::ostream& err) {
  const std::string started = utc_now();
  const NetworkSpec spec = load_network(options.network);
  const SimResult result = simulate(spec, sim_config(spec, options));
  const auto& stats = result.statistics;
  if (!stats.stable) err << "warning: network is unstable; statistics do not converge\n";

  const fs::path dir(options.out_dir);
  {
    auto csv = open_output(dir / "samples.csv");
    write_samples_csv(csv, result.samples);
  }
  json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["tagged"] = stats.tagged;
  summary["retained"] = result.samples.size();
  summary["events"] = stats.events;
  summary["stable"] = stats.stable;
  summary["window"] = stats.window;
  summary["mean_population"] = {{"value", stats.mean_population}, {"se", stats.mean_population_se}};
  summary["throughput"] = {
      {"value", std::vector<double>(stats.throughput.begin(), stats.throughput.end())},
      {"se", std::vector<double>(stats.throughput_se.begin(), stats.throughput_se.end())}};
  if (result.samples.size() >= 2) {
    const auto first = empirical_moments(result.samples, 1);
    summary["sojourn"] = {{"mean", first.mean},
                          {"mean_se", first.mean_se},
                          {"variance", first.variance},
                          {"variance_se", first.variance_se}};
    out << "samples=" << result.samples.size() << " mean=" << format_number(first.mean)
        << " (se " << format_number(first.mean_se) << ") variance=" << format_number(first.variance)
        << " (se " << format_number(first.variance_se) << ")\n";
  }
  summary["manifest"] = manifest(options, started);
  write_json(dir / "simulate_summary.json", summary);
  out << "wrote " << (dir / "samples.csv").string() << " and "
      << (dir / "simulate_summary.json").string() << '\n';
  return kOk;
}

int cmd_compare(const Options& options, std::ostream& out) {
  const std::string started = utc_now();
  const NetworkSpec spec = load_network(options.network);
  const TrafficSolution traffic = solve_traffic_equations(spec);
  detail::require_stable(traffic);
  const SojournOptions sojourn = sojourn_options(spec, traffic, options);
  const SojournAnalysis analysis = sojourn_analysis(spec, sojourn);
  const auto& grid = analysis.bounds.grid;

  std::optional<std::vector<double>> independent;
  if (sojourn.path.is_fixed() && classify_topology(spec).acyclic) {
    independent = independent_column(spec, traffic, sojourn.path.path, grid);
  }

  SimConfig config = sim_config(spec, options);
  config.entry_filter = sojourn.entry;
  const SimResult sim = simulate(spec, config);
  const EmpiricalCdf empirical = empirical_cdf(sim.samples, grid);

  std::vector<CompareRow> rows;
  std::size_t f_outside = 0;
  std::size_t empirical_outside = 0;
  for (std::size_t i = 0; i < grid.size(); ++i) {
    CompareRow row{grid[i], analysis.bounds.lower[i], analysis.bounds.upper[i], std::nullopt,
                   empirical.values[i], empirical.dkw_half_width};
    if (independent) {
      row.independent = (*independent)[i];
      if (*row.independent < row.lower || *row.independent > row.upper) ++f_outside;
    }
    if (row.empirical < row.lower - row.dkw || row.empirical > row.upper + row.dkw) {
      ++empirical_outside;
    }
    rows.push_back(row);
  }

  std::vector<MomentRow> moments;
  for (int m = 1; m <= 4; ++m) {
    MomentRow row;
    row.order = m;
    row.exact = exact_moment(spec, traffic, sojourn.entry, sojourn.path.path, m);
    row.lower_bound = analysis.moment_lower_bounds[static_cast<std::size_t>(m - 1)];
    if (sim.samples.size() >= 2) {
      const auto estimate = empirical_moments(sim.samples, m);
      row.simulated = estimate.mean;
      row.simulated_se = estimate.mean_se;
    }
    moments.push_back(row);
  }

  const fs::path dir(options.out_dir);
  {
    auto csv = open_output(dir / "compare_cdf.csv");
    write_compare_csv(csv, rows);
  }
  {
    auto csv = open_output(dir / "compare_moments.csv");
    write_moments_csv(csv, moments);
  }
  json summary = summary_json(analysis);
  summary["samples"] = sim.samples.size();
  summary["dkw_half_width"] = empirical.dkw_half_width;
  summary["f_outside_points"] = independent ? json(f_outside) : json(nullptr);
  summary["empirical_outside_band_points"] = empirical_outside;
  summary["manifest"] = manifest(options, started);
  write_json(dir / "compare_summary.json", summary);

  out << "grid points=" << grid.size() << " F outside [L,U]: "
      << (independent ? std::to_string(f_outside) : std::string("n/a"))
      << " empirical outside [L-dkw,U+dkw]: " << empirical_outside << '\n';
  out << "wrote " << (dir / "compare_cdf.csv").string() << ", "
      << (dir / "compare_moments.csv").string() << " and "
      << (dir / "compare_summary.json").string() << '\n';
  return kOk;
}

}  // namespace

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoError:
      return kIo;
    case ErrorCode::ParseError:
    case ErrorCode::NegativeRate:
    case ErrorCode::RowSumExceedsOne:
    case ErrorCode::NoExogenousArrivals:
    case ErrorCode::NonInvertibleRouting:
    case ErrorCode::InvalidProbability:
    case ErrorCode::InvalidArgument:
    case ErrorCode::UnreachablePath:
    case ErrorCode::RepeatedNode:
    case ErrorCode::CapTooSmall:
      return kInvalidInput;
    case ErrorCode::UnstableNetwork:
      return kUnstable;
    case ErrorCode::NoConvergence:
    case ErrorCode::StateSpaceTooLarge:
    case ErrorCode::MaxEventsExceeded:
    case ErrorCode::AlphaTooSmall:
      return kNumerical;
    case ErrorCode::NotAcyclic:
    case ErrorCode::NotOvertakeFree:
    case ErrorCode::NotTandem:
    case ErrorCode::TooFewSamples:
      return kPrecondition;
  }
  return kInternal;
}

int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Sojourn-time analysis for open Jackson networks", "jackson"};
  app.require_subcommand(1);
  app.set_version_flag("--version", kToolVersion);

  Options options;
  auto add_network = [&](CLI::App* command) {
    command->add_option("--network", options.network, "Network JSON file")->required();
  };
  auto add_out_dir = [&](CLI::App* command) {
    command->add_option("--out-dir", options.out_dir, "Directory for output files");
  };
  auto add_bounds = [&](CLI::App* command) {
    command->add_option("--entry", options.entry, "Entry node (1-based)");
    command->add_option("--path", options.path, "Fixed path for the marked customer, e.g. 1,2,3")
        ->delimiter(',');
    command->add_option("--epsilon", options.epsilon, "Stopping tolerance in (0,1)");
    command->add_option("--cap", options.cap, "Per-node queue cap of the truncated state space");
    command->add_option("--grid", options.grid, "Time grid start:stop:count");
  };
  auto add_sim = [&](CLI::App* command) {
    command->add_option("--tags", options.tags, "Number of tagged customers");
    command->add_option("--seed", options.seed, "Random seed");
  };

  auto* analyze = app.add_subcommand("analyze", "Traffic solution, topology and exact moments");
  add_network(analyze);
  add_out_dir(analyze);

  auto* cdf = app.add_subcommand("cdf", "Sojourn CDF bounds by uniformization");
  add_network(cdf);
  add_bounds(cdf);
  add_out_dir(cdf);
  cdf->add_flag("--compare-independent", options.compare_independent,
                "Add the CDF that assumes independent per-node sojourns");

  auto* simulate_cmd = app.add_subcommand("simulate", "Discrete-event simulation of tagged customers");
  add_network(simulate_cmd);
  add_sim(simulate_cmd);
  simulate_cmd->add_option("--entry", options.entry, "Keep customers entering at this node");
  simulate_cmd->add_option("--path", options.path, "Keep customers following this path")
      ->delimiter(',');
  add_out_dir(simulate_cmd);

  auto* compare = app.add_subcommand("compare", "Bounds, independent approximation and simulation side by side");
  add_network(compare);
  add_bounds(compare);
  add_sim(compare);
  add_out_dir(compare);
  compare->add_flag("--compare-independent", options.compare_independent,
                    "Accepted for symmetry; compare always adds F when defined");

  std::vector<std::string> reversed(args.rbegin(), args.rend());
  try {
    app.parse(reversed);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e, out, err);
    return code == 0 ? kOk : kUsage;
  }

  for (auto* command : {analyze, cdf, simulate_cmd, compare}) {
    if (command->parsed()) {
      options.command = command->get_name();
      const auto* entry = command->get_option_no_throw("--entry");
      options.entry_given = entry != nullptr && entry->count() > 0;
      options.out_dir_given = command->get_option("--out-dir")->count() > 0;
    }
  }

  try {
    if (analyze->parsed()) return cmd_analyze(options, out);
    if (cdf->parsed()) return cmd_cdf(options, out);
    if (simulate_cmd->parsed()) return cmd_simulate(options, out, err);
    if (compare->parsed()) return cmd_compare(options, out);
  } catch (const Error& e) {
    err << "error: " << e.what() << '\n';
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "internal error: " << e.what() << '\n';
    return kInternal;
  }
  return kUsage;
}

}  // namespace jackson::cli
