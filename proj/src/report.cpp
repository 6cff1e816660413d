#include "jackson/report.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include "jackson/error.hpp"

namespace jackson {

namespace {

double parse_double(const std::string& token) {
  std::size_t used = 0;
  double value = 0.0;
  try {
    value = std::stod(token, &used);
  } catch (const std::exception&) {
    throw Error(ErrorCode::ParseError, "not a number: \"" + token + "\"");
  }
  if (used != token.size() || !std::isfinite(value)) {
    throw Error(ErrorCode::ParseError, "not a finite number: \"" + token + "\"");
  }
  return value;
}

}  // namespace

std::string format_number(double value) {
  char buffer[32];
  const auto result = std::to_chars(buffer, buffer + sizeof(buffer), value);
  return std::string(buffer, result.ptr);
}

std::vector<double> parse_grid(const std::string& text) {
  std::vector<std::string> parts;
  std::stringstream stream(text);
  std::string part;
  while (std::getline(stream, part, ':')) parts.push_back(part);
  if (parts.size() != 3) throw Error(ErrorCode::ParseError, "grid must be start:stop:count");

  const double start = parse_double(parts[0]);
  const double stop = parse_double(parts[1]);
  long long count = 0;
  const auto [ptr, ec] = std::from_chars(parts[2].data(), parts[2].data() + parts[2].size(), count);
  if (ec != std::errc() || ptr != parts[2].data() + parts[2].size() || count < 1) {
    throw Error(ErrorCode::ParseError, "grid count must be a positive integer");
  }
  if (start < 0.0 || stop < start) throw Error(ErrorCode::ParseError, "grid needs 0 <= start <= stop");

  std::vector<double> grid(static_cast<std::size_t>(count));
  for (long long i = 0; i < count; ++i) {
    grid[static_cast<std::size_t>(i)] =
        count == 1 ? start : start + (stop - start) * static_cast<double>(i) / static_cast<double>(count - 1);
  }
  return grid;
}

std::string format_path(std::span<const Index> path) {
  std::string text;
  for (std::size_t i = 0; i < path.size(); ++i) {
    if (i > 0) text += '>';
    text += std::to_string(path[i] + 1);
  }
  return text;
}

void write_cdf_csv(std::ostream& out, const CdfBounds& bounds,
                   const std::optional<std::vector<double>>& independent) {
  out << "t,lower,upper" << (independent ? ",F_independent" : "") << '\n';
  for (std::size_t i = 0; i < bounds.grid.size(); ++i) {
    out << format_number(bounds.grid[i]) << ',' << format_number(bounds.lower[i]) << ','
        << format_number(bounds.upper[i]);
    if (independent) out << ',' << format_number((*independent)[i]);
    out << '\n';
  }
}

void write_samples_csv(std::ostream& out, std::span<const SojournSample> samples) {
  out << "tag,entry,seen_on_arrival,path,node_sojourns,total\n";
  for (const auto& s : samples) {
    out << s.tag << ',' << s.entry() + 1 << ',' << s.seen_on_arrival << ',' << format_path(s.path)
        << ',';
    for (std::size_t i = 0; i < s.node_sojourns.size(); ++i) {
      if (i > 0) out << ';';
      out << format_number(s.node_sojourns[i]);
    }
    out << ',' << format_number(s.total) << '\n';
  }
}

void write_compare_csv(std::ostream& out, std::span<const CompareRow> rows) {
  out << "t,lower,upper,F_independent,empirical,dkw,flag\n";
  for (const auto& row : rows) {
    out << format_number(row.t) << ',' << format_number(row.lower) << ','
        << format_number(row.upper) << ',';
    bool outside = false;
    if (row.independent) {
      out << format_number(*row.independent);
      outside = *row.independent < row.lower || *row.independent > row.upper;
    }
    out << ',' << format_number(row.empirical) << ',' << format_number(row.dkw) << ','
        << (outside ? "F_outside" : "") << '\n';
  }
}

void write_moments_csv(std::ostream& out, std::span<const MomentRow> rows) {
  out << "m,exact,lower_bound,simulated,simulated_se\n";
  for (const auto& row : rows) {
    out << row.order << ',' << (row.exact ? format_number(*row.exact) : "") << ','
        << format_number(row.lower_bound) << ',' << format_number(row.simulated) << ','
        << format_number(row.simulated_se) << '\n';
  }
}

nlohmann::json summary_json(const SojournAnalysis& analysis) {
  const auto& mixture = analysis.mixture;
  nlohmann::json summary;
  summary["schema_version"] = kSchemaVersion;
  summary["alpha"] = mixture.alpha;
  summary["k"] = mixture.jumps();
  summary["epsilon"] = mixture.epsilon;
  summary["cap"] = analysis.cap;
  summary["states"] = analysis.states;
  summary["mass_absorbed"] = mixture.total();
  summary["deficits"] = {
      {"initial_truncation", mixture.initial_deficit},
      {"arrival_clipping", mixture.clipped},
      {"unresolved_tail", mixture.unresolved},
      {"total", mixture.deficit()},
  };
  summary["moment_lower_bounds"] = analysis.moment_lower_bounds;
  return summary;
}

}  // namespace jackson
