#ifndef JACKSON_REPORT_HPP
#define JACKSON_REPORT_HPP

#include <optional>
#include <ostream>
#include <span>
#include <string>
#include <vector>

#include "json.hpp"

#include "jackson/simulator.hpp"
#include "jackson/uniformization.hpp"

namespace jackson {

inline constexpr int kSchemaVersion = 1;

/// "start:stop:count", inclusive and linear; count >= 1.
std::vector<double> parse_grid(const std::string& text);

/// 1-based node list joined by '>' ("1>2>3").
std::string format_path(std::span<const Index> path);

/// Columns: t,lower,upper[,F_independent]
void write_cdf_csv(std::ostream& out, const CdfBounds& bounds,
                   const std::optional<std::vector<double>>& independent);

/// Columns: tag,entry,seen_on_arrival,path,node_sojourns,total.
/// Nodes are 1-based; node_sojourns are ';'-separated in visit order.
void write_samples_csv(std::ostream& out, std::span<const SojournSample> samples);

struct CompareRow {
  double t = 0.0;
  double lower = 0.0;
  double upper = 0.0;
  std::optional<double> independent;
  double empirical = 0.0;
  double dkw = 0.0;
};

/// Columns: t,lower,upper,F_independent,empirical,dkw,flag.
/// flag is "F_outside" when F_independent is outside [lower, upper], else empty.
void write_compare_csv(std::ostream& out, std::span<const CompareRow> rows);

struct MomentRow {
  int order = 1;
  std::optional<double> exact;
  double lower_bound = 0.0;
  double simulated = 0.0;
  double simulated_se = 0.0;
};

/// Columns: m,exact,lower_bound,simulated,simulated_se
void write_moments_csv(std::ostream& out, std::span<const MomentRow> rows);

nlohmann::json summary_json(const SojournAnalysis& analysis);

std::string format_number(double value);

}  // namespace jackson

#endif  // JACKSON_REPORT_HPP
