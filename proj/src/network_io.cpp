#include "jackson/network_io.hpp"

#include <fstream>
#include <string>

#include "jackson/error.hpp"

namespace jackson {

namespace {

double number(const nlohmann::json& value, const std::string& where) {
  if (!value.is_number()) throw Error(ErrorCode::ParseError, where + " must be a number");
  const double x = value.get<double>();
  if (!std::isfinite(x)) throw Error(ErrorCode::ParseError, where + " must be finite");
  return x;
}

Eigen::VectorXd vector_field(const nlohmann::json& document, const char* key, Index size) {
  if (!document.contains(key)) throw Error(ErrorCode::ParseError, std::string("missing \"") + key + "\"");
  const auto& array = document.at(key);
  if (!array.is_array() || static_cast<Index>(array.size()) != size) {
    throw Error(ErrorCode::ParseError,
                std::string("\"") + key + "\" must be an array of " + std::to_string(size) + " numbers");
  }
  Eigen::VectorXd values(size);
  for (Index j = 0; j < size; ++j) {
    values(j) = number(array[static_cast<std::size_t>(j)], std::string(key) + "[" + std::to_string(j) + "]");
  }
  return values;
}

}  // namespace

NetworkSpec parse_network(const nlohmann::json& document, ArrivalPolicy policy) {
  if (!document.is_object()) throw Error(ErrorCode::ParseError, "network must be a JSON object");
  for (const auto& [key, value] : document.items()) {
    if (key != "nodes" && key != "arrival_rates" && key != "service_rates" && key != "routing" &&
        key != "name") {
      throw Error(ErrorCode::ParseError, "unknown field \"" + key + "\"");
    }
  }
  if (!document.contains("nodes") || !document.at("nodes").is_number_integer() ||
      document.at("nodes").get<long long>() < 1) {
    throw Error(ErrorCode::ParseError, "\"nodes\" must be a positive integer");
  }
  const auto J = static_cast<Index>(document.at("nodes").get<long long>());

  NetworkSpec spec;
  spec.arrival_rates = vector_field(document, "arrival_rates", J);
  spec.service_rates = vector_field(document, "service_rates", J);

  if (!document.contains("routing")) throw Error(ErrorCode::ParseError, "missing \"routing\"");
  const auto& rows = document.at("routing");
  if (!rows.is_array() || static_cast<Index>(rows.size()) != J) {
    throw Error(ErrorCode::ParseError, "\"routing\" must have one row per node");
  }
  spec.routing.resize(J, J);
  for (Index j = 0; j < J; ++j) {
    const auto& row = rows[static_cast<std::size_t>(j)];
    if (!row.is_array() || static_cast<Index>(row.size()) != J) {
      throw Error(ErrorCode::ParseError, "routing row " + std::to_string(j + 1) + " must have " +
                                             std::to_string(J) + " entries");
    }
    for (Index l = 0; l < J; ++l) {
      spec.routing(j, l) = number(row[static_cast<std::size_t>(l)],
                                  "routing[" + std::to_string(j) + "][" + std::to_string(l) + "]");
    }
  }
  return validate_spec(std::move(spec), policy);
}

NetworkSpec load_network(const std::filesystem::path& file, ArrivalPolicy policy) {
  std::ifstream in(file);
  if (!in) throw Error(ErrorCode::IoError, "cannot open " + file.string());
  nlohmann::json document;
  try {
    in >> document;
  } catch (const nlohmann::json::parse_error& e) {
    throw Error(ErrorCode::ParseError, file.string() + ": " + e.what());
  }
  return parse_network(document, policy);
}

nlohmann::json to_json(const NetworkSpec& spec) {
  nlohmann::json document;
  const Index J = spec.nodes();
  document["nodes"] = J;
  document["arrival_rates"] = std::vector<double>(spec.arrival_rates.begin(), spec.arrival_rates.end());
  document["service_rates"] = std::vector<double>(spec.service_rates.begin(), spec.service_rates.end());
  auto rows = nlohmann::json::array();
  for (Index j = 0; j < J; ++j) {
    std::vector<double> row(static_cast<std::size_t>(J));
    for (Index l = 0; l < J; ++l) row[static_cast<std::size_t>(l)] = spec.routing(j, l);
    rows.push_back(row);
  }
  document["routing"] = rows;
  return document;
}

}  // namespace jackson
