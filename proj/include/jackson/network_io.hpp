#ifndef JACKSON_NETWORK_IO_HPP
#define JACKSON_NETWORK_IO_HPP

#include <filesystem>

#include "json.hpp"

#include "jackson/network.hpp"

namespace jackson {

// Network files are JSON objects:
//
//   {
//     "nodes": 3,
//     "arrival_rates": [1, 0, 0],
//     "service_rates": [2, 2, 2],
//     "routing": [[0, 1, 0], [0, 0, 1], [0, 0, 0]],
//     "name": "optional free text"
//   }
//
// "routing" is row-major: routing[j][l] is the probability of moving j -> l.
// Every number must be finite; the result has passed validate_spec().

NetworkSpec parse_network(const nlohmann::json& document,
                          ArrivalPolicy policy = ArrivalPolicy::RequireExogenous);

NetworkSpec load_network(const std::filesystem::path& file,
                         ArrivalPolicy policy = ArrivalPolicy::RequireExogenous);

nlohmann::json to_json(const NetworkSpec& spec);

}  // namespace jackson

#endif  // JACKSON_NETWORK_IO_HPP
