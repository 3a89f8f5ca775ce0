#pragma once

#include <ostream>
#include <string>
#include <vector>

#include <json.hpp>

#include "clickseg/backend.hpp"
#include "clickseg/config.hpp"
#include "clickseg/session.hpp"

namespace clickseg {

/// Replays a click script on a cloud (normalized first) and returns the
/// mask document written by `segment`.
nlohmann::json segment_with_clicks(const PointCloud& cloud, const std::vector<Click>& clicks,
                                   const EmbeddingBackend& backend, const AppConfig& config);

/// Runs the command line; args[0] is the program name. Returns 0 on
/// success, 1 on a runtime failure and 2 on a usage error.
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace clickseg
