#pragma once

#include <chrono>
#include <string>
#include <thread>

#include <nlohmann/json.hpp>

#include "cpclean/session.hpp"

namespace cpclean::testing {

// Polls the suggestion endpoint until the selection finishes.
inline ApiResponse poll_suggestion(SessionApi& api, const std::string& id) {
  for (;;) {
    auto r = api.handle("GET", "/sessions/" + id + "/suggestion", "");
    if (r.status != 202) return r;
    std::this_thread::sleep_for(std::chrono::milliseconds(1));
  }
}

inline nlohmann::json create_body(const IncompleteDataset& d, const std::vector<FeatureVector>& val, std::size_t k) {
  return {{"dataset", to_json(d)}, {"val", val}, {"params", {{"k", k}}}};
}

}  // namespace cpclean::testing
