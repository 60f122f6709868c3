#pragma once

#include <string>

#include "volcano/space.hpp"

namespace volcano::testing {

// algo in {knn, tree}; k if knn, depth if tree; x real.
inline SearchSpace knn_tree_space() {
  return parse_space(R"({
    "name": "kt", "algorithm": "algo",
    "variables": [
      {"name": "algo", "type": "cat", "choices": ["knn", "tree"], "default": "knn"},
      {"name": "k", "type": "int", "lo": 1, "hi": 25, "default": 5, "condition": {"parent": "algo", "equals": "knn"}},
      {"name": "depth", "type": "int", "lo": 1, "hi": 12, "default": 4, "condition": {"parent": "algo", "equals": "tree"}},
      {"name": "x", "type": "real", "lo": -1, "hi": 1, "default": 0}
    ]})");
}

inline std::string data_path(const std::string& name) { return std::string(VOLCANO_SOURCE_DIR) + "/data/" + name; }
inline std::string space_path(const std::string& name) { return std::string(VOLCANO_SOURCE_DIR) + "/spaces/" + name; }

}  // namespace volcano::testing
