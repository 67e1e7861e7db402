#pragma once

#include <fstream>
#include <sstream>
#include <string>

#include "secpol/relmodel.hpp"

namespace secpol::testing {

inline std::string data_path(const std::string& rel) { return std::string(SECPOL_DATA_DIR) + "/" + rel; }

inline std::string read_file(const std::string& path) {
  std::ifstream in(path);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

inline const Schema& tpch() {
  static const Schema s = load_schema_file(data_path("tpch_schema.json"));
  return s;
}

}  // namespace secpol::testing
