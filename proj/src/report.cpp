#include "nsgp/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <stdexcept>

namespace nsgp {

nlohmann::json canonical(const nlohmann::json& j) {
  if (j.is_number_float()) {
    double x = j.get<double>();
    if (!std::isfinite(x)) return nullptr;
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return std::stod(buf);
  }
  if (j.is_array()) {
    nlohmann::json out = nlohmann::json::array();
    for (const auto& e : j) out.push_back(canonical(e));
    return out;
  }
  if (j.is_object()) {
    nlohmann::json out = nlohmann::json::object();
    for (auto it = j.begin(); it != j.end(); ++it) out[it.key()] = canonical(it.value());
    return out;
  }
  return j;
}

nlohmann::json rational_json(const Q& q) { return {{"num", num_str(q)}, {"den", den_str(q)}}; }

nlohmann::json rational_list_json(const QVec& v) {
  nlohmann::json a = nlohmann::json::array();
  for (const auto& q : v) a.push_back(rational_json(q));
  return a;
}

void write_text(const std::filesystem::path& path, const std::string& text) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream os(path, std::ios::binary);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  os << text;
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
  write_text(path, canonical(j).dump(2) + "\n");
}

nlohmann::json read_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::invalid_argument("cannot read " + path.string());
  try {
    return nlohmann::json::parse(is);
  } catch (const nlohmann::json::parse_error& e) {
    throw std::invalid_argument(path.string() + ": " + e.what());
  }
}

void log_line(const std::string& level, const std::string& msg) {
  std::cerr << "level=" << level << " msg=\"" << msg << "\"\n";
}

}  // namespace nsgp
