#pragma once

#include "nsgp/rational.hpp"

#include <json.hpp>

#include <filesystem>
#include <string>

namespace nsgp {

// Copy of j with every floating value printed at 17 significant digits (exact round trip)
// and non-finite values replaced by null.
nlohmann::json canonical(const nlohmann::json& j);

nlohmann::json rational_json(const Q& q);
nlohmann::json rational_list_json(const QVec& v);

// Writes canonical(j) with two-space indentation and a trailing newline; creates parent directories.
void write_json(const std::filesystem::path& path, const nlohmann::json& j);
void write_text(const std::filesystem::path& path, const std::string& text);
nlohmann::json read_json(const std::filesystem::path& path);

// One "level=<level> msg=..." line on stderr.
void log_line(const std::string& level, const std::string& msg);

}  // namespace nsgp
