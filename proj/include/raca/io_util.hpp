#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include <json.hpp>

namespace raca {

// Whole-file helpers shared by the dump, space and report writers. All throw IoError.

void write_text_file(const std::filesystem::path& file, const std::string& text);
std::string read_text_file(const std::filesystem::path& file);
nlohmann::json parse_json_file(const std::filesystem::path& file);

void write_f32_le(const std::filesystem::path& file, std::span<const float> values);
std::vector<float> read_f32_le(const std::filesystem::path& file);
void write_f64_le(const std::filesystem::path& file, std::span<const double> values);
std::vector<double> read_f64_le(const std::filesystem::path& file);

}  // namespace raca
