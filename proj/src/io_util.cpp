#include "raca/io_util.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <iterator>

#include "raca/error.hpp"

namespace raca {

namespace {

template <typename Float, typename Bits>
std::string encode_le(std::span<const Float> values) {
  static_assert(sizeof(Float) == sizeof(Bits));
  std::string bytes(values.size() * sizeof(Float), '\0');
  for (std::size_t i = 0; i < values.size(); ++i) {
    Bits bits = std::bit_cast<Bits>(values[i]);
    for (std::size_t b = 0; b < sizeof(Bits); ++b) {
      bytes[i * sizeof(Bits) + b] = static_cast<char>((bits >> (8 * b)) & 0xff);
    }
  }
  return bytes;
}

template <typename Float, typename Bits>
std::vector<Float> decode_le(const std::string& bytes, const std::filesystem::path& file) {
  if (bytes.size() % sizeof(Float) != 0) {
    throw IoError(file.string() + ": payload length " + std::to_string(bytes.size()) +
                  " is not a multiple of " + std::to_string(sizeof(Float)));
  }
  std::vector<Float> out(bytes.size() / sizeof(Float));
  for (std::size_t i = 0; i < out.size(); ++i) {
    Bits bits = 0;
    for (std::size_t b = 0; b < sizeof(Bits); ++b) {
      bits |= static_cast<Bits>(static_cast<unsigned char>(bytes[i * sizeof(Bits) + b])) << (8 * b);
    }
    out[i] = std::bit_cast<Float>(bits);
  }
  return out;
}

}  // namespace

void write_text_file(const std::filesystem::path& file, const std::string& text) {
  std::ofstream out(file, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + file.string() + " for writing");
  out.write(text.data(), static_cast<std::streamsize>(text.size()));
  if (!out) throw IoError("write failed: " + file.string());
}

std::string read_text_file(const std::filesystem::path& file) {
  std::ifstream in(file, std::ios::binary);
  if (!in) throw IoError("cannot open " + file.string());
  return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

nlohmann::json parse_json_file(const std::filesystem::path& file) {
  const std::string text = read_text_file(file);
  try {
    return nlohmann::json::parse(text);
  } catch (const nlohmann::json::parse_error& e) {
    throw IoError(file.string() + ": " + e.what());
  }
}

void write_f32_le(const std::filesystem::path& file, std::span<const float> values) {
  write_text_file(file, encode_le<float, std::uint32_t>(values));
}

std::vector<float> read_f32_le(const std::filesystem::path& file) {
  return decode_le<float, std::uint32_t>(read_text_file(file), file);
}

void write_f64_le(const std::filesystem::path& file, std::span<const double> values) {
  write_text_file(file, encode_le<double, std::uint64_t>(values));
}

std::vector<double> read_f64_le(const std::filesystem::path& file) {
  return decode_le<double, std::uint64_t>(read_text_file(file), file);
}

}  // namespace raca
