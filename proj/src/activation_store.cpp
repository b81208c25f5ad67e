#include "raca/activation_store.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <unordered_set>

#include <json.hpp>

#include "raca/error.hpp"
#include "raca/io_util.hpp"

namespace raca {

using nlohmann::json;

namespace {

constexpr std::array<std::pair<PromptLabel, std::string_view>, 6> kLabelNames{{
    {PromptLabel::normal, "normal"},
    {PromptLabel::synonym, "synonym"},
    {PromptLabel::invalid, "invalid"},
    {PromptLabel::jailbreak_success, "jailbreak_success"},
    {PromptLabel::jailbreak_fail, "jailbreak_fail"},
    {PromptLabel::calibration, "calibration"},
}};

std::string digest_hex(std::uint64_t digest) {
  std::ostringstream os;
  os << std::hex << std::setw(16) << std::setfill('0') << digest;
  return os.str();
}

std::uint64_t parse_digest(const std::string& hex) {
  if (hex.empty() || hex.size() > 16 ||
      !std::all_of(hex.begin(), hex.end(), [](char c) { return std::isxdigit(static_cast<unsigned char>(c)); })) {
    throw ValidationError("manifest: malformed digest '" + hex + "'");
  }
  return std::stoull(hex, nullptr, 16);
}

}  // namespace

std::string_view to_string(PromptLabel label) {
  for (const auto& [value, name] : kLabelNames) {
    if (value == label) return name;
  }
  return "normal";
}

PromptLabel parse_label(std::string_view name) {
  for (const auto& [value, label_name] : kLabelNames) {
    if (label_name == name) return value;
  }
  throw ValidationError("unknown prompt label '" + std::string(name) + "'");
}

std::uint64_t text_digest(std::string_view text) {
  std::uint64_t hash = 0xcbf29ce484222325ULL;
  for (unsigned char c : text) {
    hash ^= c;
    hash *= 0x100000001b3ULL;
  }
  return hash;
}

Matrix LayerView::gather(std::span<const std::size_t> rows) const {
  Matrix out(rows.size(), cols_);
  for (std::size_t i = 0; i < rows.size(); ++i) {
    auto src = row(rows[i]);
    std::copy(src.begin(), src.end(), out.row(i).begin());
  }
  return out;
}

Matrix LayerView::to_matrix() const {
  Matrix out(rows_, cols_);
  for (std::size_t r = 0; r < rows_; ++r) {
    auto src = row(r);
    std::copy(src.begin(), src.end(), out.row(r).begin());
  }
  return out;
}

ActivationDump::ActivationDump(std::vector<int> layers, std::size_t d_model,
                               std::vector<PromptMeta> prompts, std::vector<float> tensor)
    : layers_(std::move(layers)),
      d_model_(d_model),
      prompts_(std::move(prompts)),
      tensor_(std::move(tensor)) {
  if (d_model_ == 0) throw ValidationError("dump: d_model must be positive");
  if (layers_.empty()) throw ValidationError("dump: at least one layer required");
  for (std::size_t i = 1; i < layers_.size(); ++i) {
    if (layers_[i] <= layers_[i - 1]) {
      throw ValidationError("dump: layer indices must be strictly increasing");
    }
  }
  const std::size_t expected = prompts_.size() * layers_.size() * d_model_;
  if (tensor_.size() != expected) {
    throw ValidationError("dump: tensor holds " + std::to_string(tensor_.size()) +
                          " values, shape requires " + std::to_string(expected));
  }
  index_.reserve(prompts_.size());
  for (std::size_t row = 0; row < prompts_.size(); ++row) {
    if (prompts_[row].id.empty()) throw ValidationError("dump: empty prompt id");
    if (!index_.emplace(prompts_[row].id, row).second) {
      throw ValidationError("dump: duplicate prompt id '" + prompts_[row].id + "'");
    }
  }
}

void ActivationDump::validate() const {
  for (std::size_t i = 0; i < tensor_.size(); ++i) {
    if (!std::isfinite(tensor_[i])) {
      const std::size_t per_prompt = layers_.size() * d_model_;
      throw ValidationError("dump: non-finite activation in prompt '" + prompts_[i / per_prompt].id +
                            "' at flat offset " + std::to_string(i));
    }
  }
}

std::optional<std::size_t> ActivationDump::find(std::string_view id) const {
  auto it = index_.find(std::string(id));
  if (it == index_.end()) return std::nullopt;
  return it->second;
}

std::size_t ActivationDump::row_of(std::string_view id) const {
  if (auto row = find(id)) return *row;
  throw ValidationError("unknown prompt id '" + std::string(id) + "'");
}

std::size_t ActivationDump::layer_position(int layer) const {
  auto it = std::find(layers_.begin(), layers_.end(), layer);
  if (it == layers_.end()) throw ValidationError("unknown layer " + std::to_string(layer));
  return static_cast<std::size_t>(it - layers_.begin());
}

std::vector<std::size_t> ActivationDump::rows_with_label(PromptLabel label) const {
  std::vector<std::size_t> rows;
  for (std::size_t r = 0; r < prompts_.size(); ++r) {
    if (prompts_[r].label == label) rows.push_back(r);
  }
  return rows;
}

LayerView select_layer_view(const ActivationDump& dump, int layer) {
  const std::size_t pos = dump.layer_position(layer);
  const std::size_t stride = dump.num_layers() * dump.d_model();
  return LayerView(dump.tensor().data() + pos * dump.d_model(), dump.num_prompts(), dump.d_model(),
                   stride);
}

void write_dump(const ActivationDump& dump, const std::filesystem::path& dir) {
  dump.validate();

  json prompts = json::array();
  for (const auto& p : dump.prompts()) {
    json entry = {{"id", p.id},
                  {"label", std::string(to_string(p.label))},
                  {"source", p.source},
                  {"digest", digest_hex(p.digest)}};
    if (p.text) entry["text"] = *p.text;
    prompts.push_back(std::move(entry));
  }
  const json manifest = {{"version", 1},
                         {"d_model", dump.d_model()},
                         {"layers", dump.layers()},
                         {"prompts", std::move(prompts)}};

  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  write_text_file(dir / "manifest.json", manifest.dump(2) + "\n");
  write_f32_le(dir / "tensor.bin", dump.tensor());
}

ActivationDump read_dump(const std::filesystem::path& dir) {
  const json manifest = parse_json_file(dir / "manifest.json");
  std::vector<PromptMeta> prompts;
  std::vector<int> layers;
  std::size_t d_model = 0;
  try {
    if (manifest.at("version").get<int>() != 1) {
      throw ValidationError("manifest: unsupported version");
    }
    d_model = manifest.at("d_model").get<std::size_t>();
    layers = manifest.at("layers").get<std::vector<int>>();
    for (const auto& entry : manifest.at("prompts")) {
      PromptMeta meta;
      meta.id = entry.at("id").get<std::string>();
      meta.label = parse_label(entry.at("label").get<std::string>());
      meta.source = entry.value("source", std::string{});
      meta.digest = parse_digest(entry.at("digest").get<std::string>());
      if (entry.contains("text")) meta.text = entry.at("text").get<std::string>();
      prompts.push_back(std::move(meta));
    }
  } catch (const json::exception& e) {
    throw ValidationError("manifest: " + std::string(e.what()));
  }

  const std::size_t expected = prompts.size() * layers.size() * d_model;
  std::vector<float> tensor = read_f32_le(dir / "tensor.bin");
  if (tensor.size() != expected) {
    throw ValidationError("tensor.bin payload length " + std::to_string(tensor.size() * 4) +
                          " bytes does not match manifest shape (" + std::to_string(expected * 4) +
                          " bytes expected)");
  }
  ActivationDump dump(std::move(layers), d_model, std::move(prompts), std::move(tensor));
  dump.validate();
  return dump;
}

void write_suite(const TestSuite& suite, const std::filesystem::path& file) {
  json j = {{"name", suite.name}, {"members", suite.members}};
  if (suite.allow_duplicates) j["allow_duplicates"] = true;
  if (file.has_parent_path()) std::filesystem::create_directories(file.parent_path());
  write_text_file(file, j.dump(2) + "\n");
}

TestSuite read_suite(const std::filesystem::path& file) {
  const json j = parse_json_file(file);
  TestSuite suite;
  try {
    suite.name = j.at("name").get<std::string>();
    suite.members = j.at("members").get<std::vector<std::string>>();
    suite.allow_duplicates = j.value("allow_duplicates", false);
  } catch (const json::exception& e) {
    throw ValidationError("suite " + file.string() + ": " + e.what());
  }
  return suite;
}

std::vector<std::size_t> resolve_suite(const ActivationDump& dump, const TestSuite& suite) {
  std::vector<std::size_t> rows;
  rows.reserve(suite.members.size());
  std::unordered_set<std::size_t> seen;
  for (const auto& id : suite.members) {
    const auto row = dump.find(id);
    if (!row) {
      throw ValidationError("suite '" + suite.name + "': unknown member '" + id + "'");
    }
    if (!seen.insert(*row).second && !suite.allow_duplicates) {
      throw ValidationError("suite '" + suite.name + "': duplicate member '" + id +
                            "' (set allow_duplicates to permit)");
    }
    rows.push_back(*row);
  }
  return rows;
}

}  // namespace raca
