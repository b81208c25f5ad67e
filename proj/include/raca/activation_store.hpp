#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "raca/matrix.hpp"

namespace raca {

enum class PromptLabel { normal, synonym, invalid, jailbreak_success, jailbreak_fail, calibration };

std::string_view to_string(PromptLabel label);
/// Throws ValidationError for anything outside the six label names.
PromptLabel parse_label(std::string_view name);

struct PromptMeta {
  std::string id;
  PromptLabel label = PromptLabel::normal;
  std::string source;
  std::uint64_t digest = 0;
  std::optional<std::string> text;

  friend bool operator==(const PromptMeta&, const PromptMeta&) = default;
};

/// 64-bit FNV-1a over the prompt text.
std::uint64_t text_digest(std::string_view text);

/// Strided, non-owning view of one layer slice: rows are prompts, columns are hidden units.
class LayerView {
 public:
  LayerView(const float* base, std::size_t rows, std::size_t cols, std::size_t stride)
      : base_(base), rows_(rows), cols_(cols), stride_(stride) {}

  std::size_t rows() const noexcept { return rows_; }
  std::size_t cols() const noexcept { return cols_; }
  std::span<const float> row(std::size_t r) const noexcept { return {base_ + r * stride_, cols_}; }

  /// Double-precision copy of the selected rows.
  Matrix gather(std::span<const std::size_t> rows) const;
  Matrix to_matrix() const;

 private:
  const float* base_;
  std::size_t rows_;
  std::size_t cols_;
  std::size_t stride_;
};

/// Hidden states of P prompts at L layers, stored [prompt][layer][dim] as float32.
///
/// Construction checks the structural invariants (shape, unique ids, strictly
/// increasing layers) and builds the id index. validate() additionally scans the
/// payload for non-finite values; read_dump and write_dump always call it.
class ActivationDump {
 public:
  ActivationDump(std::vector<int> layers, std::size_t d_model, std::vector<PromptMeta> prompts,
                 std::vector<float> tensor);

  const std::vector<int>& layers() const noexcept { return layers_; }
  std::size_t d_model() const noexcept { return d_model_; }
  std::size_t num_prompts() const noexcept { return prompts_.size(); }
  std::size_t num_layers() const noexcept { return layers_.size(); }
  const std::vector<PromptMeta>& prompts() const noexcept { return prompts_; }
  const PromptMeta& prompt(std::size_t row) const { return prompts_.at(row); }

  std::span<const float> tensor() const noexcept { return tensor_; }
  std::span<float> mutable_tensor() noexcept { return tensor_; }

  void validate() const;

  std::optional<std::size_t> find(std::string_view id) const;
  /// Row of a prompt id; ValidationError when absent.
  std::size_t row_of(std::string_view id) const;
  /// Position of a layer index inside layers(); ValidationError when absent.
  std::size_t layer_position(int layer) const;

  std::span<const float> activation(std::size_t row, std::size_t layer_pos) const noexcept {
    return {tensor_.data() + (row * layers_.size() + layer_pos) * d_model_, d_model_};
  }

  /// Rows carrying the given label, in dump order.
  std::vector<std::size_t> rows_with_label(PromptLabel label) const;

 private:
  std::vector<int> layers_;
  std::size_t d_model_;
  std::vector<PromptMeta> prompts_;
  std::vector<float> tensor_;
  std::unordered_map<std::string, std::size_t> index_;
};

LayerView select_layer_view(const ActivationDump& dump, int layer);

void write_dump(const ActivationDump& dump, const std::filesystem::path& dir);
ActivationDump read_dump(const std::filesystem::path& dir);

/// Ordered prompt ids referencing one dump.
struct TestSuite {
  std::string name;
  std::vector<std::string> members;
  bool allow_duplicates = false;

  std::size_t size() const noexcept { return members.size(); }
  friend bool operator==(const TestSuite&, const TestSuite&) = default;
};

void write_suite(const TestSuite& suite, const std::filesystem::path& file);
TestSuite read_suite(const std::filesystem::path& file);

/// Resolves member ids to dump rows, rejecting unknown ids and unflagged duplicates.
std::vector<std::size_t> resolve_suite(const ActivationDump& dump, const TestSuite& suite);

}  // namespace raca
