#pragma once

#include <stdexcept>
#include <string>

namespace raca {

/// Input or state that breaks a documented invariant (shapes, labels, NaN payloads, unknown ids).
class ValidationError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Filesystem failures while reading or writing dumps, spaces, suites and reports.
class IoError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// PCA could not produce the requested number of components.
class RankError : public std::runtime_error {
 public:
  RankError(const std::string& what, std::size_t achieved_rank)
      : std::runtime_error(what), achieved_rank_(achieved_rank) {}

  std::size_t achieved_rank() const noexcept { return achieved_rank_; }

 private:
  std::size_t achieved_rank_;
};

}  // namespace raca
