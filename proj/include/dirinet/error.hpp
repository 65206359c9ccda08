#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace dirinet {

// Bad or inconsistent input data (files, arguments, shapes).
class InputError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// A well-formed request that violates the estimation protocol,
// e.g. a window with no observed node.
class ProtocolError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// Checkpoint corruption, version or shape mismatch.
class CheckpointError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

// The closed-form boundary problem has unobserved nodes with no path to
// any observed node.
class SingularSystemError : public std::runtime_error {
 public:
  SingularSystemError(const std::string& what, std::vector<std::size_t> nodes)
      : std::runtime_error(what), nodes_(std::move(nodes)) {}
  const std::vector<std::size_t>& nodes() const { return nodes_; }

 private:
  std::vector<std::size_t> nodes_;
};

}  // namespace dirinet
