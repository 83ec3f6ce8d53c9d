#pragma once

#include <Eigen/Dense>
#include <cstddef>
#include <string>
#include <variant>

namespace tempdens {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using Index = Eigen::Index;

/// Ground-truth state of one window after labeling.
enum class StateKind { kRest, kId, kOod, kExcluded };

struct TrueState {
  StateKind kind = StateKind::kRest;
  int class_index = -1;    // ID class index, -1 otherwise
  std::string class_name;  // event class for ID/OOD, empty otherwise

  bool is_task() const { return kind == StateKind::kId || kind == StateKind::kOod; }
  friend bool operator==(const TrueState&, const TrueState&) = default;
};

std::string to_string(StateKind kind);
StateKind state_kind_from_string(const std::string& name);

}  // namespace tempdens
