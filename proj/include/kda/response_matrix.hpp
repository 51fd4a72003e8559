#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include <Eigen/Core>

namespace kda {

using BinaryMatrix = Eigen::Matrix<std::uint8_t, Eigen::Dynamic, Eigen::Dynamic>;
using MaskMatrix = Eigen::Matrix<bool, Eigen::Dynamic, Eigen::Dynamic>;

/// A solver backend. `endpoint` is an http(s) URL or "mock:<profile>".
struct SolverRef {
  std::string name;
  std::string endpoint;
  std::optional<std::int64_t> size_bytes;
  std::string family_tag;

  bool is_mock() const { return endpoint.rfind("mock:", 0) == 0; }

  friend bool operator==(const SolverRef&, const SolverRef&) = default;
};

/// Per-solver (rows), per-item (columns) correctness in both probe conditions.
///
/// `observed(j, i)` is false for cells whose probes failed; metric code skips
/// those cells. All five matrices always share one shape.
struct ResponseMatrix {
  std::vector<SolverRef> solvers;
  std::vector<std::string> items;
  Eigen::MatrixXd p_correct_without;
  Eigen::MatrixXd p_correct_with;
  BinaryMatrix r_without;
  BinaryMatrix r_with;
  MaskMatrix observed;

  static ResponseMatrix zeros(std::vector<SolverRef> solvers, std::vector<std::string> items);

  Eigen::Index n_solvers() const { return static_cast<Eigen::Index>(solvers.size()); }
  Eigen::Index n_items() const { return static_cast<Eigen::Index>(items.size()); }

  /// Throws input error for unknown ids.
  Eigen::Index item_index(const std::string& item_id) const;
  Eigen::Index solver_index(const std::string& name) const;

  /// Shape, binary range, and probability range checks; throws input error.
  void check() const;

  /// Columns reordered to `item_order` (which must be a permutation of items).
  ResponseMatrix with_item_order(const std::vector<std::string>& item_order) const;
  /// Rows restricted to / reordered by `solver_names`.
  ResponseMatrix with_solvers(const std::vector<std::string>& solver_names) const;

  friend bool operator==(const ResponseMatrix& a, const ResponseMatrix& b);
};

std::string to_json(const ResponseMatrix& matrix);
ResponseMatrix response_matrix_from_json(const std::string& text);
void write_matrix_json(const std::string& path, const ResponseMatrix& matrix);
ResponseMatrix read_matrix_json(const std::string& path);

}  // namespace kda
