#include "kda/response_matrix.hpp"

#include <cmath>
#include <fstream>
#include <iterator>

#include "json.hpp"
#include "kda/error.hpp"

namespace kda {

using nlohmann::json;

ResponseMatrix ResponseMatrix::zeros(std::vector<SolverRef> solvers, std::vector<std::string> items) {
  ResponseMatrix m;
  m.solvers = std::move(solvers);
  m.items = std::move(items);
  const auto rows = m.n_solvers();
  const auto cols = m.n_items();
  m.p_correct_without = Eigen::MatrixXd::Zero(rows, cols);
  m.p_correct_with = Eigen::MatrixXd::Zero(rows, cols);
  m.r_without = BinaryMatrix::Zero(rows, cols);
  m.r_with = BinaryMatrix::Zero(rows, cols);
  m.observed = MaskMatrix::Constant(rows, cols, true);
  return m;
}

Eigen::Index ResponseMatrix::item_index(const std::string& item_id) const {
  for (std::size_t i = 0; i < items.size(); ++i)
    if (items[i] == item_id) return static_cast<Eigen::Index>(i);
  throw input_error("unknown item '" + item_id + "'");
}

Eigen::Index ResponseMatrix::solver_index(const std::string& name) const {
  for (std::size_t j = 0; j < solvers.size(); ++j)
    if (solvers[j].name == name) return static_cast<Eigen::Index>(j);
  throw input_error("unknown solver '" + name + "'");
}

void ResponseMatrix::check() const {
  const auto rows = n_solvers();
  const auto cols = n_items();
  auto same = [&](const auto& m) { return m.rows() == rows && m.cols() == cols; };
  if (!same(p_correct_without) || !same(p_correct_with) || !same(r_without) || !same(r_with) ||
      !same(observed))
    throw input_error("invalid matrix: component shapes differ");
  if ((r_without.array() > 1).any() || (r_with.array() > 1).any())
    throw input_error("invalid matrix: binary entry outside {0,1}");
  auto in_unit = [](const Eigen::MatrixXd& p) {
    return p.allFinite() && (p.array() >= 0.0).all() && (p.array() <= 1.0).all();
  };
  if (!in_unit(p_correct_without) || !in_unit(p_correct_with))
    throw input_error("invalid matrix: probability outside [0,1]");
}

ResponseMatrix ResponseMatrix::with_item_order(const std::vector<std::string>& item_order) const {
  if (item_order.size() != items.size())
    throw input_error("item order is not a permutation of the matrix items");
  std::vector<Eigen::Index> cols;
  cols.reserve(item_order.size());
  for (const auto& id : item_order) cols.push_back(item_index(id));
  ResponseMatrix out = zeros(solvers, item_order);
  for (Eigen::Index c = 0; c < static_cast<Eigen::Index>(cols.size()); ++c) {
    out.p_correct_without.col(c) = p_correct_without.col(cols[c]);
    out.p_correct_with.col(c) = p_correct_with.col(cols[c]);
    out.r_without.col(c) = r_without.col(cols[c]);
    out.r_with.col(c) = r_with.col(cols[c]);
    out.observed.col(c) = observed.col(cols[c]);
  }
  return out;
}

ResponseMatrix ResponseMatrix::with_solvers(const std::vector<std::string>& solver_names) const {
  std::vector<SolverRef> refs;
  std::vector<Eigen::Index> rows;
  for (const auto& name : solver_names) {
    rows.push_back(solver_index(name));
    refs.push_back(solvers[static_cast<std::size_t>(rows.back())]);
  }
  ResponseMatrix out = zeros(std::move(refs), items);
  for (Eigen::Index r = 0; r < static_cast<Eigen::Index>(rows.size()); ++r) {
    out.p_correct_without.row(r) = p_correct_without.row(rows[r]);
    out.p_correct_with.row(r) = p_correct_with.row(rows[r]);
    out.r_without.row(r) = r_without.row(rows[r]);
    out.r_with.row(r) = r_with.row(rows[r]);
    out.observed.row(r) = observed.row(rows[r]);
  }
  return out;
}

bool operator==(const ResponseMatrix& a, const ResponseMatrix& b) {
  return a.solvers == b.solvers && a.items == b.items &&
         a.p_correct_without.rows() == b.p_correct_without.rows() &&
         a.p_correct_without.cols() == b.p_correct_without.cols() &&
         a.p_correct_without == b.p_correct_without && a.p_correct_with == b.p_correct_with &&
         a.r_without == b.r_without && a.r_with == b.r_with && a.observed == b.observed;
}

// ---------------------------------------------------------------------------

namespace {

template <typename Derived>
json rows_to_json(const Eigen::DenseBase<Derived>& m) {
  json out = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      using Scalar = typename Derived::Scalar;
      if constexpr (std::is_same_v<Scalar, double>)
        row.push_back(m(r, c));
      else
        row.push_back(static_cast<int>(m(r, c)));
    }
    out.push_back(std::move(row));
  }
  return out;
}

template <typename Matrix>
void rows_from_json(const json& j, const char* key, Matrix& m) {
  const auto& rows = j.at(key);
  if (!rows.is_array() || static_cast<Eigen::Index>(rows.size()) != m.rows())
    throw input_error(std::string("invalid matrix: '") + key + "' has wrong row count");
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    const auto& row = rows[static_cast<std::size_t>(r)];
    if (!row.is_array() || static_cast<Eigen::Index>(row.size()) != m.cols())
      throw input_error(std::string("invalid matrix: '") + key + "' has wrong column count");
    for (Eigen::Index c = 0; c < m.cols(); ++c) {
      using Scalar = typename Matrix::Scalar;
      const auto& v = row[static_cast<std::size_t>(c)];
      if constexpr (std::is_same_v<Scalar, double>)
        m(r, c) = v.get<double>();
      else if constexpr (std::is_same_v<Scalar, bool>)
        m(r, c) = v.get<int>() != 0;
      else {
        int x = v.get<int>();
        if (x != 0 && x != 1)
          throw input_error(std::string("invalid matrix: '") + key + "' entry outside {0,1}");
        m(r, c) = static_cast<Scalar>(x);
      }
    }
  }
}

}  // namespace

std::string to_json(const ResponseMatrix& matrix) {
  json solvers = json::array();
  for (const auto& s : matrix.solvers) {
    json entry = {{"name", s.name}, {"endpoint", s.endpoint}, {"family_tag", s.family_tag}};
    entry["size_bytes"] = s.size_bytes ? json(*s.size_bytes) : json(nullptr);
    solvers.push_back(std::move(entry));
  }
  json j = {{"solvers", solvers},
            {"items", matrix.items},
            {"p_correct_without", rows_to_json(matrix.p_correct_without)},
            {"p_correct_with", rows_to_json(matrix.p_correct_with)},
            {"r_without", rows_to_json(matrix.r_without)},
            {"r_with", rows_to_json(matrix.r_with)},
            {"observed", rows_to_json(matrix.observed)}};
  return j.dump(1);
}

ResponseMatrix response_matrix_from_json(const std::string& text) {
  try {
    json j = json::parse(text);
    std::vector<SolverRef> solvers;
    for (const auto& s : j.at("solvers")) {
      SolverRef ref;
      ref.name = s.at("name").get<std::string>();
      ref.endpoint = s.value("endpoint", std::string());
      ref.family_tag = s.value("family_tag", std::string());
      if (s.contains("size_bytes") && !s.at("size_bytes").is_null())
        ref.size_bytes = s.at("size_bytes").get<std::int64_t>();
      solvers.push_back(std::move(ref));
    }
    auto m = ResponseMatrix::zeros(std::move(solvers), j.at("items").get<std::vector<std::string>>());
    rows_from_json(j, "p_correct_without", m.p_correct_without);
    rows_from_json(j, "p_correct_with", m.p_correct_with);
    rows_from_json(j, "r_without", m.r_without);
    rows_from_json(j, "r_with", m.r_with);
    if (j.contains("observed")) rows_from_json(j, "observed", m.observed);
    m.check();
    return m;
  } catch (const json::exception& e) {
    throw input_error(std::string("invalid matrix file: ") + e.what());
  }
}

void write_matrix_json(const std::string& path, const ResponseMatrix& matrix) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw input_error("cannot write '" + path + "'");
  out << to_json(matrix) << '\n';
}

ResponseMatrix read_matrix_json(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw input_error("cannot open '" + path + "'");
  std::string text((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return response_matrix_from_json(text);
}

}  // namespace kda
