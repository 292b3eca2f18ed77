#pragma once

#include <Eigen/Core>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

namespace dff {

// Precomputed query vectors keyed by label, in file order.
// File form: {"teacher": str, "dim": D, "labels": {name: [D floats], ...}}.
class QueryEmbeddingTable {
 public:
  QueryEmbeddingTable() = default;
  QueryEmbeddingTable(std::string teacher, int dim) : teacher_(std::move(teacher)), dim_(dim) {}

  const std::string& teacher() const { return teacher_; }
  int dim() const { return dim_; }
  std::size_t size() const { return labels_.size(); }
  bool empty() const { return labels_.empty(); }
  const std::vector<std::string>& labels() const { return labels_; }

  void add(const std::string& label, Eigen::VectorXd vector);
  const Eigen::VectorXd& vector(const std::string& label) const;
  const Eigen::VectorXd& vector(std::size_t index) const { return vectors_.at(index); }
  std::optional<std::size_t> find(const std::string& label) const;

  // Vectors of the requested labels as columns (D x n).
  Eigen::MatrixXd matrix(const std::vector<std::string>& labels) const;

  std::string to_json() const;
  static QueryEmbeddingTable from_json(const std::string& text);
  void save(const std::filesystem::path& path) const;
  static QueryEmbeddingTable load(const std::filesystem::path& path);

 private:
  std::string teacher_;
  int dim_ = 0;
  std::vector<std::string> labels_;
  std::vector<Eigen::VectorXd> vectors_;
};

}  // namespace dff
