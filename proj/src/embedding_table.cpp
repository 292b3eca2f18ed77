#include "dff/embedding_table.hpp"

#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dff/errors.hpp"

namespace dff {

void QueryEmbeddingTable::add(const std::string& label, Eigen::VectorXd vector) {
  if (vector.size() != dim_)
    throw InputError("query table: label '" + label + "' has dimension " + std::to_string(vector.size()) +
                     ", table dimension is " + std::to_string(dim_));
  if (find(label)) throw InputError("query table: duplicate label '" + label + "'");
  labels_.push_back(label);
  vectors_.push_back(std::move(vector));
}

std::optional<std::size_t> QueryEmbeddingTable::find(const std::string& label) const {
  for (std::size_t i = 0; i < labels_.size(); ++i)
    if (labels_[i] == label) return i;
  return std::nullopt;
}

const Eigen::VectorXd& QueryEmbeddingTable::vector(const std::string& label) const {
  const auto idx = find(label);
  if (!idx) throw InputError("query table: unknown label '" + label + "'");
  return vectors_[*idx];
}

Eigen::MatrixXd QueryEmbeddingTable::matrix(const std::vector<std::string>& labels) const {
  Eigen::MatrixXd out(dim_, static_cast<Eigen::Index>(labels.size()));
  for (std::size_t i = 0; i < labels.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = vector(labels[i]);
  return out;
}

std::string QueryEmbeddingTable::to_json() const {
  nlohmann::ordered_json j;
  j["teacher"] = teacher_;
  j["dim"] = dim_;
  nlohmann::ordered_json labels = nlohmann::ordered_json::object();
  for (std::size_t i = 0; i < labels_.size(); ++i) {
    std::vector<float> v(vectors_[i].size());
    for (Eigen::Index k = 0; k < vectors_[i].size(); ++k) v[k] = static_cast<float>(vectors_[i](k));
    labels[labels_[i]] = v;
  }
  j["labels"] = std::move(labels);
  return j.dump(2);
}

QueryEmbeddingTable QueryEmbeddingTable::from_json(const std::string& text) {
  nlohmann::ordered_json j;
  try {
    j = nlohmann::ordered_json::parse(text);
  } catch (const nlohmann::json::exception& e) {
    throw LoadError(std::string("query table: invalid JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("dim") || !j.contains("labels") || !j["labels"].is_object())
    throw LoadError("query table: expected {teacher, dim, labels}");
  QueryEmbeddingTable table(j.value("teacher", std::string{}), j["dim"].get<int>());
  for (const auto& [name, values] : j["labels"].items()) {
    const auto v = values.get<std::vector<double>>();
    try {
      table.add(name, Eigen::Map<const Eigen::VectorXd>(v.data(), static_cast<Eigen::Index>(v.size())));
    } catch (const InputError& e) {
      throw LoadError(e.what());
    }
  }
  return table;
}

void QueryEmbeddingTable::save(const std::filesystem::path& path) const {
  std::ofstream f(path);
  if (!f) throw std::runtime_error("cannot write " + path.string());
  f << to_json() << '\n';
}

QueryEmbeddingTable QueryEmbeddingTable::load(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) throw LoadError("missing query table " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  try {
    return from_json(ss.str());
  } catch (const LoadError& e) {
    throw LoadError(path.string() + ": " + e.what());
  }
}

}  // namespace dff
