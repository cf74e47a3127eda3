#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <filesystem>
#include <random>
#include <span>
#include <string>
#include <vector>

namespace kgr4::nn {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

struct Parameter {
  std::string name;
  Matrix value;
};

/// Named, ordered collection of trainable tensors. The order defines the flat
/// parameter vector used by checkpoints and gradient checks.
class ParameterSet {
 public:
  std::size_t add(std::string name, Matrix init);

  Parameter& operator[](std::size_t i) { return params_[i]; }
  const Parameter& operator[](std::size_t i) const { return params_[i]; }
  std::size_t size() const { return params_.size(); }
  std::size_t num_scalars() const;

  std::vector<double> flatten() const;
  void assign(std::span<const double> flat);
  /// Reference to one scalar by flat index.
  double& scalar(std::size_t flat_index);

  /// Binary blob: magic, tensor count, then (name, rows, cols, data) records.
  void save(const std::filesystem::path& path) const;
  /// Loads into an already-shaped set; names and shapes must match.
  void load(const std::filesystem::path& path);

  std::string hash() const;

 private:
  std::vector<Parameter> params_;
};

/// Gradient buffers aligned with a ParameterSet.
class Gradients {
 public:
  Gradients() = default;
  explicit Gradients(const ParameterSet& params);

  Matrix& operator[](std::size_t i) { return grads_[i]; }
  const Matrix& operator[](std::size_t i) const { return grads_[i]; }
  std::size_t size() const { return grads_.size(); }

  void zero();
  void scale(double s);
  double norm() const;
  std::vector<double> flatten() const;

 private:
  std::vector<Matrix> grads_;
};

namespace init {

Matrix zeros(Eigen::Index rows, Eigen::Index cols);
Matrix ones(Eigen::Index rows, Eigen::Index cols);
Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng);
/// Glorot/Xavier uniform.
Matrix xavier(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng);

}  // namespace init

}  // namespace kgr4::nn
