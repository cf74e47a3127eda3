#include "kgr4/nn/parameters.hpp"

#include <cmath>
#include <cstdint>
#include <cstring>
#include <fstream>

#include "kgr4/error.hpp"
#include "kgr4/hash.hpp"

namespace kgr4::nn {

namespace {
constexpr char kMagic[8] = {'K', 'G', 'R', '4', 'P', 'A', 'R', '1'};

template <typename T>
void put(std::ostream& out, const T& v) {
  out.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <typename T>
T get(std::istream& in) {
  T v{};
  in.read(reinterpret_cast<char*>(&v), sizeof(T));
  if (!in) throw IoError("parameter file truncated");
  return v;
}
}  // namespace

std::size_t ParameterSet::add(std::string name, Matrix init) {
  params_.push_back({std::move(name), std::move(init)});
  return params_.size() - 1;
}

std::size_t ParameterSet::num_scalars() const {
  std::size_t n = 0;
  for (const auto& p : params_) n += static_cast<std::size_t>(p.value.size());
  return n;
}

std::vector<double> ParameterSet::flatten() const {
  std::vector<double> out;
  out.reserve(num_scalars());
  for (const auto& p : params_) out.insert(out.end(), p.value.data(), p.value.data() + p.value.size());
  return out;
}

void ParameterSet::assign(std::span<const double> flat) {
  if (flat.size() != num_scalars()) throw Error("parameter vector size mismatch");
  std::size_t off = 0;
  for (auto& p : params_) {
    std::memcpy(p.value.data(), flat.data() + off, sizeof(double) * p.value.size());
    off += static_cast<std::size_t>(p.value.size());
  }
}

double& ParameterSet::scalar(std::size_t flat_index) {
  for (auto& p : params_) {
    const auto n = static_cast<std::size_t>(p.value.size());
    if (flat_index < n) return p.value.data()[flat_index];
    flat_index -= n;
  }
  throw Error("parameter index out of range");
}

void ParameterSet::save(const std::filesystem::path& path) const {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out.write(kMagic, sizeof(kMagic));
  put<std::uint64_t>(out, params_.size());
  for (const auto& p : params_) {
    put<std::uint64_t>(out, p.name.size());
    out.write(p.name.data(), static_cast<std::streamsize>(p.name.size()));
    put<std::int64_t>(out, p.value.rows());
    put<std::int64_t>(out, p.value.cols());
    out.write(reinterpret_cast<const char*>(p.value.data()),
              static_cast<std::streamsize>(sizeof(double) * p.value.size()));
  }
  if (!out) throw IoError("write failed for " + path.string());
}

void ParameterSet::load(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot read " + path.string());
  char magic[sizeof(kMagic)];
  in.read(magic, sizeof(magic));
  if (!in || std::memcmp(magic, kMagic, sizeof(kMagic)) != 0) {
    throw Error("not a parameter file: " + path.string());
  }
  const auto count = get<std::uint64_t>(in);
  if (count != params_.size()) throw Error("parameter count mismatch in " + path.string());
  for (auto& p : params_) {
    const auto name_len = get<std::uint64_t>(in);
    std::string name(name_len, '\0');
    in.read(name.data(), static_cast<std::streamsize>(name_len));
    const auto rows = get<std::int64_t>(in);
    const auto cols = get<std::int64_t>(in);
    if (name != p.name || rows != p.value.rows() || cols != p.value.cols()) {
      throw Error("parameter '" + name + "' does not match model layout");
    }
    in.read(reinterpret_cast<char*>(p.value.data()),
            static_cast<std::streamsize>(sizeof(double) * p.value.size()));
    if (!in) throw IoError("parameter file truncated");
  }
}

std::string ParameterSet::hash() const {
  Sha256 h;
  for (const auto& p : params_) {
    h.update(p.name);
    h.update(std::string_view(reinterpret_cast<const char*>(p.value.data()),
                              sizeof(double) * p.value.size()));
  }
  return h.hex();
}

Gradients::Gradients(const ParameterSet& params) {
  grads_.reserve(params.size());
  for (std::size_t i = 0; i < params.size(); ++i) {
    grads_.push_back(Matrix::Zero(params[i].value.rows(), params[i].value.cols()));
  }
}

void Gradients::zero() {
  for (auto& g : grads_) g.setZero();
}

void Gradients::scale(double s) {
  for (auto& g : grads_) g *= s;
}

double Gradients::norm() const {
  double sq = 0.0;
  for (const auto& g : grads_) sq += g.squaredNorm();
  return std::sqrt(sq);
}

std::vector<double> Gradients::flatten() const {
  std::vector<double> out;
  for (const auto& g : grads_) out.insert(out.end(), g.data(), g.data() + g.size());
  return out;
}

namespace init {

Matrix zeros(Eigen::Index rows, Eigen::Index cols) { return Matrix::Zero(rows, cols); }
Matrix ones(Eigen::Index rows, Eigen::Index cols) { return Matrix::Ones(rows, cols); }

Matrix normal(Eigen::Index rows, Eigen::Index cols, double stddev, std::mt19937_64& rng) {
  std::normal_distribution<double> dist(0.0, stddev);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

Matrix xavier(Eigen::Index rows, Eigen::Index cols, std::mt19937_64& rng) {
  const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
  std::uniform_real_distribution<double> dist(-limit, limit);
  Matrix m(rows, cols);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = dist(rng);
  return m;
}

}  // namespace init

}  // namespace kgr4::nn
