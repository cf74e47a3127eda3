#include <doctest.h>

#include <cmath>
#include <random>

#include "kgr4/nn/tape.hpp"
#include "support/grad_check.hpp"

using namespace kgr4;
using nn::Matrix;

namespace {

Matrix random_matrix(Eigen::Index r, Eigen::Index c, std::mt19937_64& rng) {
  std::normal_distribution<double> n(0.0, 1.0);
  Matrix m(r, c);
  for (auto& v : m.reshaped()) v = n(rng);
  return m;
}

}  // namespace

TEST_CASE("copy mixture nll gradients") {
  std::mt19937_64 rng(11);
  nn::ParameterSet ps;
  const auto z = ps.add("logits", random_matrix(4, 7, rng));
  const auto s = ps.add("scores", random_matrix(4, 5, rng));
  const auto g = ps.add("gate", random_matrix(4, 1, rng));
  const std::vector<int> source{3, 1, 3, 6, 0};
  const std::vector<int> targets{3, 2, 6, 1};  // 2 never occurs in the source
  auto run = [&](nn::Gradients* grads) {
    nn::Tape t(ps, grads);
    auto loss = t.copy_mixture_nll(t.param(z), t.param(s), t.param(g), source, targets);
    if (grads) t.backward(loss);
    return t.scalar(loss);
  };
  auto check = kgr4::testing::check_gradients(ps, [&] { return run(nullptr); }, [&](nn::Gradients& gr) { run(&gr); });
  CHECK(check.relative_error < 1e-7);
}

TEST_CASE("copy mixture probabilities match the loss") {
  std::mt19937_64 rng(5);
  const Matrix z = random_matrix(3, 6, rng), s = random_matrix(3, 4, rng), g = random_matrix(3, 1, rng);
  const std::vector<int> source{2, 2, 5, 0};
  const Matrix p = nn::copy_mixture_probs(z, s, g, source);
  nn::ParameterSet ps;
  nn::Tape t(ps);
  std::vector<double> rows;
  const std::vector<int> targets{2, 4, 0};
  t.copy_mixture_nll(t.constant(z), t.constant(s), t.constant(g), source, targets, &rows);
  for (Eigen::Index r = 0; r < p.rows(); ++r) {
    CHECK(p.row(r).sum() == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(std::exp(-rows[static_cast<std::size_t>(r)]) == doctest::Approx(p(r, targets[static_cast<std::size_t>(r)])));
  }
  // Hand check of one entry: token 2 sits at source positions 0 and 1.
  auto softmax = [](Eigen::RowVectorXd v) {
    v = (v.array() - v.maxCoeff()).exp();
    return Eigen::RowVectorXd(v / v.sum());
  };
  const double gate = 1.0 / (1.0 + std::exp(-g(0, 0)));
  const auto pv = softmax(z.row(0));
  const auto a = softmax(s.row(0));
  CHECK(p(0, 2) == doctest::Approx(gate * pv(2) + (1.0 - gate) * (a(0) + a(1))));
}

TEST_CASE("copy mixture rejects bad shapes") {
  nn::ParameterSet ps;
  nn::Tape t(ps);
  const auto z = t.constant(Matrix::Zero(2, 4));
  const auto s = t.constant(Matrix::Zero(2, 3));
  const auto g = t.constant(Matrix::Zero(2, 1));
  CHECK_THROWS(t.copy_mixture_nll(z, s, g, std::vector<int>{0, 1}, std::vector<int>{0, 1}));
  CHECK_THROWS(t.copy_mixture_nll(z, s, g, std::vector<int>{0, 1, 4}, std::vector<int>{0, 1}));
  CHECK_THROWS(t.copy_mixture_nll(z, s, g, std::vector<int>{0, 1, 2}, std::vector<int>{0}));
}

TEST_CASE("gather_entries values and gradients") {
  std::mt19937_64 rng(9);
  nn::ParameterSet ps;
  const auto tab = ps.add("table", random_matrix(1, 5, rng));
  const auto w = ps.add("w", random_matrix(2, 3, rng));
  const std::vector<int> ids{0, 4, 4, 2, 1, 0};
  {
    nn::Tape t(ps);
    const Matrix& v = t.value(t.gather_entries(t.param(tab), ids, 2, 3));
    for (std::size_t i = 0; i < ids.size(); ++i) {
      CHECK(v(static_cast<Eigen::Index>(i / 3), static_cast<Eigen::Index>(i % 3)) == ps[tab].value(0, ids[i]));
    }
    CHECK_THROWS(t.gather_entries(t.param(tab), ids, 3, 3));
  }
  auto run = [&](nn::Gradients* grads) {
    nn::Tape t(ps, grads);
    auto e = t.gather_entries(t.param(tab), ids, 2, 3);
    auto loss = t.mean_rows(t.mul(t.mul(e, t.param(w)), e));
    auto total = t.matmul(loss, t.constant(Matrix::Ones(3, 1)));
    if (grads) t.backward(total);
    return t.scalar(total);
  };
  auto check = kgr4::testing::check_gradients(ps, [&] { return run(nullptr); }, [&](nn::Gradients& gr) { run(&gr); });
  CHECK(check.relative_error < 1e-7);
}
