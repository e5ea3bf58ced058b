#include <gtest/gtest.h>

#include <boost/multiprecision/cpp_dec_float.hpp>

#include <functional>
#include <random>

#include "gsap/core/autograd.hpp"
#include "gsap/core/nn.hpp"
#include "gsap/gradcheck.hpp"

using namespace gsap;
using ag::Matrix;
using ag::Var;

namespace {

Matrix randn(std::mt19937_64& rng, Eigen::Index r, Eigen::Index c) {
  std::normal_distribution<double> d(0.0, 1.0);
  Matrix m(r, c);
  for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = d(rng);
  return m;
}

// Max relative error between backward() and central differences for an
// input leaf x under loss f(x).
double input_grad_error(const std::function<Var(const Var&)>& f, Matrix x0, double eps = 1e-6) {
  Var x(x0, true);
  ag::backward(f(x));
  const Matrix analytic = x.grad();
  double worst = 0.0;
  for (Eigen::Index i = 0; i < x0.size(); ++i) {
    Matrix up = x0, down = x0;
    up.data()[i] += eps;
    down.data()[i] -= eps;
    const double num = (f(ag::constant(up)).item() - f(ag::constant(down)).item()) / (2 * eps);
    worst = std::max(worst, relative_error(analytic.data()[i], num));
  }
  return worst;
}

}  // namespace

TEST(Autograd, ElementwiseAndMatrixOpsMatchFiniteDifferences) {
  std::mt19937_64 rng(1);
  const Var w = ag::constant(randn(rng, 4, 3));
  const Var c = ag::constant(randn(rng, 5, 3));
  const Var row = ag::constant(randn(rng, 1, 3));
  const Var col = ag::constant(randn(rng, 5, 1));
  const std::vector<std::pair<const char*, std::function<Var(const Var&)>>> cases{
      {"matmul", [&](const Var& x) { return ag::sum(ag::mul(ag::matmul(x, w), c)); }},
      {"tanh", [&](const Var& x) { return ag::sum(ag::mul(ag::tanh(ag::matmul(x, w)), c)); }},
      {"sigmoid", [&](const Var& x) { return ag::sum(ag::mul(ag::sigmoid(ag::matmul(x, w)), c)); }},
      {"gelu", [&](const Var& x) { return ag::sum(ag::mul(ag::gelu(ag::matmul(x, w)), c)); }},
      {"softmax", [&](const Var& x) { return ag::sum(ag::mul(ag::softmax_rows(ag::matmul(x, w)), c)); }},
      {"layer_norm",
       [&](const Var& x) { return ag::sum(ag::mul(ag::layer_norm_rows(ag::matmul(x, w), row, row), c)); }},
      {"batch_norm",
       [&](const Var& x) { return ag::sum(ag::mul(ag::batch_norm_train(ag::matmul(x, w), row, row, 1e-5), c)); }},
      {"l2_normalize", [&](const Var& x) { return ag::sum(ag::mul(ag::l2_normalize_rows(ag::matmul(x, w)), c)); }},
      {"mul_col", [&](const Var& x) { return ag::sum(ag::mul(ag::mul_col(ag::matmul(x, w), col), c)); }},
      {"mul_row", [&](const Var& x) { return ag::sum(ag::mul(ag::mul_row(ag::matmul(x, w), row), c)); }},
      {"gather_scatter",
       [&](const Var& x) {
         return ag::sum(ag::mul(ag::scatter_add_rows(ag::gather_rows(ag::matmul(x, w), {4, 0, 0, 2, 1}), {1, 1, 3, 0, 4}, 5), c));
       }},
      {"rowwise_dot", [&](const Var& x) { return ag::sum(ag::rowwise_dot(ag::matmul(x, w), c)); }},
      {"concat_slice",
       [&](const Var& x) {
         Var y = ag::matmul(x, w);
         return ag::sum(ag::mul(ag::concat_cols({ag::slice_cols(y, 1, 2), ag::slice_cols(y, 0, 1)}), c));
       }},
  };
  for (const auto& [name, f] : cases) {
    EXPECT_LT(input_grad_error(f, randn(rng, 5, 4)), 1e-6) << name;
  }
}

TEST(Autograd, SegmentSoftmaxGradientAndNormalization) {
  std::mt19937_64 rng(2);
  const std::vector<int> groups{0, 2, 0, 1, 2, 2};
  const Var c = ag::constant(randn(rng, 6, 1));
  auto f = [&](const Var& x) { return ag::sum(ag::mul(ag::segment_softmax(x, groups, 3), c)); };
  EXPECT_LT(input_grad_error(f, randn(rng, 6, 1)), 1e-6);
  const Matrix p = ag::segment_softmax(ag::constant(randn(rng, 6, 1)), groups, 3).value();
  EXPECT_NEAR(p(0, 0) + p(2, 0), 1.0, 1e-12);
  EXPECT_NEAR(p(3, 0), 1.0, 1e-12);
  EXPECT_NEAR(p(1, 0) + p(4, 0) + p(5, 0), 1.0, 1e-12);
}

TEST(Autograd, CrossEntropyMatchesHighPrecisionOracle) {
  using Big = boost::multiprecision::cpp_dec_float_50;
  std::mt19937_64 rng(3);
  std::normal_distribution<double> d(0.0, 5.0);
  for (int trial = 0; trial < 200; ++trial) {
    const int b = 2 + trial % 4;
    Matrix z(1, b);
    for (int i = 0; i < b; ++i) z(0, i) = d(rng);
    const int gold = trial % b;
    Big sum = 0;
    for (int i = 0; i < b; ++i) sum += boost::multiprecision::exp(Big(z(0, i)));
    const Big want = boost::multiprecision::log(sum) - Big(z(0, gold));
    const double got = ag::cross_entropy(ag::constant(z), gold).item();
    EXPECT_NEAR(got, want.convert_to<double>(), 1e-10);
  }
}

TEST(Autograd, CrossEntropyGradientIsSoftmaxMinusOneHot) {
  Matrix z(1, 3);
  z << 0.5, -1.0, 2.0;
  Var x(z, true);
  ag::backward(ag::cross_entropy(x, 1));
  const Eigen::ArrayXXd e = z.array().exp();
  const Eigen::ArrayXXd p = e / e.sum();
  EXPECT_NEAR(x.grad()(0, 0), p(0, 0), 1e-12);
  EXPECT_NEAR(x.grad()(0, 1), p(0, 1) - 1.0, 1e-12);
  EXPECT_NEAR(x.grad()(0, 2), p(0, 2), 1e-12);
}

TEST(Autograd, BatchNormSingleRowIsIdentityNormalization) {
  Matrix x(1, 3);
  x << 1.0, -2.0, 3.0;
  Matrix gamma(1, 3), beta(1, 3);
  gamma << 2.0, 2.0, 2.0;
  beta << 1.0, 1.0, 1.0;
  const Matrix y = ag::batch_norm_train(ag::constant(x), ag::constant(gamma), ag::constant(beta), 1e-5).value();
  EXPECT_TRUE(y.isApprox((2.0 * x.array() + 1.0).matrix()));
}

TEST(Autograd, L2NormalizeZeroRowStaysZero) {
  const Matrix y = ag::l2_normalize_rows(ag::constant(Matrix::Zero(2, 4))).value();
  EXPECT_EQ(y.cwiseAbs().maxCoeff(), 0.0);
}

TEST(Autograd, FrozenLeafReceivesNoGradientButPassesItOn) {
  nn::ParamStore store(4);
  auto frozen = store.add_normal("f", 3, 3, 1.0, nn::ParamGroup::kFrozen);
  auto trained = store.add_normal("t", 2, 3, 1.0, nn::ParamGroup::kGraph);
  ag::backward(ag::sum(ag::tanh(ag::matmul(trained, frozen))));
  EXPECT_FALSE(frozen.has_grad());
  ASSERT_TRUE(trained.has_grad());
  EXPECT_GT(trained.grad().norm(), 0.0);
}

TEST(Autograd, ShapeMismatchThrows) {
  EXPECT_THROW(ag::matmul(ag::constant(Matrix::Zero(2, 3)), ag::constant(Matrix::Zero(2, 3))), Error);
  EXPECT_THROW(ag::add(ag::constant(Matrix::Zero(2, 3)), ag::constant(Matrix::Zero(3, 2))), Error);
}

TEST(Autograd, GradCheckOnLinearLayerIsExact) {
  EXPECT_LT(grad_check_component("linear").max_rel_error, 1e-7);
}

TEST(Autograd, GruCellMatchesHandRecurrence) {
  nn::ParamStore store(5);
  nn::GRUCell cell(store, "gru", 2, 1, nn::ParamGroup::kGraph);
  std::mt19937_64 rng(6);
  for (auto& p : store.all()) p.var.mutable_value() = randn(rng, p.var.rows(), p.var.cols());
  auto w = [&](const std::string& n) { return store.find("gru." + n)->var.value(); };
  auto sig = [](double v) { return 1.0 / (1.0 + std::exp(-v)); };
  Matrix xs = randn(rng, 4, 2);
  double h = 0.0;
  Var hv = ag::constant(Matrix::Zero(1, 1));
  for (int t = 0; t < 4; ++t) {
    const Eigen::RowVector2d x = xs.row(t);
    auto lin = [&](const std::string& n, const Eigen::RowVectorXd& in) {
      return (in * w(n + ".weight"))(0, 0) + w(n + ".bias")(0, 0);
    };
    Eigen::RowVectorXd hr(1);
    hr << h;
    const double r = sig(lin("x_reset", x) + lin("h_reset", hr));
    const double z = sig(lin("x_update", x) + lin("h_update", hr));
    const double n = std::tanh(lin("x_cand", x) + r * lin("h_cand", hr));
    h = (1 - z) * n + z * h;
    hv = cell.step(ag::constant(Matrix(xs.row(t))), hv);
    EXPECT_NEAR(hv.item(), h, 1e-12);
  }
}
