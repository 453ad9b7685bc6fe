#include <doctest.h>

#include <random>

#include "dbea/adamw.hpp"
#include "dbea/gradcheck.hpp"
#include "dbea/mlp.hpp"
#include "oracles.hpp"

using namespace dbea;

namespace {

MlpParams<double> single(const Matrix& w, const VectorXd& b, Activation a) {
  MlpParams<double> p;
  p.layers.push_back({w, b, a});
  return p;
}

Matrix mat(std::initializer_list<std::initializer_list<double>> rows) {
  Matrix m(static_cast<Eigen::Index>(rows.size()), static_cast<Eigen::Index>(rows.begin()->size()));
  Eigen::Index r = 0;
  for (const auto& row : rows) {
    Eigen::Index c = 0;
    for (double v : row) m(r, c++) = v;
    ++r;
  }
  return m;
}

}  // namespace

TEST_CASE("mlp_forward hand cases") {
  const auto id = single(Matrix::Identity(2, 2), VectorXd::Zero(2), Activation::identity);
  CHECK(mlp_forward(id, mat({{1, 2}})).output == mat({{1, 2}}));

  const auto relu = single(Matrix::Identity(2, 2), VectorXd::Zero(2), Activation::relu);
  CHECK(mlp_forward(relu, mat({{-1, 3}})).output == mat({{0, 3}}));

  MlpParams<double> two;
  two.layers.push_back({mat({{2}}), VectorXd::Zero(1), Activation::identity});
  two.layers.push_back({mat({{3}}), VectorXd::Constant(1, 1.0), Activation::identity});
  CHECK(mlp_forward(two, mat({{1}})).output(0, 0) == doctest::Approx(7.0));
}

TEST_CASE("mlp_forward rejects a wrong input width") {
  const auto id = single(Matrix::Identity(2, 2), VectorXd::Zero(2), Activation::identity);
  CHECK_THROWS_AS(mlp_forward(id, mat({{1, 2, 3}})), ShapeError);
}

TEST_CASE("mlp_backward hand cases") {
  const auto lin = single(mat({{0.5}}), VectorXd::Zero(1), Activation::identity);
  const auto fw = mlp_forward(lin, mat({{5}}));
  const auto bw = mlp_backward(lin, fw.cache, mat({{1}}));
  CHECK(bw.param_grads.layers[0].weight(0, 0) == doctest::Approx(5.0));
  CHECK(bw.input_grad(0, 0) == doctest::Approx(0.5));

  // Pre-activation -2 on a relu unit blocks the gradient.
  const auto relu = single(mat({{1}}), VectorXd::Constant(1, -2.0), Activation::relu);
  const auto fr = mlp_forward(relu, mat({{0}}));
  const auto br = mlp_backward(relu, fr.cache, mat({{1}}));
  CHECK(br.input_grad(0, 0) == 0.0);
  CHECK(br.param_grads.layers[0].weight(0, 0) == 0.0);
  CHECK(br.param_grads.layers[0].bias(0) == 0.0);

  CHECK_THROWS_AS(mlp_backward(lin, fw.cache, mat({{1, 2}})), ShapeError);
}

TEST_CASE("mlp gradients match central differences") {
  std::mt19937_64 rng(7);
  auto net = make_mlp<double>(5, {{6, Activation::relu}, {4, Activation::sigmoid}, {3, Activation::identity}}, rng);
  for (auto& l : net.layers) l.bias.setRandom();
  Matrix x = Matrix::Random(4, 5);
  Matrix target = Matrix::Random(4, 3);
  std::vector<MlpParams<double>> groups{net};
  FlatLossFn<double> f = [&](const VectorXd& flat, VectorXd* grad) {
    auto g = groups;
    unflatten(flat, g);
    const auto fw = mlp_forward(g[0], x);
    const Matrix diff = fw.output - target;
    if (grad) {
      const auto bw = mlp_backward(g[0], fw.cache, Matrix(2.0 * diff));
      *grad = flatten(std::vector<MlpParams<double>>{bw.param_grads});
    }
    return diff.squaredNorm();
  };
  CHECK(finite_diff_check(f, flatten(groups)) <= 1e-5);
}

TEST_CASE("mlp_forward is bitwise deterministic") {
  std::mt19937_64 rng(3);
  const auto net = make_mlp<double>(4, {{8, Activation::relu}, {2, Activation::sigmoid}}, rng);
  const Matrix x = Matrix::Random(3, 4);
  CHECK(mlp_forward(net, x).output == mlp_forward(net, x).output);
}

TEST_CASE("finite_diff_check basics") {
  FlatLossFn<double> sq = [](const VectorXd& x, VectorXd* g) {
    if (g) *g = 2.0 * x;
    return x.squaredNorm();
  };
  CHECK(finite_diff_check(sq, VectorXd(VectorXd::Constant(1, 3.0))) < 1e-8);
  CHECK(oracle::central_difference([](double w) { return w * w; }, 3.0) == doctest::Approx(6.0));

  FlatLossFn<double> bad = [](const VectorXd&, VectorXd*) { return std::numeric_limits<double>::quiet_NaN(); };
  CHECK_THROWS_AS(finite_diff_check(bad, VectorXd(VectorXd::Zero(1))), DivergenceError);
  CHECK_THROWS_AS(finite_diff_check(sq, VectorXd(VectorXd::Zero(1)), 0.0), ConfigError);
}

TEST_CASE("adamw_step") {
  auto w = single(mat({{1.0}}), VectorXd::Zero(1), Activation::identity);
  std::vector<MlpParams<double>> params{w};
  std::vector<MlpParams<double>> zero{w.zeros_like()};

  SUBCASE("zero gradient applies decay only") {
    auto state = make_optim_state<double>(params, AdamWSettings{});
    adamw_step<double>(params, zero, state);
    CHECK(params[0].layers[0].weight(0, 0) == doctest::Approx(1.0 - 0.0002 * 0.0001 * 1.0).epsilon(1e-15));
    CHECK(state.step == 1);
  }
  SUBCASE("zero gradient and zero decay is the identity") {
    AdamWSettings s;
    s.weight_decay = 0.0;
    auto state = make_optim_state<double>(params, s);
    for (int i = 0; i < 5; ++i) adamw_step<double>(params, zero, state);
    CHECK(params[0].layers[0].weight(0, 0) == 1.0);
    CHECK(state.step == 5);
  }
  SUBCASE("constant unit gradient moves by about lr per step") {
    AdamWSettings s;
    s.weight_decay = 0.0;
    auto state = make_optim_state<double>(params, s);
    std::vector<MlpParams<double>> g{w.zeros_like()};
    g[0].layers[0].weight(0, 0) = 1.0;
    double prev = params[0].layers[0].weight(0, 0);
    double step = 0.0;
    for (int i = 0; i < 200; ++i) {
      adamw_step<double>(params, g, state);
      step = prev - params[0].layers[0].weight(0, 0);
      prev = params[0].layers[0].weight(0, 0);
    }
    CHECK(step == doctest::Approx(0.0002).epsilon(1e-6));
  }
  SUBCASE("non-finite gradient is rejected before any update") {
    auto state = make_optim_state<double>(params, AdamWSettings{});
    std::vector<MlpParams<double>> g{w.zeros_like()};
    g[0].layers[0].weight(0, 0) = std::numeric_limits<double>::infinity();
    CHECK_THROWS_AS(adamw_step<double>(params, g, state), DivergenceError);
    CHECK(state.step == 0);
    CHECK(params[0].layers[0].weight(0, 0) == 1.0);
  }
  SUBCASE("learning rate must be positive") {
    AdamWSettings s;
    s.learning_rate = 0.0;
    auto state = make_optim_state<double>(params, s);
    CHECK_THROWS_AS(adamw_step<double>(params, zero, state), ConfigError);
  }
}

TEST_CASE("make_mlp chains layer widths") {
  std::mt19937_64 rng(1);
  const auto net = make_mlp<double>(3, {{5, Activation::relu}, {2, Activation::identity}}, rng);
  CHECK_NOTHROW(net.validate());
  CHECK(net.param_count() == 3 * 5 + 5 + 5 * 2 + 2);
  for (const auto& l : net.layers) CHECK(l.bias.isZero());
}
