#include <doctest.h>

#include <random>

#include "dbea/box.hpp"
#include "dbea/losses.hpp"
#include "dbea/matching.hpp"
#include "gradsuite.hpp"
#include "oracles.hpp"

using namespace dbea;

namespace {

HeadOutput one_box(double cx, double cy, double w, double h, int classes = 2) {
  HeadOutput o;
  o.boxes.resize(1, 4);
  o.boxes << cx, cy, w, h;
  o.logits = Matrix::Zero(1, classes + 1);
  return o;
}

MatchAssignment all_matched(int q) {
  std::vector<int> rows(static_cast<std::size_t>(q));
  for (int i = 0; i < q; ++i) rows[static_cast<std::size_t>(i)] = i;
  return assignment_from_columns(q, rows);
}

Box corners(double x0, double y0, double x1, double y1) { return {(x0 + x1) / 2, (y0 + y1) / 2, x1 - x0, y1 - y0}; }

}  // namespace

TEST_CASE("hungarian_assign small cases") {
  Matrix c(2, 2);
  c << 1, 2, 3, 1;
  const auto rows = hungarian_assign(c);
  CHECK(rows == std::vector<int>{0, 1});
  CHECK(oracle::brute_force_assignment(c) == 2.0);

  Matrix one(1, 1);
  one << 7;
  CHECK(hungarian_assign(one) == std::vector<int>{0});

  CHECK_THROWS_AS(hungarian_assign(Matrix::Zero(2, 3)), ConfigError);
}

TEST_CASE("hungarian_assign equals brute force on random rectangles") {
  std::mt19937_64 rng(123);
  std::uniform_int_distribution<int> dim(1, 6);
  std::uniform_real_distribution<double> u(0.0, 10.0);
  std::uniform_int_distribution<int> small(0, 3);
  for (int t = 0; t < 200; ++t) {
    const int cols = dim(rng);
    const int rows = std::max(cols, dim(rng));
    Matrix c(rows, cols);
    // Integer costs half the time so ties are common.
    const bool ints = t % 2 == 0;
    for (Eigen::Index i = 0; i < c.size(); ++i) c.data()[i] = ints ? small(rng) : u(rng);
    const auto assign = hungarian_assign(c);
    double total = 0.0;
    std::set<int> used;
    for (int j = 0; j < cols; ++j) {
      total += c(assign[std::size_t(j)], j);
      used.insert(assign[std::size_t(j)]);
    }
    CHECK(used.size() == std::size_t(cols));
    CHECK(total == doctest::Approx(oracle::brute_force_assignment(c)).epsilon(1e-12));
  }
}

TEST_CASE("hungarian_match covers every query") {
  std::mt19937_64 rng(5);
  const auto p = gradsuite::random_point(rng);
  const MatchAssignment& m = p.match;
  CHECK(m.pairs.size() == p.gt.size());
  std::set<int> qs, gs;
  for (auto [q, g] : m.pairs) {
    qs.insert(q);
    gs.insert(g);
  }
  CHECK(qs.size() == m.pairs.size());
  CHECK(gs.size() == m.pairs.size());
  CHECK(qs.size() + m.unmatched_queries.size() == std::size_t(p.out.fused.size()));
  for (int u : m.unmatched_queries) CHECK(qs.count(u) == 0);

  std::vector<SceneObject> too_many(7);
  CHECK_THROWS_AS(hungarian_match(p.out.fused, too_many, MatchCostWeights{}), ConfigError);
}

TEST_CASE("giou") {
  const Box a = corners(0, 0, 1, 1), b = corners(2, 0, 3, 1);
  CHECK(giou(a, a) == doctest::Approx(1.0));
  CHECK(giou(a, b) == doctest::Approx(-1.0 / 3.0));
  CHECK(giou(b, a) == doctest::Approx(-1.0 / 3.0));
  CHECK(giou(Box{0.5, 0.5, 0, 0}, Box{0.5, 0.5, 0, 0}) == 0.0);

  std::mt19937_64 rng(8);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 500; ++i) {
    const Box x{u(rng), u(rng), u(rng), u(rng)}, y{u(rng), u(rng), u(rng), u(rng)};
    const double g = giou(x, y);
    CHECK(g >= -1.0);
    CHECK(g <= 1.0);
    CHECK(g == doctest::Approx(giou(y, x)));
    CHECK(g <= iou(x, y) + 1e-12);
  }
}

TEST_CASE("base loss hand values") {
  LossWeights w;
  SUBCASE("perfect prediction") {
    TandemOutput o;
    o.alpha = one_box(0.5, 0.5, 0.2, 0.2);
    o.alpha.logits << 100, -100, -100;
    o.beta = o.alpha;
    o.fused = fuse_tandem(o.alpha, o.beta);
    const std::vector<SceneObject> gt{{0, {0.5, 0.5, 0.2, 0.2}}};
    CHECK(base_loss(o, all_matched(1), gt, w).value == doctest::Approx(0.0));
  }
  SUBCASE("no ground truth and confident no-object") {
    TandemOutput o;
    o.alpha = one_box(0.5, 0.5, 0.2, 0.2);
    o.alpha.logits << -100, -100, 100;
    o.beta = o.alpha;
    o.fused = fuse_tandem(o.alpha, o.beta);
    CHECK(base_loss(o, assignment_from_columns(1, {}), {}, w).value == doctest::Approx(0.0));
  }
  SUBCASE("uniform over five classes costs ln 5 per head") {
    TandemOutput o;
    o.alpha = one_box(0.5, 0.5, 0.2, 0.2, 5);
    o.alpha.logits << 0, 0, 0, 0, 0, -800;
    o.beta = o.alpha;
    o.fused = fuse_tandem(o.alpha, o.beta);
    const std::vector<SceneObject> gt{{2, {0.5, 0.5, 0.2, 0.2}}};
    BaseTerms terms;
    head_base_loss(o.alpha, all_matched(1), gt, w, nullptr, &terms);
    CHECK(terms.cls == doctest::Approx(std::log(5.0)).epsilon(1e-12));
    CHECK(base_loss(o, all_matched(1), gt, w).value == doctest::Approx(w.w_cls * std::log(5.0)));
  }
}

TEST_CASE("tandem aiding") {
  const HeadOutput a = one_box(0.5, 0.5, 0.2, 0.2), b = one_box(0.52, 0.5, 0.25, 0.2);
  CHECK(tandem_aiding(a, b, all_matched(1)).value == doctest::Approx(0.07));
  CHECK(tandem_aiding(b, a, all_matched(1)).value == doctest::Approx(0.07));
  CHECK(tandem_aiding(a, a, all_matched(1)).value == 0.0);
  CHECK(tandem_aiding(a, b, assignment_from_columns(1, {})).value == 0.0);
}

TEST_CASE("tandem quelling") {
  const double eps = 1e-4;
  const auto none = assignment_from_columns(1, {});
  const HeadOutput a = one_box(0.5, 0.5, 0.2, 0.2);
  CHECK(tandem_quelling(a, a, none, eps).value == doctest::Approx(400.0));
  const HeadOutput lo = one_box(0, 0, 0, 0), hi = one_box(1, 1, 1, 1);
  CHECK(tandem_quelling(lo, hi, none, eps).value == doctest::Approx(4.0 / std::sqrt(1.0 + eps)));
  CHECK(tandem_quelling(a, a, all_matched(1), eps).value == 0.0);

  double prev = 1e300;
  for (double gap : {0.0, 0.01, 0.05, 0.2, 0.4}) {
    const double v = tandem_quelling(a, one_box(0.5 + gap, 0.5, 0.2, 0.2), none, eps).value;
    CHECK(v < prev);
    CHECK(v <= 4.0 / std::sqrt(eps));
    prev = v;
  }
}

TEST_CASE("diversity loss") {
  auto logits = [](std::initializer_list<double> v) {
    HeadOutput h = one_box(0.5, 0.5, 0.1, 0.1, static_cast<int>(v.size()) - 1);
    int i = 0;
    for (double x : v) h.logits(0, i++) = x;
    return h;
  };
  CHECK(diversity_loss(logits({1, 2, 3}), logits({1, 2, 3})).value == doctest::Approx(1.0));
  CHECK(diversity_loss(logits({1, 0}), logits({0, 1})).value == doctest::Approx(0.0));
  CHECK(diversity_loss(logits({1, 1}), logits({1, 0})).value == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(diversity_loss(logits({3, 3}), logits({1, 0})).value == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(diversity_loss(logits({0, 0}), logits({1, 0})).value == 0.0);
}

TEST_CASE("dbea_loss composition") {
  std::mt19937_64 rng(17);
  const auto p = gradsuite::random_point(rng);
  LossWeights w;
  const DbeaLoss l = dbea_loss(p.out, p.match, p.gt, w);
  const auto& b = l.breakdown;
  CHECK(b.tandem == doctest::Approx(w.lambda_ta * b.ta + w.lambda_tq * b.tq));
  CHECK(b.total == doctest::Approx(b.base + b.tandem + w.lambda_div * b.diversity));

  LossWeights zero = w;
  zero.lambda_ta = zero.lambda_tq = zero.lambda_div = 0.0;
  const DbeaLoss z = dbea_loss(p.out, p.match, p.gt, zero);
  CHECK(z.breakdown.total == doctest::Approx(z.breakdown.base));

  // Tandem terms touch boxes only, diversity touches logits only.
  const TandemLoss ta = tandem_aiding(p.out.alpha, p.out.beta, p.match);
  const TandemLoss tq = tandem_quelling(p.out.alpha, p.out.beta, p.match, w.epsilon_tq);
  const TandemLoss dv = diversity_loss(p.out.alpha, p.out.beta);
  CHECK(ta.alpha.logits.isZero());
  CHECK(tq.beta.logits.isZero());
  CHECK(dv.alpha.boxes.isZero());
  CHECK(dv.beta.boxes.isZero());

  LossWeights bad = w;
  bad.lambda_tq = -1.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
  bad = w;
  bad.epsilon_tq = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("loss gradients match central differences") {
  for (const auto& [name, err] : gradsuite::run(10, 99)) {
    INFO(name);
    CHECK(err <= 1e-5);
  }
}
