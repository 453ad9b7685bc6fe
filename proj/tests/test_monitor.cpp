#include <doctest.h>

#include <random>

#include "dbea/evaluation.hpp"
#include "dbea/monitor.hpp"

using namespace dbea;

namespace {

HeadOutput boxes(const Matrix& b) {
  HeadOutput h;
  h.boxes = b;
  h.logits = Matrix::Zero(b.rows(), 3);
  return h;
}

Matrix row(double cx, double cy, double w, double h) {
  Matrix m(1, 4);
  m << cx, cy, w, h;
  return m;
}

}  // namespace

TEST_CASE("usm_image hand values") {
  const std::vector<int> k0{0};
  const HeadOutput a = boxes(row(0.5, 0.5, 0.2, 0.2)), b = boxes(row(0.52, 0.5, 0.25, 0.2));
  CHECK(usm_image(a, b, k0) == doctest::Approx(1.25e-7).epsilon(1e-12));
  CHECK(usm_image(a, a, k0) == 0.0);
  CHECK_THROWS_AS(usm_image(a, b, std::vector<int>{}), DataError);
}

TEST_CASE("usm_object hand values") {
  const Box a{0.5, 0.5, 0.2, 0.2}, b{0.52, 0.5, 0.25, 0.2};
  CHECK(usm_object(a, b, 0.81) == doctest::Approx(std::sqrt(0.02) * 0.0025 / 0.9).epsilon(1e-12));
  CHECK(usm_object(a, b, 0.81) == doctest::Approx(3.928e-4).epsilon(1e-3));
  CHECK(usm_object(a, a, 0.3) == 0.0);
  CHECK(usm_object(a, b, 0.25) == doctest::Approx(2.0 * usm_object(a, b, 1.0)));
  CHECK(usm_object(a, b, 0.2) > usm_object(a, b, 0.4));
  CHECK_THROWS_AS(usm_object(a, b, 0.0), DataError);
}

TEST_CASE("usm_image properties on random instances") {
  std::mt19937_64 rng(4);
  std::uniform_real_distribution<double> u(0.1, 0.6);
  for (int t = 0; t < 100; ++t) {
    const int k = 1 + t % 6;
    Matrix a(k, 4), d(k, 4);
    for (Eigen::Index i = 0; i < a.size(); ++i) {
      a.data()[i] = u(rng);
      d.data()[i] = 0.1 * (u(rng) - 0.35);
    }
    std::vector<int> idx(static_cast<std::size_t>(k));
    for (int i = 0; i < k; ++i) idx[std::size_t(i)] = i;
    const double base = usm_image(boxes(a), boxes(a + d), idx);
    CHECK(base >= 0.0);
    // Wider gaps score higher.
    CHECK(usm_image(boxes(a), boxes(a + 1.5 * d), idx) > base);
    // A common offset on both heads changes nothing.
    const Matrix shift = Matrix::Constant(k, 4, 0.05);
    CHECK(usm_image(boxes(a + shift), boxes(a + d + shift), idx) == doctest::Approx(base).epsilon(1e-9));
    // Order of the selection is irrelevant.
    std::vector<int> rev(idx.rbegin(), idx.rend());
    CHECK(usm_image(boxes(a), boxes(a + d), rev) == doctest::Approx(base).epsilon(1e-12));
  }
}

TEST_CASE("outer root switch") {
  const std::vector<int> k0{0};
  const HeadOutput a = boxes(row(0.5, 0.5, 0.2, 0.2)), b = boxes(row(0.52, 0.5, 0.25, 0.2));
  MonitorOptions off;
  off.outer_root = false;
  // Without the root the xy term is xy * mean(xy) = 4e-4.
  CHECK(usm_image(a, b, k0, off) == doctest::Approx(4e-4 * 6.25e-6));
}

TEST_CASE("score_scene and score_batch") {
  ModelConfig cfg;
  cfg.feature_dim = 6;
  cfg.trunk_hidden = 8;
  cfg.embed_dim = 5;
  cfg.head_hidden = 4;
  cfg.num_classes = 3;
  cfg.queries = 7;
  cfg.top_k = 3;
  const TandemParams p = init_params(cfg, 0);

  DatasetConfig dc;
  dc.world.num_classes = 3;
  dc.world.queries = 7;
  dc.world.feature_dim = 6;
  dc.world.min_objects = 1;
  dc.world.max_objects = 4;
  dc.world.near_class_prior = {1, 1, 1};
  const Split split = generate_split(dc, 0, "test", Regime::in_distribution, 6);

  CHECK(score_batch(p, Split{}).empty());

  Split dup{split[0], split[0]};
  const auto s = score_batch(p, dup);
  CHECK(s[0].image_usm == s[1].image_usm);
  CHECK(s[0].per_object.size() == std::size_t(cfg.top_k));
  CHECK(s[0].top_k_used == cfg.top_k);

  const auto serial = score_batch(p, split, {}, 1);
  const auto parallel = score_batch(p, split, {}, 3);
  for (std::size_t i = 0; i < split.size(); ++i) CHECK(serial[i].image_usm == parallel[i].image_usm);

  // Vanilla heads agree with themselves, so every score is zero.
  ModelConfig vc = cfg;
  vc.mode = ModelMode::vanilla;
  for (const auto& sc : score_batch(init_params(vc, 0), split)) {
    CHECK(sc.image_usm == 0.0);
    for (const auto& o : sc.per_object) CHECK(o.usm == 0.0);
  }
}
