#include "dbea/world.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "dbea/errors.hpp"
#include "dbea/parallel.hpp"

namespace dbea {

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::in_distribution:
      return "in_distribution";
    case Regime::near_ood:
      return "near_ood";
    case Regime::far_ood:
      return "far_ood";
    case Regime::novel_class:
      return "novel_class";
  }
  return "unknown";
}

Regime parse_regime(std::string_view s) {
  if (s == "in_distribution") return Regime::in_distribution;
  if (s == "near_ood") return Regime::near_ood;
  if (s == "far_ood") return Regime::far_ood;
  if (s == "novel_class") return Regime::novel_class;
  throw DataError("unknown regime '" + std::string(s) + "'");
}

bool WorldConfig::is_held_out(int cls) const {
  return std::find(held_out_classes.begin(), held_out_classes.end(), cls) != held_out_classes.end();
}

void WorldConfig::validate() const {
  auto fail = [](const std::string& key, const std::string& why) { throw ConfigError(key + ": " + why); };
  if (num_classes < 1) fail("dataset.num_classes", "must be >= 1");
  if (queries < 1) fail("dataset.queries", "must be >= 1");
  if (feature_dim < 1) fail("dataset.feature_dim", "must be >= 1");
  if (map_hidden < 1) fail("dataset.map_hidden", "must be >= 1");
  if (noise_dims < 0) fail("dataset.noise_dims", "must be >= 0");
  if (noise_sigma < 0.0) fail("dataset.noise_sigma", "must be >= 0");
  if (min_objects < 0 || max_objects < min_objects) fail("dataset.max_objects", "need 0 <= min_objects <= max_objects");
  if (max_objects > queries) fail("dataset.max_objects", "cannot exceed the query count");
  if (min_size < 0.0 || min_size > 1.0) fail("dataset.min_size", "must lie in [0, 1]");
  auto check_interval = [&](const Interval& iv, const std::string& key) {
    if (iv.lo > iv.hi) fail(key, "lower bound above upper bound");
    if (iv.hi > 1.0 || iv.lo < 0.0) fail(key, "must lie within [0, 1]");
    if (iv.hi < min_size) fail(key, "entirely below min_size");
  };
  check_interval(id_width, "dataset.id_width");
  check_interval(id_height, "dataset.id_height");
  check_interval(near_width(), "dataset.near_shift");
  check_interval(near_height(), "dataset.near_shift");
  if (!(map_gain > 0.0)) fail("dataset.map_gain", "must be > 0");
  if (!(far_map_gain > 0.0)) fail("dataset.far_map_gain", "must be > 0");
  if (static_cast<int>(near_class_prior.size()) != num_classes) {
    fail("dataset.near_class_prior", "needs one weight per class");
  }
  for (double p : near_class_prior) {
    if (!(p >= 0.0)) fail("dataset.near_class_prior", "weights must be >= 0");
  }
  for (int c : held_out_classes) {
    if (c < 0 || c >= num_classes) fail("dataset.held_out_classes", "class index out of range");
  }
  if (static_cast<int>(held_out_classes.size()) >= num_classes) {
    fail("dataset.held_out_classes", "at least one class must remain for training");
  }
  if (novel_sibling >= num_classes) fail("dataset.novel_sibling", "class index out of range");
  if (novel_sibling >= 0 && is_held_out(novel_sibling)) fail("dataset.novel_sibling", "sibling must be a trained class");
  if (novel_similarity < 0.0 || novel_similarity > 1.0) fail("dataset.novel_similarity", "must lie in [0, 1]");
}

RegimeParams regime_params(const WorldConfig& cfg, Regime kind) {
  RegimeParams p;
  p.kind = kind;
  p.num_classes = cfg.num_classes;
  p.min_objects = cfg.min_objects;
  p.max_objects = cfg.max_objects;
  p.min_size = cfg.min_size;
  p.width = cfg.id_width;
  p.height = cfg.id_height;
  p.class_prior.assign(static_cast<std::size_t>(cfg.num_classes), 1.0);
  switch (kind) {
    case Regime::in_distribution:
    case Regime::far_ood:
      break;
    case Regime::near_ood:
      p.width = cfg.near_width();
      p.height = cfg.near_height();
      p.class_prior = cfg.near_class_prior;
      break;
    case Regime::novel_class:
      p.required_classes = cfg.held_out_classes;
      if (p.required_classes.empty()) throw ConfigError("dataset.held_out_classes: novel_class regime needs a held-out class");
      if (p.max_objects < 1) throw ConfigError("dataset.max_objects: novel_class scenes need room for a held-out object");
      break;
  }
  if (kind != Regime::novel_class) {
    for (int c : cfg.held_out_classes) p.class_prior[static_cast<std::size_t>(c)] = 0.0;
  }
  if (std::accumulate(p.class_prior.begin(), p.class_prior.end(), 0.0) <= 0.0) {
    throw ConfigError("dataset: class prior has no mass for regime " + std::string(to_string(kind)));
  }
  return p;
}

Matrix WorldMap::apply(const Matrix& latents) const {
  require_shape(latents, latents.rows(), w1.rows(), "world map latent");
  Matrix hidden = latents * w1;
  hidden.rowwise() += b1.transpose();
  hidden = hidden.array().tanh();
  Matrix out = hidden * w2;
  out.rowwise() += b2.transpose();
  return out.array().tanh();
}

WorldMap make_world(std::uint64_t seed, Regime regime, const WorldConfig& cfg) {
  const bool far = regime == Regime::far_ood;
  WorldMap m;
  m.seed = derive_seed(seed, far ? "world-map/far" : "world-map/in-distribution");
  Rng rng(m.seed);
  const double gain = far ? cfg.far_map_gain : cfg.map_gain;
  const int in = cfg.latent_dim(), hid = cfg.map_hidden, out = cfg.feature_dim;
  std::normal_distribution<double> n1(0.0, gain / std::sqrt(static_cast<double>(in)));
  std::normal_distribution<double> n2(0.0, gain / std::sqrt(static_cast<double>(hid)));
  std::normal_distribution<double> nb(0.0, 0.5);
  m.w1.resize(in, hid);
  for (Eigen::Index i = 0; i < m.w1.size(); ++i) m.w1.data()[i] = n1(rng);
  m.b1.resize(hid);
  for (Eigen::Index i = 0; i < hid; ++i) m.b1[i] = nb(rng);
  m.w2.resize(hid, out);
  for (Eigen::Index i = 0; i < m.w2.size(); ++i) m.w2.data()[i] = n2(rng);
  m.b2.resize(out);
  for (Eigen::Index i = 0; i < out; ++i) m.b2[i] = nb(rng);
  return m;
}

namespace {

double uniform_in(const Interval& iv, double floor, Rng& rng) {
  std::uniform_real_distribution<double> u(std::max(iv.lo, floor), std::max(iv.hi, floor));
  return u(rng);
}

int draw_class(const std::vector<double>& prior, Rng& rng) {
  std::discrete_distribution<int> d(prior.begin(), prior.end());
  return d(rng);
}

SceneObject draw_object(int cls, const RegimeParams& p, Rng& rng) {
  SceneObject o;
  o.class_id = cls;
  o.box.w = std::min(1.0, uniform_in(p.width, p.min_size, rng));
  o.box.h = std::min(1.0, uniform_in(p.height, p.min_size, rng));
  std::uniform_real_distribution<double> ux(0.5 * o.box.w, 1.0 - 0.5 * o.box.w);
  std::uniform_real_distribution<double> uy(0.5 * o.box.h, 1.0 - 0.5 * o.box.h);
  o.box.cx = ux(rng);
  o.box.cy = uy(rng);
  return o;
}

}  // namespace

Scene sample_scene(const RegimeParams& p, Rng& rng) {
  if (p.min_size > 1.0) throw ConfigError("dataset.min_size: must not exceed 1");
  if (p.num_classes < 1) throw ConfigError("dataset.num_classes: must be >= 1");
  if (p.width.lo > p.width.hi || p.height.lo > p.height.hi) throw ConfigError("dataset: inverted box-size interval");
  if (p.min_objects < 0 || p.max_objects < p.min_objects) throw ConfigError("dataset: invalid object count range");

  Scene s;
  s.regime = p.kind;
  std::uniform_int_distribution<int> count_dist(p.min_objects, p.max_objects);
  int count = count_dist(rng);
  if (!p.required_classes.empty()) count = std::max(count, 1);
  s.objects.reserve(static_cast<std::size_t>(count));
  for (int i = 0; i < count; ++i) {
    int cls;
    if (i == 0 && !p.required_classes.empty()) {
      std::uniform_int_distribution<std::size_t> pick(0, p.required_classes.size() - 1);
      cls = p.required_classes[pick(rng)];
    } else {
      cls = draw_class(p.class_prior, rng);
    }
    s.objects.push_back(draw_object(cls, p, rng));
  }
  return s;
}

VectorXd object_latent(const WorldConfig& cfg, const SceneObject& obj, Rng& rng) {
  VectorXd z = VectorXd::Zero(cfg.latent_dim());
  if (cfg.is_held_out(obj.class_id) && cfg.novel_sibling >= 0) {
    z[obj.class_id] = 1.0 - cfg.novel_similarity;
    z[cfg.novel_sibling] = cfg.novel_similarity;
  } else {
    z[obj.class_id] = 1.0;
  }
  const auto b = obj.box.as_array();
  for (int i = 0; i < 4; ++i) z[cfg.num_classes + i] = b[static_cast<std::size_t>(i)];
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (int i = 0; i < cfg.noise_dims; ++i) z[cfg.num_classes + 4 + i] = cfg.noise_sigma > 0 ? noise(rng) : 0.0;
  return z;
}

VectorXd background_latent(const WorldConfig& cfg, Rng& rng) {
  VectorXd z = VectorXd::Zero(cfg.latent_dim());
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 4; ++i) z[cfg.num_classes + i] = u(rng);
  std::normal_distribution<double> noise(0.0, cfg.noise_sigma);
  for (int i = 0; i < cfg.noise_dims; ++i) z[cfg.num_classes + 4 + i] = cfg.noise_sigma > 0 ? noise(rng) : 0.0;
  return z;
}

QueryFeatures render_queries(const Scene& scene, const WorldMap& world, const WorldConfig& cfg, Rng& rng) {
  if (world.feature_dim() != cfg.feature_dim || world.latent_dim() != cfg.latent_dim()) {
    throw ShapeError("world map dimensions do not match the dataset config");
  }
  const int q = cfg.queries;
  if (static_cast<int>(scene.objects.size()) > q) throw ShapeError("scene has more objects than queries");

  std::vector<int> slots(static_cast<std::size_t>(q));
  std::iota(slots.begin(), slots.end(), 0);
  std::shuffle(slots.begin(), slots.end(), rng);

  QueryFeatures out;
  out.assignment.assign(static_cast<std::size_t>(q), -1);
  for (std::size_t i = 0; i < scene.objects.size(); ++i) out.assignment[static_cast<std::size_t>(slots[i])] = static_cast<int>(i);

  Matrix latents(q, cfg.latent_dim());
  for (int r = 0; r < q; ++r) {
    const int obj = out.assignment[static_cast<std::size_t>(r)];
    latents.row(r) = obj >= 0 ? object_latent(cfg, scene.objects[static_cast<std::size_t>(obj)], rng).transpose()
                              : background_latent(cfg, rng).transpose();
  }
  out.features = world.apply(latents);
  return out;
}

void DatasetConfig::validate() const {
  world.validate();
  if (id_scenes < 0) throw ConfigError("dataset.id_scenes: must be >= 0");
  if (!(train_fraction > 0.0 && val_fraction > 0.0 && test_fraction > 0.0)) {
    throw ConfigError("dataset.split: fractions must be positive");
  }
  if (std::abs(train_fraction + val_fraction + test_fraction - 1.0) > 1e-9) {
    throw ConfigError("dataset.split: fractions must sum to 1");
  }
  if (train_regimes.size() != 1 || train_regimes.front() != Regime::in_distribution) {
    throw ConfigError("dataset.train_regimes: training data must be in_distribution only");
  }
  if (near_ood_scenes < 0 || far_ood_scenes < 0 || novel_scenes < 0) {
    throw ConfigError("dataset: eval scene counts must be >= 0");
  }
  if (novel_scenes > 0 && world.held_out_classes.empty()) {
    throw ConfigError("dataset.novel_scenes: requires dataset.held_out_classes");
  }
  if (!world.held_out_classes.empty() && novel_scenes == 0) {
    throw ConfigError("dataset.novel_scenes: held-out classes configured but no novel_class eval scenes requested");
  }
}

SplitSizes split_sizes(const DatasetConfig& cfg) {
  SplitSizes s;
  s.train = static_cast<int>(std::lround(cfg.id_scenes * cfg.train_fraction));
  s.val = static_cast<int>(std::lround(cfg.id_scenes * cfg.val_fraction));
  s.test = cfg.id_scenes - s.train - s.val;
  return s;
}

Split generate_split(const DatasetConfig& cfg, std::uint64_t master_seed, std::string_view split_tag, Regime regime,
                     int count, int threads) {
  const RegimeParams params = regime_params(cfg.world, regime);
  const WorldMap world = make_world(master_seed, regime, cfg.world);
  Split out(static_cast<std::size_t>(std::max(0, count)));
  const std::string tag(split_tag);
  parallel_for(out.size(), threads, [&](std::size_t i) {
    Rng rng(derive_seed(master_seed, tag, i));
    Sample s;
    s.scene = sample_scene(params, rng);
    char id[64];
    std::snprintf(id, sizeof id, "%s-%06zu", tag.c_str(), i);
    s.scene.scene_id = id;
    s.queries = render_queries(s.scene, world, cfg.world, rng);
    out[i] = std::move(s);
  });
  return out;
}

DatasetSplits generate_dataset(const DatasetConfig& cfg, std::uint64_t master_seed, int threads) {
  cfg.validate();
  const SplitSizes sizes = split_sizes(cfg);
  DatasetSplits d;
  d.train = generate_split(cfg, master_seed, "train", Regime::in_distribution, sizes.train, threads);
  d.val = generate_split(cfg, master_seed, "val", Regime::in_distribution, sizes.val, threads);
  d.test_id = generate_split(cfg, master_seed, "test", Regime::in_distribution, sizes.test, threads);
  d.near_ood = generate_split(cfg, master_seed, "near", Regime::near_ood, cfg.near_ood_scenes, threads);
  d.far_ood = generate_split(cfg, master_seed, "far", Regime::far_ood, cfg.far_ood_scenes, threads);
  if (cfg.novel_scenes > 0) {
    d.novel = generate_split(cfg, master_seed, "novel", Regime::novel_class, cfg.novel_scenes, threads);
  }
  return d;
}

double symmetric_kl_diagonal(const Matrix& a, const Matrix& b) {
  if (a.cols() != b.cols()) throw ShapeError("symmetric_kl_diagonal: feature widths differ");
  if (a.rows() < 2 || b.rows() < 2) throw DataError("symmetric_kl_diagonal: need >= 2 rows per set");
  auto fit = [](const Matrix& m) {
    VectorXd mean = m.colwise().mean().transpose();
    VectorXd var = ((m.rowwise() - mean.transpose()).array().square().colwise().sum() / double(m.rows() - 1)).transpose();
    var = var.array().max(1e-12);
    return std::pair{mean, var};
  };
  const auto [ma, va] = fit(a);
  const auto [mb, vb] = fit(b);
  const VectorXd d2 = (ma - mb).array().square();
  // KL(a||b) + KL(b||a) for diagonal Gaussians; log terms cancel.
  const VectorXd terms = 0.5 * ((va.array() / vb.array()) + (vb.array() / va.array()) - 2.0 +
                                d2.array() / vb.array() + d2.array() / va.array());
  return terms.sum();
}

}  // namespace dbea
