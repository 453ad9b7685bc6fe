#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dbea/box.hpp"
#include "dbea/rng.hpp"
#include "dbea/tensor.hpp"

namespace dbea {

enum class Regime { in_distribution, near_ood, far_ood, novel_class };

std::string_view to_string(Regime r);
Regime parse_regime(std::string_view s);

struct Interval {
  double lo = 0.0;
  double hi = 0.0;
  bool contains(double v) const { return v >= lo && v <= hi; }
  bool overlaps(const Interval& o) const { return lo <= o.hi && o.lo <= hi; }
  friend bool operator==(const Interval&, const Interval&) = default;
};

// Generator settings shared by every regime. Near-OOD reuses the in-distribution world map with
// shifted box sizes and class priors; far-OOD renders the same kind of scenes through an
// independently drawn map.
struct WorldConfig {
  int num_classes = 5;
  int queries = 25;
  int feature_dim = 32;
  int map_hidden = 64;
  int noise_dims = 4;
  double noise_sigma = 0.05;
  double map_gain = 1.5;
  double far_map_gain = 1.5;

  // Dense scenes: with most queries owning an object the matching settles within the delay.
  int min_objects = 18;
  int max_objects = 24;
  double min_size = 0.02;

  Interval id_width{0.08, 0.22};
  Interval id_height{0.08, 0.22};
  // Near-OOD size intervals are the ID intervals translated by this amount.
  double near_shift = 0.01;
  std::vector<double> near_class_prior{0.4, 0.3, 0.15, 0.1, 0.05};

  // Classes never present in training scenes. A held-out class may borrow the latent code of a
  // trained sibling: code = (1 - similarity) * e_class + similarity * e_sibling.
  std::vector<int> held_out_classes;
  int novel_sibling = -1;
  double novel_similarity = 0.0;

  int latent_dim() const { return num_classes + 4 + noise_dims; }
  Interval near_width() const { return {id_width.lo + near_shift, id_width.hi + near_shift}; }
  Interval near_height() const { return {id_height.lo + near_shift, id_height.hi + near_shift}; }
  bool is_held_out(int cls) const;

  // Throws ConfigError naming the offending field.
  void validate() const;
};

struct SceneObject {
  int class_id = 0;
  Box box;
  friend bool operator==(const SceneObject&, const SceneObject&) = default;
};

struct Scene {
  std::string scene_id;
  Regime regime = Regime::in_distribution;
  std::vector<SceneObject> objects;
};

// Sampling distribution for one regime.
struct RegimeParams {
  Regime kind = Regime::in_distribution;
  int num_classes = 5;
  std::vector<double> class_prior;   // unnormalized weights, zero for excluded classes
  std::vector<int> required_classes;  // scene must contain >= 1 of these (novel eval)
  Interval width;
  Interval height;
  int min_objects = 0;
  int max_objects = 0;
  double min_size = 0.0;
};

// `for_training` removes held-out classes; the novel-class regime otherwise forces at least one
// held-out object into every scene.
RegimeParams regime_params(const WorldConfig& cfg, Regime kind);

// Frozen random map latent -> feature: tanh(W2 tanh(W1 z + b1) + b2).
struct WorldMap {
  std::uint64_t seed = 0;
  Matrix w1;
  VectorXd b1;
  Matrix w2;
  VectorXd b2;

  int feature_dim() const { return static_cast<int>(w2.cols()); }
  int latent_dim() const { return static_cast<int>(w1.rows()); }
  Matrix apply(const Matrix& latents) const;
};

WorldMap make_world(std::uint64_t seed, Regime regime, const WorldConfig& cfg);

Scene sample_scene(const RegimeParams& params, Rng& rng);

struct QueryFeatures {
  Matrix features;              // Q x feature_dim
  std::vector<int> assignment;  // per query: object index or -1. Never visible to the model.
};

// Latent for one object: class code, box, Gaussian noise dims.
VectorXd object_latent(const WorldConfig& cfg, const SceneObject& obj, Rng& rng);
VectorXd background_latent(const WorldConfig& cfg, Rng& rng);

QueryFeatures render_queries(const Scene& scene, const WorldMap& world, const WorldConfig& cfg, Rng& rng);

struct Sample {
  Scene scene;
  QueryFeatures queries;
};

using Split = std::vector<Sample>;

struct DatasetConfig {
  WorldConfig world;
  int id_scenes = 2667;
  double train_fraction = 0.75;
  double val_fraction = 0.10;
  double test_fraction = 0.15;
  std::vector<Regime> train_regimes{Regime::in_distribution};
  int near_ood_scenes = 400;
  int far_ood_scenes = 400;
  int novel_scenes = 0;

  void validate() const;
};

struct SplitSizes {
  int train = 0, val = 0, test = 0;
};
SplitSizes split_sizes(const DatasetConfig& cfg);

struct DatasetSplits {
  Split train;
  Split val;
  Split test_id;
  Split near_ood;
  Split far_ood;
  Split novel;
};

// Every scene derives its own seed from (master seed, split, index) so generation can run in
// parallel and still match serial output exactly.
DatasetSplits generate_dataset(const DatasetConfig& cfg, std::uint64_t master_seed, int threads = 1);

// One split, scenes [0, count) of the given regime stream.
Split generate_split(const DatasetConfig& cfg, std::uint64_t master_seed, std::string_view split_tag, Regime regime,
                     int count, int threads = 1);

// Symmetric KL divergence between diagonal-Gaussian fits of two feature sets.
double symmetric_kl_diagonal(const Matrix& a, const Matrix& b);

}  // namespace dbea
