#include "dbea/config.hpp"

#include <yaml-cpp/yaml.h>

#include <fstream>
#include <set>
#include <sstream>

#include "dbea/errors.hpp"

namespace dbea {

namespace {

// One mapping in the document. Reads are recorded so leftovers can be reported as unknown keys.
class Section {
 public:
  Section(YAML::Node node, std::string path) : node_(std::move(node)), path_(std::move(path)) {
    if (node_ && !node_.IsNull() && !node_.IsMap()) throw ConfigError(label() + ": expected a mapping");
  }

  template <typename T>
  void get(const std::string& key, T& out) {
    seen_.insert(key);
    if (!node_ || node_.IsNull()) return;
    const YAML::Node v = node_[key];
    if (!v || v.IsNull()) return;
    read(v, key, out);
  }

  Section child(const std::string& key) {
    seen_.insert(key);
    YAML::Node v;
    if (node_ && node_.IsMap()) v = node_[key];
    return Section(v, join(key));
  }

  void finish() const {
    if (!node_ || !node_.IsMap()) return;
    for (const auto& kv : node_) {
      const auto key = kv.first.as<std::string>();
      if (!seen_.count(key)) throw ConfigError(join(key) + ": unknown key");
    }
  }

 private:
  std::string join(const std::string& key) const { return path_.empty() ? key : path_ + "." + key; }
  std::string label() const { return path_.empty() ? "<root>" : path_; }

  template <typename T>
  T scalar(const YAML::Node& v, const std::string& key, const char* type) const {
    if (!v.IsScalar()) throw ConfigError(join(key) + ": expected " + type);
    try {
      return v.as<T>();
    } catch (const YAML::Exception&) {
      throw ConfigError(join(key) + ": expected " + type + ", got '" + v.Scalar() + "'");
    }
  }

  void read(const YAML::Node& v, const std::string& key, int& out) const { out = scalar<int>(v, key, "an integer"); }
  void read(const YAML::Node& v, const std::string& key, double& out) const {
    out = scalar<double>(v, key, "a number");
  }
  void read(const YAML::Node& v, const std::string& key, bool& out) const { out = scalar<bool>(v, key, "true/false"); }
  void read(const YAML::Node& v, const std::string& key, std::string& out) const {
    out = scalar<std::string>(v, key, "a string");
  }
  void read(const YAML::Node& v, const std::string& key, std::uint64_t& out) const {
    out = scalar<std::uint64_t>(v, key, "a non-negative integer");
  }
  void read(const YAML::Node& v, const std::string& key, Interval& out) const {
    if (!v.IsSequence() || v.size() != 2) throw ConfigError(join(key) + ": expected [lo, hi]");
    out.lo = scalar<double>(v[0], key, "a number");
    out.hi = scalar<double>(v[1], key, "a number");
  }
  template <typename T>
  void read(const YAML::Node& v, const std::string& key, std::vector<T>& out) const {
    if (!v.IsSequence()) throw ConfigError(join(key) + ": expected a list");
    out.clear();
    for (const auto& item : v) {
      T x{};
      read(item, key, x);
      out.push_back(x);
    }
  }
  void read(const YAML::Node& v, const std::string& key, Regime& out) const {
    try {
      out = parse_regime(scalar<std::string>(v, key, "a regime name"));
    } catch (const DataError& e) {
      throw ConfigError(join(key) + ": " + e.what());
    }
  }
  void read(const YAML::Node& v, const std::string& key, ModelMode& out) const {
    try {
      out = parse_mode(scalar<std::string>(v, key, "a mode name"));
    } catch (const Error& e) {
      throw ConfigError(join(key) + ": " + e.what());
    }
  }

  YAML::Node node_;
  std::string path_;
  std::set<std::string> seen_;
};

void read_dataset(Section s, DatasetConfig& d) {
  WorldConfig& w = d.world;
  s.get("num_classes", w.num_classes);
  s.get("queries", w.queries);
  s.get("feature_dim", w.feature_dim);
  s.get("map_hidden", w.map_hidden);
  s.get("noise_dims", w.noise_dims);
  s.get("noise_sigma", w.noise_sigma);
  s.get("map_gain", w.map_gain);
  s.get("far_map_gain", w.far_map_gain);
  s.get("min_objects", w.min_objects);
  s.get("max_objects", w.max_objects);
  s.get("min_size", w.min_size);
  s.get("id_width", w.id_width);
  s.get("id_height", w.id_height);
  s.get("near_shift", w.near_shift);
  s.get("near_class_prior", w.near_class_prior);
  s.get("held_out_classes", w.held_out_classes);
  s.get("novel_sibling", w.novel_sibling);
  s.get("novel_similarity", w.novel_similarity);

  s.get("id_scenes", d.id_scenes);
  std::vector<double> split{d.train_fraction, d.val_fraction, d.test_fraction};
  s.get("split", split);
  if (split.size() != 3) throw ConfigError("dataset.split: expected [train, val, test]");
  d.train_fraction = split[0];
  d.val_fraction = split[1];
  d.test_fraction = split[2];
  s.get("train_regimes", d.train_regimes);
  s.get("near_ood_scenes", d.near_ood_scenes);
  s.get("far_ood_scenes", d.far_ood_scenes);
  s.get("novel_scenes", d.novel_scenes);
  s.finish();
}

std::string seq(const std::vector<double>& v) {
  std::ostringstream os;
  os.precision(17);
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

std::string seq(const std::vector<int>& v) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? ", " : "") << v[i];
  os << ']';
  return os.str();
}

}  // namespace

ModelConfig RunConfig::model_for(ModelMode mode) const {
  ModelConfig m = model;
  m.feature_dim = dataset.world.feature_dim;
  m.num_classes = dataset.world.num_classes;
  m.queries = dataset.world.queries;
  m.mode = mode;
  if (mode == ModelMode::vanilla) m.trunk_hidden = baseline_trunk_hidden;
  return m;
}

void RunConfig::validate() const {
  dataset.validate();
  model_for(model.mode).validate();
  if (baseline_trunk_hidden < 1) throw ConfigError("baseline.trunk_hidden: must be >= 1");
  training.loss.validate();
  const auto& o = training.optimizer;
  if (!(o.learning_rate > 0.0)) throw ConfigError("optimizer.learning_rate: must be > 0");
  if (!(o.weight_decay >= 0.0)) throw ConfigError("optimizer.weight_decay: must be >= 0");
  if (!(o.beta1 >= 0.0 && o.beta1 < 1.0)) throw ConfigError("optimizer.beta1: must lie in [0, 1)");
  if (!(o.beta2 >= 0.0 && o.beta2 < 1.0)) throw ConfigError("optimizer.beta2: must lie in [0, 1)");
  if (!(o.eps > 0.0)) throw ConfigError("optimizer.eps: must be > 0");
  if (training.epochs < 0) throw ConfigError("training.epochs: must be >= 0");
  if (training.batch_size < 1) throw ConfigError("training.batch_size: must be >= 1");
  if (training.tandem_delay_epochs < 0) throw ConfigError("training.tandem_delay_epochs: must be >= 0");
  if (training.tandem_ramp_epochs < 0) throw ConfigError("training.tandem_ramp_epochs: must be >= 0");
  if (out_dir.empty()) throw ConfigError("out_dir: must not be empty");
}

RunConfig parse_config(const std::string& text) {
  YAML::Node root;
  try {
    root = YAML::Load(text);
  } catch (const YAML::ParserException& e) {
    throw ConfigError(std::string("config does not parse: ") + e.what());
  }
  RunConfig c;
  Section s(root, "");
  s.get("seed", c.seed);
  s.get("out_dir", c.out_dir);
  read_dataset(s.child("dataset"), c.dataset);

  Section m = s.child("model");
  m.get("mode", c.model.mode);
  m.get("trunk_hidden", c.model.trunk_hidden);
  m.get("embed_dim", c.model.embed_dim);
  m.get("head_hidden", c.model.head_hidden);
  m.get("top_k", c.model.top_k);
  m.finish();

  Section b = s.child("baseline");
  b.get("trunk_hidden", c.baseline_trunk_hidden);
  b.finish();

  Section l = s.child("loss");
  LossWeights& w = c.training.loss;
  l.get("lambda_ta", w.lambda_ta);
  l.get("lambda_tq", w.lambda_tq);
  l.get("lambda_div", w.lambda_div);
  l.get("w_cls", w.w_cls);
  l.get("w_l1", w.w_l1);
  l.get("w_giou", w.w_giou);
  l.get("epsilon_tq", w.epsilon_tq);
  l.finish();

  Section o = s.child("optimizer");
  o.get("learning_rate", c.training.optimizer.learning_rate);
  o.get("weight_decay", c.training.optimizer.weight_decay);
  o.get("beta1", c.training.optimizer.beta1);
  o.get("beta2", c.training.optimizer.beta2);
  o.get("eps", c.training.optimizer.eps);
  o.finish();

  Section t = s.child("training");
  t.get("epochs", c.training.epochs);
  t.get("batch_size", c.training.batch_size);
  t.get("tandem_delay_epochs", c.training.tandem_delay_epochs);
  t.get("tandem_ramp_epochs", c.training.tandem_ramp_epochs);
  t.finish();

  Section mon = s.child("monitor");
  mon.get("outer_root", c.monitor.outer_root);
  mon.finish();
  s.finish();

  c.training.seed = c.seed;
  c.model = c.model_for(c.model.mode);
  c.validate();
  return c;
}

RunConfig load_config(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw ConfigError("cannot read config file " + path);
  std::ostringstream buf;
  buf << in.rdbuf();
  return parse_config(buf.str());
}

std::string dump_config(const RunConfig& c) {
  std::ostringstream os;
  os.precision(17);
  const WorldConfig& w = c.dataset.world;
  const auto interval = [](const Interval& iv) { return seq(std::vector<double>{iv.lo, iv.hi}); };
  os << "seed: " << c.seed << "\n";
  os << "out_dir: \"" << c.out_dir << "\"\n";
  os << "dataset:\n"
     << "  num_classes: " << w.num_classes << "\n"
     << "  queries: " << w.queries << "\n"
     << "  feature_dim: " << w.feature_dim << "\n"
     << "  map_hidden: " << w.map_hidden << "\n"
     << "  noise_dims: " << w.noise_dims << "\n"
     << "  noise_sigma: " << w.noise_sigma << "\n"
     << "  map_gain: " << w.map_gain << "\n"
     << "  far_map_gain: " << w.far_map_gain << "\n"
     << "  min_objects: " << w.min_objects << "\n"
     << "  max_objects: " << w.max_objects << "\n"
     << "  min_size: " << w.min_size << "\n"
     << "  id_width: " << interval(w.id_width) << "\n"
     << "  id_height: " << interval(w.id_height) << "\n"
     << "  near_shift: " << w.near_shift << "\n"
     << "  near_class_prior: " << seq(w.near_class_prior) << "\n"
     << "  held_out_classes: " << seq(w.held_out_classes) << "\n"
     << "  novel_sibling: " << w.novel_sibling << "\n"
     << "  novel_similarity: " << w.novel_similarity << "\n"
     << "  id_scenes: " << c.dataset.id_scenes << "\n"
     << "  split: " << seq(std::vector<double>{c.dataset.train_fraction, c.dataset.val_fraction, c.dataset.test_fraction})
     << "\n"
     << "  train_regimes: [";
  for (std::size_t i = 0; i < c.dataset.train_regimes.size(); ++i) {
    os << (i ? ", " : "") << to_string(c.dataset.train_regimes[i]);
  }
  os << "]\n"
     << "  near_ood_scenes: " << c.dataset.near_ood_scenes << "\n"
     << "  far_ood_scenes: " << c.dataset.far_ood_scenes << "\n"
     << "  novel_scenes: " << c.dataset.novel_scenes << "\n";
  os << "model:\n"
     << "  mode: " << to_string(c.model.mode) << "\n"
     << "  trunk_hidden: " << c.model.trunk_hidden << "\n"
     << "  embed_dim: " << c.model.embed_dim << "\n"
     << "  head_hidden: " << c.model.head_hidden << "\n"
     << "  top_k: " << c.model.top_k << "\n";
  os << "baseline:\n  trunk_hidden: " << c.baseline_trunk_hidden << "\n";
  const LossWeights& l = c.training.loss;
  os << "loss:\n"
     << "  lambda_ta: " << l.lambda_ta << "\n"
     << "  lambda_tq: " << l.lambda_tq << "\n"
     << "  lambda_div: " << l.lambda_div << "\n"
     << "  w_cls: " << l.w_cls << "\n"
     << "  w_l1: " << l.w_l1 << "\n"
     << "  w_giou: " << l.w_giou << "\n"
     << "  epsilon_tq: " << l.epsilon_tq << "\n";
  const AdamWSettings& o = c.training.optimizer;
  os << "optimizer:\n"
     << "  learning_rate: " << o.learning_rate << "\n"
     << "  weight_decay: " << o.weight_decay << "\n"
     << "  beta1: " << o.beta1 << "\n"
     << "  beta2: " << o.beta2 << "\n"
     << "  eps: " << o.eps << "\n";
  os << "training:\n"
     << "  epochs: " << c.training.epochs << "\n"
     << "  batch_size: " << c.training.batch_size << "\n"
     << "  tandem_delay_epochs: " << c.training.tandem_delay_epochs << "\n"
     << "  tandem_ramp_epochs: " << c.training.tandem_ramp_epochs << "\n";
  os << "monitor:\n  outer_root: " << (c.monitor.outer_root ? "true" : "false") << "\n";
  return os.str();
}

}  // namespace dbea
