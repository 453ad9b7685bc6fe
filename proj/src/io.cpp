#include "dbea/io.hpp"

#include <openssl/evp.h>

#include <cstdio>
#include <cstring>
#include <fstream>
#include <json.hpp>
#include <sstream>

#include "dbea/errors.hpp"

namespace dbea {

using nlohmann::json;

std::string format_double(double v) {
  if (!std::isfinite(v)) throw DataError("cannot serialize non-finite value");
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

std::string sha256_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (EVP_Digest(bytes.data(), bytes.size(), md, &len, EVP_sha256(), nullptr) != 1) {
    throw std::runtime_error("sha256 failed");
  }
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 15];
  }
  return out;
}

std::string read_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw DataError("cannot read " + path.string());
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

std::string sha256_file(const std::filesystem::path& path) { return sha256_hex(read_file(path)); }

void write_file(const std::filesystem::path& path, const std::string& bytes) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw DataError("cannot write " + tmp.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw DataError("write failed for " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

namespace {

std::string quote(const std::string& s) { return json(s).dump(); }

// Calls fn(record, line_number) for every non-blank line; wraps parse and field errors with
// the source and line.
template <typename Fn>
void for_each_line(const std::string& text, const std::string& source, Fn fn) {
  std::istringstream in(text);
  std::string line;
  std::size_t no = 0;
  while (std::getline(in, line)) {
    ++no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    const std::string where = source + ":" + std::to_string(no);
    json rec;
    try {
      rec = json::parse(line);
    } catch (const json::parse_error& e) {
      throw DataError(where + ": malformed JSON at byte " + std::to_string(e.byte) + ": " + e.what());
    }
    try {
      fn(rec);
    } catch (const json::exception& e) {
      throw DataError(where + ": " + e.what());
    } catch (const DataError& e) {
      throw DataError(where + ": " + e.what());
    }
  }
}

double number(const json& v) {
  if (!v.is_number()) throw DataError("expected a number");
  return v.get<double>();
}

Box parse_box(const json& v) {
  if (!v.is_array() || v.size() != 4) throw DataError("box must be [cx, cy, w, h]");
  return {number(v[0]), number(v[1]), number(v[2]), number(v[3])};
}

std::string box_text(const Box& b) {
  return "[" + format_double(b.cx) + "," + format_double(b.cy) + "," + format_double(b.w) + "," + format_double(b.h) + "]";
}

}  // namespace

std::string dump_split(const Split& split) {
  std::string out;
  for (const auto& s : split) {
    out += "{\"scene_id\":" + quote(s.scene.scene_id) + ",\"regime\":" + quote(std::string(to_string(s.scene.regime))) +
           ",\"objects\":[";
    for (std::size_t i = 0; i < s.scene.objects.size(); ++i) {
      const auto& o = s.scene.objects[i];
      out += (i ? "," : "");
      out += "{\"class_id\":" + std::to_string(o.class_id) + ",\"box\":" + box_text(o.box) + "}";
    }
    out += "],\"features\":[";
    const Matrix& f = s.queries.features;
    for (Eigen::Index r = 0; r < f.rows(); ++r) {
      out += (r ? ",[" : "[");
      for (Eigen::Index c = 0; c < f.cols(); ++c) out += (c ? "," : "") + format_double(f(r, c));
      out += "]";
    }
    out += "]}\n";
  }
  return out;
}

Split parse_split(const std::string& text, const std::string& source) {
  Split out;
  for_each_line(text, source, [&](const json& rec) {
    Sample s;
    s.scene.scene_id = rec.at("scene_id").get<std::string>();
    s.scene.regime = parse_regime(rec.at("regime").get<std::string>());
    for (const auto& o : rec.at("objects")) {
      SceneObject obj;
      obj.class_id = o.at("class_id").get<int>();
      obj.box = parse_box(o.at("box"));
      s.scene.objects.push_back(obj);
    }
    const json& f = rec.at("features");
    if (!f.is_array() || f.empty()) throw DataError("features must be a non-empty list of rows");
    const auto cols = f[0].size();
    s.queries.features.resize(static_cast<Eigen::Index>(f.size()), static_cast<Eigen::Index>(cols));
    for (std::size_t r = 0; r < f.size(); ++r) {
      if (!f[r].is_array() || f[r].size() != cols) throw ShapeError("feature rows have unequal length");
      for (std::size_t c = 0; c < cols; ++c) {
        s.queries.features(static_cast<Eigen::Index>(r), static_cast<Eigen::Index>(c)) = number(f[r][c]);
      }
    }
    if (!out.empty() && out.front().queries.features.cols() != s.queries.features.cols()) {
      throw ShapeError("feature width differs from earlier records");
    }
    out.push_back(std::move(s));
  });
  return out;
}

std::vector<ScoreRecord> score_records(const std::vector<SceneEval>& evals, ModelMode mode) {
  std::vector<ScoreRecord> out;
  out.reserve(evals.size());
  for (const auto& e : evals) {
    ScoreRecord r;
    r.scene_id = e.scene_id;
    r.regime = e.regime;
    r.image_usm = e.usm.image_usm;
    r.ood_score = image_ood_score(e, mode);
    for (std::size_t i = 0; i < e.usm.per_object.size(); ++i) {
      const auto& o = e.usm.per_object[i];
      r.per_object.push_back({o.index, o.usm, o.confidence, object_ood_score(e, i, mode)});
    }
    out.push_back(std::move(r));
  }
  return out;
}

std::string dump_scores(const std::vector<ScoreRecord>& records) {
  std::string out;
  for (const auto& r : records) {
    out += "{\"scene_id\":" + quote(r.scene_id) + ",\"regime\":" + quote(std::string(to_string(r.regime))) +
           ",\"image_usm\":" + format_double(r.image_usm) + ",\"ood_score\":" + format_double(r.ood_score) +
           ",\"per_object\":[";
    for (std::size_t i = 0; i < r.per_object.size(); ++i) {
      const auto& o = r.per_object[i];
      out += (i ? "," : "");
      out += "{\"index\":" + std::to_string(o.index) + ",\"usm\":" + format_double(o.usm) +
             ",\"confidence\":" + format_double(o.confidence) + ",\"ood_score\":" + format_double(o.ood_score) + "}";
    }
    out += "]}\n";
  }
  return out;
}

std::vector<ScoreRecord> parse_scores(const std::string& text, const std::string& source) {
  std::vector<ScoreRecord> out;
  for_each_line(text, source, [&](const json& rec) {
    ScoreRecord r;
    r.scene_id = rec.at("scene_id").get<std::string>();
    r.regime = parse_regime(rec.at("regime").get<std::string>());
    r.image_usm = number(rec.at("image_usm"));
    r.ood_score = rec.contains("ood_score") ? number(rec.at("ood_score")) : r.image_usm;
    for (const auto& o : rec.at("per_object")) {
      ScoreRecord::Object obj;
      obj.index = o.at("index").get<int>();
      obj.usm = number(o.at("usm"));
      obj.confidence = number(o.at("confidence"));
      obj.ood_score = o.contains("ood_score") ? number(o.at("ood_score")) : obj.usm;
      r.per_object.push_back(obj);
    }
    out.push_back(std::move(r));
  });
  return out;
}

std::string dump_detections(const std::vector<DetectionRecord>& records) {
  std::string out;
  for (const auto& d : records) {
    out += "{\"scene_id\":" + quote(d.scene_id) + ",\"box\":" + box_text(d.box) + ",\"label\":" + std::to_string(d.label) +
           ",\"confidence\":" + format_double(d.confidence) + ",\"matched_gt\":" + std::to_string(d.matched_gt) +
           ",\"iou\":" + format_double(d.iou) + ",\"class_match\":" + (d.class_match ? "true" : "false") + "}\n";
  }
  return out;
}

std::vector<DetectionRecord> parse_detections(const std::string& text, const std::string& source) {
  std::vector<DetectionRecord> out;
  for_each_line(text, source, [&](const json& rec) {
    DetectionRecord d;
    d.scene_id = rec.at("scene_id").get<std::string>();
    d.box = parse_box(rec.at("box"));
    d.label = rec.at("label").get<int>();
    d.confidence = number(rec.at("confidence"));
    d.matched_gt = rec.at("matched_gt").get<int>();
    d.iou = number(rec.at("iou"));
    d.class_match = rec.at("class_match").get<bool>();
    out.push_back(d);
  });
  return out;
}

// ---------------------------------------------------------------------------------------------
// Checkpoints

namespace {

constexpr char magic[8] = {'D', 'B', 'E', 'A', 'C', 'K', 'P', 'T'};

void put_u32(std::string& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

void put_f64(std::string& out, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, sizeof bits);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

class Reader {
 public:
  Reader(const std::string& bytes, std::size_t end) : bytes_(bytes), end_(end) {}

  void need(std::size_t n) const {
    if (pos_ + n > end_) throw DataError("checkpoint truncated");
  }
  std::uint32_t u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 4;
    return v;
  }
  double f64() {
    need(8);
    std::uint64_t bits = 0;
    for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes_[pos_ + i])) << (8 * i);
    pos_ += 8;
    double v;
    std::memcpy(&v, &bits, sizeof v);
    return v;
  }
  std::string str(std::size_t n) {
    need(n);
    std::string s = bytes_.substr(pos_, n);
    pos_ += n;
    return s;
  }
  std::size_t pos() const { return pos_; }

 private:
  const std::string& bytes_;
  std::size_t end_;
  std::size_t pos_ = 0;
};

json config_json(const ModelConfig& c) {
  // Field order is fixed so identical configs serialize identically.
  json j = json::object();
  j["feature_dim"] = c.feature_dim;
  j["trunk_hidden"] = c.trunk_hidden;
  j["embed_dim"] = c.embed_dim;
  j["head_hidden"] = c.head_hidden;
  j["num_classes"] = c.num_classes;
  j["queries"] = c.queries;
  j["top_k"] = c.top_k;
  j["mode"] = std::string(to_string(c.mode));
  return j;
}

ModelConfig config_from_json(const json& j) {
  ModelConfig c;
  c.feature_dim = j.at("feature_dim").get<int>();
  c.trunk_hidden = j.at("trunk_hidden").get<int>();
  c.embed_dim = j.at("embed_dim").get<int>();
  c.head_hidden = j.at("head_hidden").get<int>();
  c.num_classes = j.at("num_classes").get<int>();
  c.queries = j.at("queries").get<int>();
  c.top_k = j.at("top_k").get<int>();
  c.mode = parse_mode(j.at("mode").get<std::string>());
  return c;
}

std::string describe(const ModelConfig& c) { return config_json(c).dump(); }

}  // namespace

std::string encode_checkpoint(const TandemParams& params) {
  std::string out(magic, sizeof magic);
  put_u32(out, checkpoint_format_version);
  const std::string header = config_json(params.config).dump();
  put_u32(out, static_cast<std::uint32_t>(header.size()));
  out += header;

  const auto groups = params.groups();
  const auto names = params.group_names();
  std::uint32_t count = 0;
  for (const auto& g : groups) count += static_cast<std::uint32_t>(2 * g.layers.size());
  put_u32(out, count);
  auto put_array = [&](const std::string& name, const Matrix& m) {
    put_u32(out, static_cast<std::uint32_t>(name.size()));
    out += name;
    put_u32(out, static_cast<std::uint32_t>(m.rows()));
    put_u32(out, static_cast<std::uint32_t>(m.cols()));
    // Row-major storage, so data() walks rows in order.
    for (Eigen::Index i = 0; i < m.size(); ++i) put_f64(out, m.data()[i]);
  };
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t l = 0; l < groups[g].layers.size(); ++l) {
      const auto& layer = groups[g].layers[l];
      const std::string base = names[g] + "." + std::to_string(l);
      put_array(base + ".weight", layer.weight);
      put_array(base + ".bias", Matrix(layer.bias.transpose()));
    }
  }
  const std::string digest = sha256_hex(out);
  for (std::size_t i = 0; i < digest.size(); i += 2) {
    out.push_back(static_cast<char>(std::stoi(digest.substr(i, 2), nullptr, 16)));
  }
  return out;
}

TandemParams decode_checkpoint(const std::string& bytes, const std::optional<ModelConfig>& expected) {
  constexpr std::size_t digest_len = 32;
  if (bytes.size() < sizeof magic + digest_len || bytes.compare(0, sizeof magic, magic, sizeof magic) != 0) {
    throw DataError("not a checkpoint file (bad magic or truncated)");
  }
  const std::size_t body = bytes.size() - digest_len;
  std::string stored;
  for (std::size_t i = body; i < bytes.size(); ++i) {
    static const char* hex = "0123456789abcdef";
    const auto b = static_cast<unsigned char>(bytes[i]);
    stored += hex[b >> 4];
    stored += hex[b & 15];
  }
  Reader rd(bytes, body);
  rd.str(sizeof magic);
  const std::uint32_t version = rd.u32();
  if (version != checkpoint_format_version) {
    throw DataError("checkpoint format version " + std::to_string(version) + " is not supported (expected " +
                    std::to_string(checkpoint_format_version) + ")");
  }
  if (sha256_hex(bytes.substr(0, body)) != stored) throw DataError("checkpoint digest mismatch (truncated or corrupted)");

  ModelConfig cfg;
  try {
    cfg = config_from_json(json::parse(rd.str(rd.u32())));
    cfg.validate();
  } catch (const json::exception& e) {
    throw DataError(std::string("checkpoint header unreadable: ") + e.what());
  } catch (const ConfigError& e) {
    throw DataError(std::string("checkpoint header invalid: ") + e.what());
  }
  if (expected && !(*expected == cfg)) {
    throw ShapeError("checkpoint was written for model " + describe(cfg) + " but " + describe(*expected) + " was requested");
  }

  TandemParams params = init_params(cfg, 0);
  auto groups = params.groups();
  const auto names = params.group_names();
  std::uint32_t want = 0;
  for (const auto& g : groups) want += static_cast<std::uint32_t>(2 * g.layers.size());
  const std::uint32_t count = rd.u32();
  if (count != want) {
    throw ShapeError("checkpoint holds " + std::to_string(count) + " arrays, architecture needs " + std::to_string(want));
  }
  auto read_array = [&](const std::string& name, Eigen::Index rows, Eigen::Index cols) {
    const std::string got = rd.str(rd.u32());
    if (got != name) throw ShapeError("checkpoint array '" + got + "' found where '" + name + "' was expected");
    const auto r = rd.u32(), c = rd.u32();
    if (r != rows || c != cols) {
      throw ShapeError("checkpoint array " + name + " is " + std::to_string(r) + "x" + std::to_string(c) + ", expected " +
                       shape_str(rows, cols));
    }
    Matrix m(rows, cols);
    for (Eigen::Index i = 0; i < m.size(); ++i) m.data()[i] = rd.f64();
    return m;
  };
  for (std::size_t g = 0; g < groups.size(); ++g) {
    for (std::size_t l = 0; l < groups[g].layers.size(); ++l) {
      auto& layer = groups[g].layers[l];
      const std::string base = names[g] + "." + std::to_string(l);
      layer.weight = read_array(base + ".weight", layer.weight.rows(), layer.weight.cols());
      layer.bias = read_array(base + ".bias", 1, layer.bias.size()).row(0).transpose();
    }
  }
  if (rd.pos() != body) throw DataError("checkpoint has trailing bytes before the digest");
  params.set_groups(groups);
  return params;
}

void save_checkpoint(const TandemParams& params, const std::filesystem::path& path) {
  write_file(path, encode_checkpoint(params));
}

TandemParams load_checkpoint(const std::filesystem::path& path, const std::optional<ModelConfig>& expected) {
  return decode_checkpoint(read_file(path), expected);
}

}  // namespace dbea
