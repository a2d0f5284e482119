#include "reflprior/config.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>

#include "reflprior/error.hpp"

namespace reflprior {

namespace {

class Reader {
 public:
  explicit Reader(const std::string& source) : source_(source) {}

  [[noreturn]] void fail(const std::string& pointer, const std::string& message) const {
    const int line = locate_line(source_, pointer);
    std::string what = (pointer.empty() ? std::string("/") : pointer) + ": " + message;
    if (line > 0) what += " (line " + std::to_string(line) + ")";
    throw ConfigError(what, pointer, line);
  }

  void object(const Json& j, const std::string& ptr, std::initializer_list<const char*> allowed) const {
    if (!j.is_object()) fail(ptr, "expected an object");
    const std::set<std::string> ok(allowed.begin(), allowed.end());
    for (const auto& [key, value] : j.items())
      if (!ok.count(key)) fail(ptr + "/" + key, "unknown field");
  }

  double number(const Json& j, const std::string& ptr, const char* key, double fallback,
                bool required = false) const {
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) fail(ptr + "/" + key, "missing required field");
      return fallback;
    }
    if (!it->is_number()) fail(ptr + "/" + key, "expected a number");
    return it->get<double>();
  }

  long long integer(const Json& j, const std::string& ptr, const char* key, long long fallback,
                    bool required = false) const {
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) fail(ptr + "/" + key, "missing required field");
      return fallback;
    }
    if (!it->is_number_integer()) fail(ptr + "/" + key, "expected an integer");
    return it->get<long long>();
  }

  std::string string(const Json& j, const std::string& ptr, const char* key,
                     const std::string& fallback, bool required = false) const {
    const auto it = j.find(key);
    if (it == j.end()) {
      if (required) fail(ptr + "/" + key, "missing required field");
      return fallback;
    }
    if (!it->is_string()) fail(ptr + "/" + key, "expected a string");
    return it->get<std::string>();
  }

  bool boolean(const Json& j, const std::string& ptr, const char* key, bool fallback) const {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (!it->is_boolean()) fail(ptr + "/" + key, "expected true or false");
    return it->get<bool>();
  }

  // [lo, hi] pair or a single number meaning lo == hi.
  std::pair<double, double> range(const Json& j, const std::string& ptr, const char* key,
                                  std::pair<double, double> fallback) const {
    const auto it = j.find(key);
    if (it == j.end()) return fallback;
    if (it->is_number()) return {it->get<double>(), it->get<double>()};
    if (!it->is_array() || it->size() != 2 || !(*it)[0].is_number() || !(*it)[1].is_number())
      fail(ptr + "/" + key, "expected a number or a [low, high] pair");
    const double lo = (*it)[0].get<double>(), hi = (*it)[1].get<double>();
    if (lo > hi) fail(ptr + "/" + key, "low end exceeds high end");
    return {lo, hi};
  }

  // Runs a validate() call and maps InvalidInput to a ConfigError at ptr.
  template <typename F>
  void check(const std::string& ptr, F&& f) const {
    try {
      f();
    } catch (const InvalidInput& ex) {
      fail(ptr, ex.what());
    }
  }

 private:
  const std::string& source_;
};

}  // namespace

int locate_line(const std::string& source, const std::string& pointer) {
  if (source.empty() || pointer.empty()) return 0;
  std::size_t pos = 0;
  std::size_t start = 1;
  bool found_any = false;
  while (start <= pointer.size()) {
    std::size_t end = pointer.find('/', start);
    if (end == std::string::npos) end = pointer.size();
    const std::string token = pointer.substr(start, end - start);
    start = end + 1;
    if (!token.empty() && std::all_of(token.begin(), token.end(), ::isdigit)) continue;
    const std::string quoted = "\"" + token + "\"";
    std::size_t hit = pos;
    for (;;) {
      hit = source.find(quoted, hit);
      if (hit == std::string::npos) break;
      std::size_t after = hit + quoted.size();
      while (after < source.size() && std::isspace(static_cast<unsigned char>(source[after]))) ++after;
      if (after < source.size() && source[after] == ':') break;
      hit += quoted.size();
    }
    if (hit == std::string::npos) break;
    pos = hit;
    found_any = true;
  }
  if (!found_any) return 0;
  return 1 + static_cast<int>(std::count(source.begin(), source.begin() + long(pos), '\n'));
}

Json to_json(const ParamDescriptor& d) {
  return {{"name", d.name},
          {"unit", d.unit},
          {"kind", to_string(d.kind)},
          {"range", {d.global_min, d.global_max}},
          {"width_range", {d.width_min, d.width_max}}};
}

Json to_json(const ModelSpec& spec) {
  Json params = Json::array();
  for (const auto& d : spec.descriptors) params.push_back(to_json(d));
  Json j = {{"name", spec.name},
            {"kind", spec.kind == ModelKind::box ? "box" : "multilayer"},
            {"ambient_sld", spec.ambient_sld},
            {"parameters", params}};
  if (spec.kind == ModelKind::box) j["n_layers"] = spec.n_layers;
  return j;
}

Json to_json(const NoiseConfig& cfg) {
  return {{"q_jitter", cfg.q_jitter},
          {"counts", {cfg.counts_min, cfg.counts_max}},
          {"scale", cfg.scale},
          {"log_shift", cfg.log_shift}};
}

Json to_json(const DiscretizationSpec& cfg) {
  return {{"n_points", {cfg.n_points_min, cfg.n_points_max}},
          {"q_min", {cfg.q_min_lo, cfg.q_min_hi}},
          {"q_max", {cfg.q_max_lo, cfg.q_max_hi}}};
}

Json to_json(const nn::NetworkConfig& cfg) {
  Json j = {{"embedding", nn::to_string(cfg.embedding)},
            {"dim_hidden", cfg.mlp.dim_hidden},
            {"n_blocks", cfg.mlp.n_blocks}};
  if (cfg.embedding == nn::EmbeddingKind::cnn)
    j["cnn"] = {{"channels", cfg.cnn.channels},
                {"pool_size", cfg.cnn.pool_size},
                {"dim_emb", cfg.cnn.dim_emb}};
  else
    j["fno"] = {{"channels", cfg.fno.channels},
                {"n_blocks", cfg.fno.n_blocks},
                {"n_modes", cfg.fno.n_modes},
                {"dim_emb", cfg.fno.dim_emb},
                {"q_scale", cfg.fno.q_scale}};
  return j;
}

Json to_json(const nn::AdamWConfig& cfg) {
  return {{"lr", cfg.lr},
          {"beta1", cfg.beta1},
          {"beta2", cfg.beta2},
          {"eps", cfg.eps},
          {"weight_decay", cfg.weight_decay}};
}

Json to_json(const nn::PlateauConfig& cfg) {
  return {{"factor", cfg.factor},
          {"patience", cfg.patience},
          {"rel_threshold", cfg.rel_threshold},
          {"cooldown", cfg.cooldown},
          {"min_lr", cfg.min_lr}};
}

Json to_json(const TrainConfig& cfg) {
  return {{"model", to_json(cfg.spec)},
          {"network", to_json(cfg.network)},
          {"discretization", to_json(cfg.discretization)},
          {"noise", to_json(cfg.noise)},
          {"batch_size", cfg.batch_size},
          {"max_steps", cfg.max_steps},
          {"eval_period", cfg.eval_period},
          {"seed", cfg.seed},
          {"optimizer", to_json(cfg.optimizer)},
          {"scheduler", to_json(cfg.scheduler)},
          {"prefetch", cfg.prefetch},
          {"output",
           {{"checkpoint", cfg.checkpoint_path},
            {"metrics", cfg.metrics_path},
            {"checkpoint_period", cfg.checkpoint_period}}}};
}

ModelSpec model_spec_from_json(const Json& j, const std::string& source,
                               const std::string& pointer) {
  Reader r(source);
  if (j.is_string()) {
    ModelSpec spec;
    r.check(pointer, [&] { spec = preset_spec(j.get<std::string>()); });
    return spec;
  }
  r.object(j, pointer, {"name", "kind", "n_layers", "ambient_sld", "parameters"});
  ModelSpec spec;
  spec.name = r.string(j, pointer, "name", "custom");
  const std::string kind = r.string(j, pointer, "kind", "box");
  if (kind == "box")
    spec.kind = ModelKind::box;
  else if (kind == "multilayer")
    spec.kind = ModelKind::multilayer;
  else
    r.fail(pointer + "/kind", "expected \"box\" or \"multilayer\"");
  spec.n_layers = static_cast<int>(r.integer(j, pointer, "n_layers", 0));
  spec.ambient_sld = r.number(j, pointer, "ambient_sld", 0.0);
  const auto it = j.find("parameters");
  if (it == j.end() || !it->is_array()) r.fail(pointer + "/parameters", "expected an array");
  for (std::size_t i = 0; i < it->size(); ++i) {
    const std::string p = pointer + "/parameters/" + std::to_string(i);
    const Json& e = (*it)[i];
    r.object(e, p, {"name", "unit", "kind", "range", "width_range"});
    ParamDescriptor d;
    d.name = r.string(e, p, "name", "", true);
    d.unit = r.string(e, p, "unit", "");
    r.check(p + "/kind", [&] { d.kind = param_kind_from_string(r.string(e, p, "kind", "", true)); });
    if (!e.contains("range")) r.fail(p + "/range", "missing required field");
    if (!e.contains("width_range")) r.fail(p + "/width_range", "missing required field");
    std::tie(d.global_min, d.global_max) = r.range(e, p, "range", {});
    std::tie(d.width_min, d.width_max) = r.range(e, p, "width_range", {});
    r.check(p, [&] { d.validate(); });
    spec.descriptors.push_back(std::move(d));
  }
  r.check(pointer, [&] { spec.validate(); });
  return spec;
}

NoiseConfig noise_from_json(const Json& j, const std::string& source, const std::string& pointer) {
  Reader r(source);
  if (j.is_string() && j.get<std::string>() == "none") return NoiseConfig::none();
  r.object(j, pointer, {"q_jitter", "counts", "scale", "log_shift"});
  NoiseConfig cfg;
  cfg.q_jitter = r.number(j, pointer, "q_jitter", cfg.q_jitter);
  std::tie(cfg.counts_min, cfg.counts_max) =
      r.range(j, pointer, "counts", {cfg.counts_min, cfg.counts_max});
  cfg.scale = r.number(j, pointer, "scale", cfg.scale);
  cfg.log_shift = r.number(j, pointer, "log_shift", cfg.log_shift);
  r.check(pointer, [&] { cfg.validate(); });
  return cfg;
}

DiscretizationSpec discretization_from_json(const Json& j, const std::string& source,
                                            const std::string& pointer) {
  Reader r(source);
  r.object(j, pointer, {"n_points", "q_min", "q_max"});
  DiscretizationSpec cfg;
  const auto n = r.range(j, pointer, "n_points", {128, 128});
  if (n.first != std::floor(n.first) || n.second != std::floor(n.second))
    r.fail(pointer + "/n_points", "expected integers");
  cfg.n_points_min = static_cast<Eigen::Index>(n.first);
  cfg.n_points_max = static_cast<Eigen::Index>(n.second);
  std::tie(cfg.q_min_lo, cfg.q_min_hi) = r.range(j, pointer, "q_min", {0.02, 0.02});
  std::tie(cfg.q_max_lo, cfg.q_max_hi) = r.range(j, pointer, "q_max", {0.15, 0.15});
  cfg.fixed = cfg.n_points_min == cfg.n_points_max && cfg.q_min_lo == cfg.q_min_hi &&
              cfg.q_max_lo == cfg.q_max_hi;
  r.check(pointer, [&] { cfg.validate(); });
  return cfg;
}

nn::NetworkConfig network_from_json(const Json& j, const std::string& source,
                                    const std::string& pointer) {
  Reader r(source);
  r.object(j, pointer, {"embedding", "dim_hidden", "n_blocks", "cnn", "fno"});
  nn::NetworkConfig cfg;
  r.check(pointer + "/embedding", [&] {
    cfg.embedding = nn::embedding_kind_from_string(r.string(j, pointer, "embedding", "cnn"));
  });
  cfg.mlp.dim_hidden = r.integer(j, pointer, "dim_hidden", cfg.mlp.dim_hidden);
  cfg.mlp.n_blocks = r.integer(j, pointer, "n_blocks", cfg.mlp.n_blocks);
  if (const auto it = j.find("cnn"); it != j.end()) {
    const std::string p = pointer + "/cnn";
    r.object(*it, p, {"channels", "pool_size", "dim_emb"});
    if (const auto c = it->find("channels"); c != it->end()) {
      if (!c->is_array()) r.fail(p + "/channels", "expected an array of integers");
      cfg.cnn.channels.clear();
      for (const auto& v : *c) {
        if (!v.is_number_integer()) r.fail(p + "/channels", "expected an array of integers");
        cfg.cnn.channels.push_back(v.get<Eigen::Index>());
      }
    }
    cfg.cnn.pool_size = r.integer(*it, p, "pool_size", cfg.cnn.pool_size);
    cfg.cnn.dim_emb = r.integer(*it, p, "dim_emb", cfg.cnn.dim_emb);
  }
  if (const auto it = j.find("fno"); it != j.end()) {
    const std::string p = pointer + "/fno";
    r.object(*it, p, {"channels", "n_blocks", "n_modes", "dim_emb", "q_scale"});
    cfg.fno.channels = r.integer(*it, p, "channels", cfg.fno.channels);
    cfg.fno.n_blocks = r.integer(*it, p, "n_blocks", cfg.fno.n_blocks);
    cfg.fno.n_modes = r.integer(*it, p, "n_modes", cfg.fno.n_modes);
    cfg.fno.dim_emb = r.integer(*it, p, "dim_emb", cfg.fno.dim_emb);
    cfg.fno.q_scale = r.number(*it, p, "q_scale", cfg.fno.q_scale);
  }
  r.check(pointer, [&] { cfg.validate(); });
  return cfg;
}

TrainConfig train_config_from_json(const Json& j, const std::string& source) {
  Reader r(source);
  r.object(j, "", {"model", "network", "discretization", "noise", "batch_size", "max_steps",
                   "eval_period", "seed", "optimizer", "scheduler", "prefetch", "output"});
  TrainConfig cfg;
  if (const auto it = j.find("model"); it != j.end())
    cfg.spec = model_spec_from_json(*it, source, "/model");
  if (const auto it = j.find("network"); it != j.end())
    cfg.network = network_from_json(*it, source, "/network");
  cfg.network.n_params = cfg.spec.n_params();
  if (const auto it = j.find("discretization"); it != j.end())
    cfg.discretization = discretization_from_json(*it, source, "/discretization");
  if (const auto it = j.find("noise"); it != j.end())
    cfg.noise = noise_from_json(*it, source, "/noise");
  cfg.batch_size = r.integer(j, "", "batch_size", cfg.batch_size);
  cfg.max_steps = r.integer(j, "", "max_steps", cfg.max_steps);
  cfg.eval_period = r.integer(j, "", "eval_period", cfg.eval_period);
  const long long seed = r.integer(j, "", "seed", 0);
  if (seed < 0) r.fail("/seed", "must be >= 0");
  cfg.seed = static_cast<std::uint64_t>(seed);
  cfg.prefetch = r.boolean(j, "", "prefetch", cfg.prefetch);
  if (const auto it = j.find("optimizer"); it != j.end()) {
    r.object(*it, "/optimizer", {"lr", "beta1", "beta2", "eps", "weight_decay"});
    auto& o = cfg.optimizer;
    o.lr = r.number(*it, "/optimizer", "lr", o.lr);
    o.beta1 = r.number(*it, "/optimizer", "beta1", o.beta1);
    o.beta2 = r.number(*it, "/optimizer", "beta2", o.beta2);
    o.eps = r.number(*it, "/optimizer", "eps", o.eps);
    o.weight_decay = r.number(*it, "/optimizer", "weight_decay", o.weight_decay);
  }
  if (const auto it = j.find("scheduler"); it != j.end()) {
    r.object(*it, "/scheduler", {"factor", "patience", "rel_threshold", "cooldown", "min_lr"});
    auto& s = cfg.scheduler;
    s.factor = r.number(*it, "/scheduler", "factor", s.factor);
    s.patience = static_cast<int>(r.integer(*it, "/scheduler", "patience", s.patience));
    s.rel_threshold = r.number(*it, "/scheduler", "rel_threshold", s.rel_threshold);
    s.cooldown = static_cast<int>(r.integer(*it, "/scheduler", "cooldown", s.cooldown));
    s.min_lr = r.number(*it, "/scheduler", "min_lr", s.min_lr);
  }
  if (const auto it = j.find("output"); it != j.end()) {
    r.object(*it, "/output", {"checkpoint", "metrics", "checkpoint_period"});
    cfg.checkpoint_path = r.string(*it, "/output", "checkpoint", "");
    cfg.metrics_path = r.string(*it, "/output", "metrics", "");
    cfg.checkpoint_period = r.integer(*it, "/output", "checkpoint_period", 0);
  }
  try {
    cfg.validate();
  } catch (const ConfigError& ex) {
    r.fail(ex.field(), ex.what());
  }
  return cfg;
}

void TrainConfig::validate() const {
  auto bad = [](const std::string& field, const std::string& msg) {
    throw ConfigError(field + ": " + msg, field);
  };
  if (network.n_params != spec.n_params()) bad("/network", "n_params does not match the model");
  if (batch_size < 2) bad("/batch_size", "must be >= 2 (batch norm needs two samples)");
  if (max_steps < 1) bad("/max_steps", "must be >= 1");
  if (eval_period < 1 || eval_period > max_steps) bad("/eval_period", "must be in [1, max_steps]");
  if (checkpoint_period < 0) bad("/output/checkpoint_period", "must be >= 0");
  if (!(optimizer.lr > 0.0)) bad("/optimizer/lr", "must be > 0");
  if (optimizer.beta1 < 0.0 || optimizer.beta1 >= 1.0) bad("/optimizer/beta1", "must be in [0, 1)");
  if (optimizer.beta2 < 0.0 || optimizer.beta2 >= 1.0) bad("/optimizer/beta2", "must be in [0, 1)");
  if (!(optimizer.eps > 0.0)) bad("/optimizer/eps", "must be > 0");
  if (optimizer.weight_decay < 0.0) bad("/optimizer/weight_decay", "must be >= 0");
  if (!(scheduler.factor > 0.0 && scheduler.factor < 1.0)) bad("/scheduler/factor", "must be in (0, 1)");
  if (scheduler.patience < 0) bad("/scheduler/patience", "must be >= 0");
  if (scheduler.cooldown < 0) bad("/scheduler/cooldown", "must be >= 0");
  if (scheduler.rel_threshold < 0.0) bad("/scheduler/rel_threshold", "must be >= 0");
  if (!(scheduler.min_lr > 0.0)) bad("/scheduler/min_lr", "must be > 0");
  if (network.embedding == nn::EmbeddingKind::cnn && !discretization.fixed)
    bad("/discretization", "a CNN embedding needs a fixed grid; use the fno embedding instead");
  if (network.embedding == nn::EmbeddingKind::cnn &&
      discretization.n_points_min < network.cnn.pool_size)
    bad("/discretization/n_points", "fewer points than the CNN pooling size");
}

Json parse_json_text(const std::string& text, const std::string& origin) {
  try {
    return Json::parse(text);
  } catch (const Json::parse_error& ex) {
    const auto byte = std::min<std::size_t>(ex.byte, text.size());
    const int line = 1 + static_cast<int>(std::count(text.begin(), text.begin() + long(byte), '\n'));
    throw ConfigError(origin + ":" + std::to_string(line) + ": malformed JSON: " + ex.what(), "",
                      line);
  }
}

TrainConfig train_config_from_text(const std::string& text, const std::string& origin) {
  const Json j = parse_json_text(text, origin);
  try {
    return train_config_from_json(j, text);
  } catch (const ConfigError& ex) {
    throw ConfigError(origin + ": " + ex.what(), ex.field(), ex.line());
  }
}

std::string read_text_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInput("cannot open " + path);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

TrainConfig load_train_config(const std::string& path) {
  return train_config_from_text(read_text_file(path), path);
}

std::string spec_fingerprint(const ModelSpec& spec) {
  const std::string text = to_json(spec).dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : text) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace reflprior
