#include "tcvsr/config.hpp"

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

#include "tcvsr/error.hpp"

namespace tcvsr {

const char* to_string(Variant v) {
  switch (v) {
    case Variant::Vanilla: return "vanilla";
    case Variant::Motion: return "motion";
    case Variant::Hybrid: return "hybrid";
  }
  return "?";
}

Variant parse_variant(const std::string& s) {
  if (s == "vanilla") return Variant::Vanilla;
  if (s == "motion") return Variant::Motion;
  if (s == "hybrid") return Variant::Hybrid;
  throw ConfigError("unknown recurrent variant '" + s + "' (expected vanilla, motion or hybrid)");
}

const char* to_string(FuseKind k) { return k == FuseKind::Conv ? "conv" : "pyramid"; }

FuseKind parse_fuse_kind(const std::string& s) {
  if (s == "conv") return FuseKind::Conv;
  if (s == "pyramid") return FuseKind::Pyramid;
  throw ConfigError("unknown fusion stage '" + s + "' (expected conv or pyramid)");
}

namespace {

// Full-scale defaults; the toy preset overrides a subset.
const std::map<std::string, std::string>& defaults() {
  static const std::map<std::string, std::string> d = {
      {"model.channels", "64"},
      {"model.resblocks", "20"},
      {"model.cmb_blocks", "8"},
      {"model.tsb_blocks", "8"},
      {"model.patch3d", "8"},
      {"model.scale", "4"},
      {"model.variant", "hybrid"},
      {"model.use_cmb", "true"},
      {"model.use_tsb", "true"},
      {"model.fusion_stage1", "pyramid"},
      {"model.fusion_stage2", "pyramid"},
      {"model.pyramid_levels", "3"},
      {"model.pyramid_channels", "128"},
      {"model.flow_levels", "3"},
      {"model.flow_channels", "16"},
      {"model.embed_dim", "256"},
      {"train.lr_main", "1e-4"},
      {"train.lr_flow", "2.5e-5"},
      {"train.lr_min", "1e-7"},
      {"train.beta1", "0.9"},
      {"train.beta2", "0.999"},
      {"train.eps_opt", "1e-8"},
      {"train.total_iters", "800"},
      {"train.freeze_flow_iters", "200"},
      {"train.batch", "4"},
      {"train.patch_lr", "64"},
      {"train.clip_len", "4"},
      {"train.seed", "0"},
      {"train.charbonnier_eps", "1e-3"},
      {"train.flow_loss_weight", "0"},
      {"train.flow_sr_grad", "true"},
      {"train.augment", "true"},
      {"train.degradation", "bi"},
  };
  return d;
}

const std::map<std::string, std::string>& toy_overrides() {
  static const std::map<std::string, std::string> d = {
      {"model.channels", "16"},
      {"model.resblocks", "2"},
      {"model.cmb_blocks", "2"},
      {"model.tsb_blocks", "2"},
      {"model.patch3d", "4"},
      {"model.pyramid_levels", "2"},
      {"model.pyramid_channels", "16"},
      {"model.embed_dim", "64"},
      {"train.lr_main", "1e-3"},
      {"train.lr_flow", "2.5e-4"},
      {"train.batch", "2"},
      {"train.patch_lr", "16"},
      {"train.clip_len", "4"},
      {"train.flow_loss_weight", "0.1"},
      // The estimator starts from zero rather than pretrained weights, so
      // holding it frozen only lets the SR path settle around zero flow.
      {"train.freeze_flow_iters", "0"},
  };
  return d;
}

std::string trim(const std::string& s) {
  const auto b = s.find_first_not_of(" \t\r\n");
  if (b == std::string::npos) return "";
  const auto e = s.find_last_not_of(" \t\r\n");
  return s.substr(b, e - b + 1);
}

}  // namespace

bool Config::known_key(const std::string& key) { return defaults().count(key) != 0; }

Config Config::preset(const std::string& name) {
  Config c;
  c.values_ = defaults();
  if (name == "toy") {
    for (const auto& [k, v] : toy_overrides()) c.values_[k] = v;
  } else if (name != "full") {
    throw ConfigError("unknown preset '" + name + "' (expected toy or full)");
  }
  return c;
}

void Config::set(const std::string& key, const std::string& value) {
  if (!known_key(key)) throw ConfigError("unknown config key '" + key + "'");
  values_[key] = value;
}

void Config::set_assignment(const std::string& assignment) {
  const auto eq = assignment.find('=');
  if (eq == std::string::npos) throw ConfigError("expected key=value, got '" + assignment + "'");
  set(trim(assignment.substr(0, eq)), trim(assignment.substr(eq + 1)));
}

const std::string& Config::get(const std::string& key) const {
  auto it = values_.find(key);
  if (it == values_.end()) throw ConfigError("missing config key '" + key + "'");
  return it->second;
}

std::int64_t Config::get_int(const std::string& key) const {
  const auto& s = get(key);
  std::int64_t v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not an integer");
  return v;
}

double Config::get_double(const std::string& key) const {
  const auto& s = get(key);
  double v = 0;
  auto [p, ec] = std::from_chars(s.data(), s.data() + s.size(), v);
  if (ec != std::errc() || p != s.data() + s.size()) throw ConfigError(key + ": '" + s + "' is not a number");
  return v;
}

bool Config::get_bool(const std::string& key) const {
  const auto& s = get(key);
  if (s == "true" || s == "1") return true;
  if (s == "false" || s == "0") return false;
  throw ConfigError(key + ": '" + s + "' is not a boolean");
}

void Config::load_file(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open config file " + path.string());
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.resize(hash);
    line = trim(line);
    if (line.empty()) continue;
    try {
      set_assignment(line);
    } catch (const ConfigError& e) {
      throw ConfigError(path.string() + ":" + std::to_string(lineno) + ": " + e.what());
    }
  }
}

std::string Config::to_text() const {
  std::ostringstream os;
  for (const auto& [k, v] : values_) os << k << '=' << v << '\n';
  return os.str();
}

void Config::write_file(const std::filesystem::path& path) const {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out << to_text();
}

namespace {

int as_int(const Config& c, const std::string& key) { return static_cast<int>(c.get_int(key)); }

}  // namespace

ModelConfig ModelConfig::from(const Config& c) {
  ModelConfig m;
  m.channels = as_int(c, "model.channels");
  m.resblocks = as_int(c, "model.resblocks");
  m.cmb_blocks = as_int(c, "model.cmb_blocks");
  m.tsb_blocks = as_int(c, "model.tsb_blocks");
  m.patch3d = as_int(c, "model.patch3d");
  m.scale = as_int(c, "model.scale");
  m.variant = parse_variant(c.get("model.variant"));
  m.use_cmb = c.get_bool("model.use_cmb");
  m.use_tsb = c.get_bool("model.use_tsb");
  m.fusion_stage1 = parse_fuse_kind(c.get("model.fusion_stage1"));
  m.fusion_stage2 = parse_fuse_kind(c.get("model.fusion_stage2"));
  m.pyramid_levels = as_int(c, "model.pyramid_levels");
  m.pyramid_channels = as_int(c, "model.pyramid_channels");
  m.flow_levels = as_int(c, "model.flow_levels");
  m.flow_channels = as_int(c, "model.flow_channels");
  m.embed_dim = as_int(c, "model.embed_dim");
  m.validate();
  return m;
}

void ModelConfig::validate() const {
  if (channels < 1) throw ConfigError("model.channels must be positive");
  if (resblocks < 0 || cmb_blocks < 0 || tsb_blocks < 0) throw ConfigError("block counts must be >= 0");
  if (patch3d < 1) throw ConfigError("model.patch3d must be positive");
  if (scale != 2 && scale != 4) throw ConfigError("model.scale must be 2 or 4");
  if (pyramid_levels != 2 && pyramid_levels != 3) throw ConfigError("model.pyramid_levels must be 2 or 3");
  if (pyramid_channels < 1) throw ConfigError("model.pyramid_channels must be positive");
  if (flow_levels < 1 || flow_levels > 6) throw ConfigError("model.flow_levels must be in [1, 6]");
  if (flow_channels < 2) throw ConfigError("model.flow_channels must be >= 2");
  if (embed_dim < 1) throw ConfigError("model.embed_dim must be positive");
}

int ModelConfig::size_multiple() const {
  auto lcm = [](int a, int b) {
    int x = a, y = b;
    while (y) {
      const int t = x % y;
      x = y;
      y = t;
    }
    return a / x * b;
  };
  int m = 1 << (flow_levels - 1);
  m = lcm(m, 1 << (pyramid_levels - 1));
  if (use_tsb && tsb_blocks > 0) m = lcm(m, patch3d);
  return m;
}

TrainConfig TrainConfig::from(const Config& c) {
  TrainConfig t;
  t.lr_main = c.get_double("train.lr_main");
  t.lr_flow = c.get_double("train.lr_flow");
  t.lr_min = c.get_double("train.lr_min");
  t.beta1 = c.get_double("train.beta1");
  t.beta2 = c.get_double("train.beta2");
  t.eps_opt = c.get_double("train.eps_opt");
  t.total_iters = c.get_int("train.total_iters");
  t.freeze_flow_iters = c.get_int("train.freeze_flow_iters");
  t.batch = as_int(c, "train.batch");
  t.patch_lr = as_int(c, "train.patch_lr");
  t.clip_len = as_int(c, "train.clip_len");
  const auto seed = c.get_int("train.seed");
  if (seed < 0) throw ConfigError("train.seed must be non-negative");
  t.seed = static_cast<std::uint64_t>(seed);
  t.charbonnier_eps = c.get_double("train.charbonnier_eps");
  t.flow_loss_weight = c.get_double("train.flow_loss_weight");
  t.flow_sr_grad = c.get_bool("train.flow_sr_grad");
  t.augment = c.get_bool("train.augment");
  t.degradation = c.get("train.degradation");
  t.validate();
  return t;
}

void TrainConfig::validate() const {
  if (!(lr_main > 0) || !(lr_flow > 0)) throw ConfigError("learning rates must be positive");
  if (lr_min < 0 || lr_min > lr_main || lr_min > lr_flow) throw ConfigError("train.lr_min must lie in [0, lr]");
  if (!(beta1 >= 0 && beta1 < 1) || !(beta2 >= 0 && beta2 < 1)) throw ConfigError("adam betas must lie in [0, 1)");
  if (!(eps_opt > 0)) throw ConfigError("train.eps_opt must be positive");
  if (total_iters < 1) throw ConfigError("train.total_iters must be positive");
  if (freeze_flow_iters < 0 || freeze_flow_iters > total_iters) {
    throw ConfigError("train.freeze_flow_iters must lie in [0, total_iters]");
  }
  if (batch < 1 || patch_lr < 1 || clip_len < 1) throw ConfigError("batch, patch_lr and clip_len must be positive");
  if (!(charbonnier_eps > 0)) throw ConfigError("train.charbonnier_eps must be positive");
  if (flow_loss_weight < 0) throw ConfigError("train.flow_loss_weight must be >= 0");
  if (degradation != "bi" && degradation != "bd") throw ConfigError("train.degradation must be bi or bd");
}

}  // namespace tcvsr
