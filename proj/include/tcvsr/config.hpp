#pragma once

// Flat key=value configuration with dotted section keys, plus the typed
// model and training settings resolved from it.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>

namespace tcvsr {

enum class Variant { Vanilla, Motion, Hybrid };
enum class FuseKind { Conv, Pyramid };

const char* to_string(Variant v);
Variant parse_variant(const std::string& s);
const char* to_string(FuseKind k);
FuseKind parse_fuse_kind(const std::string& s);

/// Ordered string map. Unknown keys are rejected so typos surface early.
class Config {
 public:
  /// "toy" (desk-scale acceptance settings) or "full" (full-size model).
  static Config preset(const std::string& name);

  void set(const std::string& key, const std::string& value);
  /// Parses "key=value".
  void set_assignment(const std::string& assignment);
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::string& get(const std::string& key) const;

  std::int64_t get_int(const std::string& key) const;
  double get_double(const std::string& key) const;
  bool get_bool(const std::string& key) const;

  /// Applies every assignment in a file ('#' comments, blank lines allowed).
  void load_file(const std::filesystem::path& path);
  /// Writes "key=value" lines in key order.
  std::string to_text() const;
  void write_file(const std::filesystem::path& path) const;

  const std::map<std::string, std::string>& values() const noexcept { return values_; }

  static bool known_key(const std::string& key);

 private:
  std::map<std::string, std::string> values_;
};

struct ModelConfig {
  int channels = 64;
  int resblocks = 20;
  int cmb_blocks = 8;
  int tsb_blocks = 8;
  int patch3d = 8;
  int scale = 4;
  Variant variant = Variant::Hybrid;
  bool use_cmb = true;
  bool use_tsb = true;
  FuseKind fusion_stage1 = FuseKind::Pyramid;
  FuseKind fusion_stage2 = FuseKind::Pyramid;
  int pyramid_levels = 3;
  int pyramid_channels = 128;
  int flow_levels = 3;
  int flow_channels = 16;
  int embed_dim = 256;

  static ModelConfig from(const Config& c);
  void validate() const;
  /// Spatial LR sizes must be multiples of this.
  int size_multiple() const;
};

struct TrainConfig {
  double lr_main = 1e-4;
  double lr_flow = 2.5e-5;
  double lr_min = 1e-7;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps_opt = 1e-8;
  std::int64_t total_iters = 800;
  std::int64_t freeze_flow_iters = 200;
  int batch = 4;
  int patch_lr = 64;
  int clip_len = 4;
  std::uint64_t seed = 0;
  double charbonnier_eps = 1e-3;
  double flow_loss_weight = 0.0;
  /// When false the SR loss stops at the aligned frames and the flow net
  /// learns from the photometric term alone.
  bool flow_sr_grad = true;
  bool augment = true;
  std::string degradation = "bi";

  static TrainConfig from(const Config& c);
  void validate() const;
};

}  // namespace tcvsr
