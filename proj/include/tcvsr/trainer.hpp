#pragma once

// Toy-scale training loop, checkpoints and resume.

#include <filesystem>
#include <functional>
#include <memory>
#include <vector>

#include "tcvsr/config.hpp"
#include "tcvsr/data.hpp"
#include "tcvsr/model.hpp"
#include "tcvsr/optim.hpp"

namespace tcvsr {

struct TrainLogRow {
  std::int64_t step = 0;  // 1-based iteration number
  double loss = 0;        // total objective
  double sr_loss = 0;     // Charbonnier on SR frames
  double flow_loss = 0;   // photometric alignment term (unweighted)
  double lr_main = 0;
  double lr_flow = 0;     // 0 while the flow group is frozen
};

/// Flips and transposes applied identically to every frame of a clip, plus
/// optional temporal reversal.
struct Augment {
  bool hflip = false, vflip = false, transpose = false, reverse = false;
  static Augment draw(Rng& rng);
  Image apply(const Image& img) const;
  void apply(ClipPair& clip) const;
};

class Trainer {
 public:
  /// Builds a fresh model from the resolved config (train.seed seeds both
  /// initialization and data draws).
  explicit Trainer(Config cfg);
  /// Resumes from a checkpoint directory written by save().
  static std::unique_ptr<Trainer> resume(const std::filesystem::path& dir);

  /// Training pairs. LR frames must be HR / scale in size.
  void set_data(Sequence hr, Sequence lr);

  /// One optimization step; throws NumericError on a non-finite loss.
  TrainLogRow step();
  /// Runs until total_iters (or `max_steps` more iterations when >= 0).
  void run(std::int64_t max_steps = -1, const std::function<void(const TrainLogRow&)>& on_step = {});

  std::int64_t steps_done() const noexcept { return step_; }
  bool finished() const noexcept { return step_ >= train_.total_iters; }
  const std::vector<TrainLogRow>& log() const noexcept { return log_; }
  const Config& config() const noexcept { return cfg_; }
  const TrainConfig& train_config() const noexcept { return train_; }
  Model<float>& model() noexcept { return *model_; }
  const Model<float>& model() const noexcept { return *model_; }

  /// Writes config, parameters, optimizer moments, step counter, generator
  /// state and the loss log.
  void save(const std::filesystem::path& dir) const;

 private:
  Config cfg_;
  TrainConfig train_;
  std::unique_ptr<Model<float>> model_;
  std::vector<Var<float>> main_params_, flow_params_;
  std::vector<std::string> main_names_, flow_names_;
  AdamState<float> adam_main_, adam_flow_;
  Rng rng_;
  std::int64_t step_ = 0;
  std::vector<TrainLogRow> log_;
  Sequence hr_, lr_;
};

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log);
std::vector<TrainLogRow> read_train_log(const std::filesystem::path& path);

/// Saves parameters as manifest.txt ("name group d0 d1 ...") plus
/// params/<name>.tct, together with config.txt.
void save_model(const std::filesystem::path& dir, const Model<float>& model, const Config& cfg);
/// Loads a model from a checkpoint directory, validating every tensor shape
/// against the model built from the stored config.
std::unique_ptr<Model<float>> load_model(const std::filesystem::path& dir, Config* cfg_out = nullptr);

}  // namespace tcvsr
