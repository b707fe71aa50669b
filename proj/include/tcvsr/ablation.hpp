#pragma once

// The twelve-model grid of recurrent variant x stability branches x fusion.

#include <filesystem>
#include <functional>
#include <vector>

#include "tcvsr/config.hpp"
#include "tcvsr/data.hpp"
#include "tcvsr/trainer.hpp"

namespace tcvsr {

struct AblationSpec {
  int model = 0;  // 1..12
  Variant variant = Variant::Hybrid;
  bool tsb = false;
  bool cmb = false;
  bool progressive() const { return tsb && cmb; }
  bool one_stage() const { return !progressive(); }
};

/// Models 1-4 vanilla, 5-8 motion, 9-12 hybrid; within each group: no
/// branch, CMB only, TSB only, both (progressive fusion).
std::vector<AblationSpec> ablation_grid();

/// Applies a row's switches on top of a base config.
Config ablation_config(const Config& base, const AblationSpec& spec);

struct AblationRow {
  AblationSpec spec;
  std::int64_t params = 0;
  double initial_loss = 0;  // mean SR loss over the first window
  double final_loss = 0;    // mean SR loss over the last window
  bool finite = false;
  bool monotone = false;
  double psnr_y = 0;
  int psnr_rank = 0;  // 1 = best
};

/// Smoothed trend check on a loss series: split into `chunks` equal parts;
/// every chunk mean must be at most (1 + slack) times the previous one and
/// the last strictly below the first.
bool smoothed_monotone(const std::vector<double>& losses, int chunks = 4, double slack = 0.05);

struct AblationData {
  Sequence train_hr, train_lr;
  Sequence eval_hr, eval_lr;
};

/// Trains and evaluates the requested rows (all twelve when empty).
std::vector<AblationRow> run_ablation(const Config& base, const AblationData& data, const std::vector<int>& models = {},
                                      const std::function<void(const AblationRow&)>& on_row = {});

/// Fills psnr_rank from psnr_y.
void rank_rows(std::vector<AblationRow>& rows);

/// model,variant,tsb,cmb,one_stage,progressive,params,initial_loss,final_loss,finite,monotone,psnr_y_db,psnr_rank
void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows);

}  // namespace tcvsr
