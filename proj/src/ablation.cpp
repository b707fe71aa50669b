#include "tcvsr/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <numeric>

#include "tcvsr/metrics.hpp"

namespace tcvsr {

std::vector<AblationSpec> ablation_grid() {
  std::vector<AblationSpec> g;
  int id = 1;
  for (Variant v : {Variant::Vanilla, Variant::Motion, Variant::Hybrid}) {
    g.push_back({id++, v, false, false});
    g.push_back({id++, v, false, true});
    g.push_back({id++, v, true, false});
    g.push_back({id++, v, true, true});
  }
  return g;
}

Config ablation_config(const Config& base, const AblationSpec& spec) {
  Config c = base;
  c.set("model.variant", to_string(spec.variant));
  c.set("model.use_tsb", spec.tsb ? "true" : "false");
  c.set("model.use_cmb", spec.cmb ? "true" : "false");
  return c;
}

bool smoothed_monotone(const std::vector<double>& losses, int chunks, double slack) {
  if (chunks < 2 || static_cast<int>(losses.size()) < chunks) return false;
  const std::size_t n = losses.size() / static_cast<std::size_t>(chunks);
  std::vector<double> means;
  for (int k = 0; k < chunks; ++k) {
    const auto b = losses.begin() + static_cast<std::ptrdiff_t>(k * n);
    means.push_back(std::accumulate(b, b + static_cast<std::ptrdiff_t>(n), 0.0) / static_cast<double>(n));
  }
  for (std::size_t k = 1; k < means.size(); ++k) {
    if (means[k] > means[k - 1] * (1.0 + slack)) return false;
  }
  return means.back() < means.front();
}

void rank_rows(std::vector<AblationRow>& rows) {
  std::vector<std::size_t> order(rows.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) { return rows[a].psnr_y > rows[b].psnr_y; });
  for (std::size_t r = 0; r < order.size(); ++r) rows[order[r]].psnr_rank = static_cast<int>(r + 1);
}

std::vector<AblationRow> run_ablation(const Config& base, const AblationData& data, const std::vector<int>& models,
                                      const std::function<void(const AblationRow&)>& on_row) {
  std::vector<AblationRow> rows;
  for (const auto& spec : ablation_grid()) {
    if (!models.empty() && std::find(models.begin(), models.end(), spec.model) == models.end()) continue;
    Trainer tr(ablation_config(base, spec));
    tr.set_data(data.train_hr, data.train_lr);
    AblationRow row;
    row.spec = spec;
    row.params = tr.model().params().count();
    tr.run();
    std::vector<double> losses;
    for (const auto& r : tr.log()) losses.push_back(r.sr_loss);
    row.finite = std::all_of(losses.begin(), losses.end(), [](double v) { return std::isfinite(v); });
    const std::size_t w = std::max<std::size_t>(1, losses.size() / 10);
    row.initial_loss = std::accumulate(losses.begin(), losses.begin() + static_cast<std::ptrdiff_t>(w), 0.0) / static_cast<double>(w);
    row.final_loss = std::accumulate(losses.end() - static_cast<std::ptrdiff_t>(w), losses.end(), 0.0) / static_cast<double>(w);
    row.monotone = smoothed_monotone(losses);
    const auto sr = super_resolve(tr.model(), data.eval_lr.frames);
    std::vector<Image> gt;
    for (std::size_t i = 0; i < sr.size(); ++i) gt.push_back(crop(data.eval_hr.frames[i], 0, 0, sr[i].dim(1), sr[i].dim(2)));
    row.psnr_y = per_frame_report(sr, gt, ChannelMode::Y).mean_psnr;
    rows.push_back(row);
    if (on_row) on_row(row);
  }
  rank_rows(rows);
  return rows;
}

void write_ablation_csv(const std::filesystem::path& path, const std::vector<AblationRow>& rows) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "model,variant,tsb,cmb,one_stage,progressive,params,initial_loss,final_loss,finite,monotone,psnr_y_db,psnr_rank\n";
  for (const auto& r : rows) {
    out << r.spec.model << ',' << to_string(r.spec.variant) << ',' << int(r.spec.tsb) << ',' << int(r.spec.cmb) << ','
        << int(r.spec.one_stage()) << ',' << int(r.spec.progressive()) << ',' << r.params << ',' << r.initial_loss
        << ',' << r.final_loss << ',' << int(r.finite) << ',' << int(r.monotone) << ',' << r.psnr_y << ','
        << r.psnr_rank << '\n';
  }
}

}  // namespace tcvsr
