#include "tcvsr/tcvsr.h"

#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include "tcvsr/ablation.hpp"
#include "tcvsr/gradcheck.hpp"
#include "tcvsr/metrics.hpp"
#include "tcvsr/trainer.hpp"

#ifndef TCVSR_VERSION
#define TCVSR_VERSION "0.0.0"
#endif

struct tcvsr_config {
  tcvsr::Config cfg;
};
struct tcvsr_sequence {
  tcvsr::Sequence seq;
};
struct tcvsr_trainer {
  std::unique_ptr<tcvsr::Trainer> tr;
};
struct tcvsr_model {
  std::unique_ptr<tcvsr::Model<float>> model;
  tcvsr::Config cfg;
};
struct tcvsr_report {
  tcvsr::MetricReport rep;
};

namespace {

thread_local std::string g_error;

tcvsr_status fail(tcvsr_status s, const std::string& msg) {
  g_error = msg;
  return s;
}

template <typename F>
tcvsr_status guard(F&& f) {
  try {
    g_error.clear();
    f();
    return TCVSR_OK;
  } catch (const tcvsr::Error& e) {
    return fail(static_cast<tcvsr_status>(e.code()), e.what());
  } catch (const std::bad_alloc&) {
    return fail(TCVSR_ERR_INTERNAL, "out of memory");
  } catch (const std::filesystem::filesystem_error& e) {
    return fail(TCVSR_ERR_IO, e.what());
  } catch (const std::exception& e) {
    return fail(TCVSR_ERR_INTERNAL, e.what());
  }
}

void need(const void* p, const char* what) {
  if (!p) throw tcvsr::InvalidArgument(std::string(what) + " must not be NULL");
}

void copy_out(const std::string& s, char* buf, size_t cap, size_t* needed) {
  if (needed) *needed = s.size() + 1;
  if (buf && cap > s.size()) std::memcpy(buf, s.c_str(), s.size() + 1);
  else if (buf && cap > 0) throw tcvsr::InvalidArgument("buffer too small (" + std::to_string(s.size() + 1) + " bytes needed)");
}

tcvsr_train_row to_c(const tcvsr::TrainLogRow& r) {
  return {r.step, r.loss, r.sr_loss, r.flow_loss, r.lr_main, r.lr_flow};
}

tcvsr::Sequence degraded(const tcvsr::Sequence& hr, const tcvsr::Config& cfg) {
  return tcvsr::degrade_sequence(hr, cfg.get("train.degradation"), static_cast<int>(cfg.get_int("model.scale")));
}

}  // namespace

extern "C" {

const char* tcvsr_last_error(void) { return g_error.c_str(); }
const char* tcvsr_version(void) { return TCVSR_VERSION; }

const char* tcvsr_status_name(tcvsr_status s) {
  switch (s) {
    case TCVSR_OK: return "ok";
    case TCVSR_ERR_INVALID_ARGUMENT: return "invalid argument";
    case TCVSR_ERR_SHAPE: return "shape error";
    case TCVSR_ERR_NUMERIC: return "numeric error";
    case TCVSR_ERR_IO: return "I/O error";
    case TCVSR_ERR_CONFIG: return "config error";
    case TCVSR_ERR_STATE: return "state error";
    case TCVSR_ERR_INTERNAL: return "internal error";
  }
  return "unknown status";
}

// ---------------------------------------------------------------- config

tcvsr_status tcvsr_config_new(const char* preset, tcvsr_config** out) {
  return guard([&] {
    need(out, "out");
    *out = new tcvsr_config{tcvsr::Config::preset(preset ? preset : "toy")};
  });
}

void tcvsr_config_free(tcvsr_config* cfg) { delete cfg; }

tcvsr_status tcvsr_config_set(tcvsr_config* cfg, const char* key, const char* value) {
  return guard([&] {
    need(cfg, "cfg");
    need(key, "key");
    need(value, "value");
    cfg->cfg.set(key, value);
  });
}

tcvsr_status tcvsr_config_assign(tcvsr_config* cfg, const char* assignment) {
  return guard([&] {
    need(cfg, "cfg");
    need(assignment, "assignment");
    cfg->cfg.set_assignment(assignment);
  });
}

tcvsr_status tcvsr_config_load_file(tcvsr_config* cfg, const char* path) {
  return guard([&] {
    need(cfg, "cfg");
    need(path, "path");
    cfg->cfg.load_file(path);
  });
}

tcvsr_status tcvsr_config_write_file(const tcvsr_config* cfg, const char* path) {
  return guard([&] {
    need(cfg, "cfg");
    need(path, "path");
    cfg->cfg.write_file(path);
  });
}

tcvsr_status tcvsr_config_get(const tcvsr_config* cfg, const char* key, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    need(cfg, "cfg");
    need(key, "key");
    copy_out(cfg->cfg.get(key), buf, cap, needed);
  });
}

tcvsr_status tcvsr_config_to_text(const tcvsr_config* cfg, char* buf, size_t cap, size_t* needed) {
  return guard([&] {
    need(cfg, "cfg");
    copy_out(cfg->cfg.to_text(), buf, cap, needed);
  });
}

tcvsr_status tcvsr_config_validate(const tcvsr_config* cfg) {
  return guard([&] {
    need(cfg, "cfg");
    tcvsr::ModelConfig::from(cfg->cfg);
    tcvsr::TrainConfig::from(cfg->cfg);
  });
}

// ---------------------------------------------------------------- sequences

tcvsr_status tcvsr_synth(const char* pattern, double dx, double dy, int frames, int height, int width, uint64_t seed,
                         tcvsr_sequence** out) {
  return guard([&] {
    need(pattern, "pattern");
    need(out, "out");
    auto s = tcvsr::synth_sequence(tcvsr::parse_pattern(pattern), {dx, dy}, frames, height, width, seed);
    *out = new tcvsr_sequence{std::move(s)};
  });
}

tcvsr_status tcvsr_sequence_load(const char* dir, tcvsr_sequence** out) {
  return guard([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new tcvsr_sequence{tcvsr::load_frames(dir)};
  });
}

tcvsr_status tcvsr_sequence_save(const tcvsr_sequence* seq, const char* dir) {
  return guard([&] {
    need(seq, "seq");
    need(dir, "dir");
    const auto files = tcvsr::save_frames(seq->seq, dir);
    tcvsr::write_sequence_manifest(std::filesystem::path(dir) / "manifest.txt", seq->seq, files);
  });
}

tcvsr_status tcvsr_sequence_degrade(const tcvsr_sequence* hr, const char* kind, int scale, tcvsr_sequence** out,
                                    int64_t* clamped) {
  return guard([&] {
    need(hr, "hr");
    need(kind, "kind");
    need(out, "out");
    const std::string k = kind;
    if (k != "bi" && k != "bd") throw tcvsr::InvalidArgument("unknown degradation '" + k + "' (expected bi or bd)");
    tcvsr::Sequence lr;
    std::int64_t total = 0;
    for (const auto& f : hr->seq.frames) {
      std::int64_t n = 0;
      lr.frames.push_back(k == "bi" ? tcvsr::degrade_bi(f, scale, &n) : tcvsr::degrade_bd(f, scale));
      total += n;
    }
    for (const auto& m : hr->seq.motion) lr.motion.push_back({m[0] / scale, m[1] / scale});
    if (clamped) *clamped = total;
    *out = new tcvsr_sequence{std::move(lr)};
  });
}

tcvsr_status tcvsr_sequence_bicubic_upscale(const tcvsr_sequence* lr, int scale, tcvsr_sequence** out) {
  return guard([&] {
    need(lr, "lr");
    need(out, "out");
    tcvsr::Sequence up;
    for (const auto& f : lr->seq.frames) up.frames.push_back(tcvsr::bicubic_upscale(f, scale));
    *out = new tcvsr_sequence{std::move(up)};
  });
}

tcvsr_status tcvsr_sequence_info(const tcvsr_sequence* seq, int* frames, int* height, int* width) {
  return guard([&] {
    need(seq, "seq");
    if (frames) *frames = static_cast<int>(seq->seq.size());
    if (height) *height = static_cast<int>(seq->seq.height());
    if (width) *width = static_cast<int>(seq->seq.width());
  });
}

tcvsr_status tcvsr_sequence_frame(const tcvsr_sequence* seq, int index, float* dst, size_t count) {
  return guard([&] {
    need(seq, "seq");
    need(dst, "dst");
    if (index < 0 || static_cast<std::size_t>(index) >= seq->seq.size()) throw tcvsr::InvalidArgument("frame index out of range");
    const auto& f = seq->seq.frames[static_cast<std::size_t>(index)];
    if (count < static_cast<size_t>(f.size())) throw tcvsr::InvalidArgument("destination too small");
    std::memcpy(dst, f.ptr(), static_cast<size_t>(f.size()) * sizeof(float));
  });
}

void tcvsr_sequence_free(tcvsr_sequence* seq) { delete seq; }

// ---------------------------------------------------------------- training

tcvsr_status tcvsr_trainer_new(const tcvsr_config* cfg, tcvsr_trainer** out) {
  return guard([&] {
    need(cfg, "cfg");
    need(out, "out");
    *out = new tcvsr_trainer{std::make_unique<tcvsr::Trainer>(cfg->cfg)};
  });
}

tcvsr_status tcvsr_trainer_resume(const char* dir, tcvsr_trainer** out) {
  return guard([&] {
    need(dir, "dir");
    need(out, "out");
    *out = new tcvsr_trainer{tcvsr::Trainer::resume(dir)};
  });
}

tcvsr_status tcvsr_trainer_set_data(tcvsr_trainer* tr, const tcvsr_sequence* hr, const tcvsr_sequence* lr) {
  return guard([&] {
    need(tr, "trainer");
    need(hr, "hr");
    tr->tr->set_data(hr->seq, lr ? lr->seq : degraded(hr->seq, tr->tr->config()));
  });
}

tcvsr_status tcvsr_trainer_step(tcvsr_trainer* tr, tcvsr_train_row* row) {
  return guard([&] {
    need(tr, "trainer");
    const auto r = tr->tr->step();
    if (row) *row = to_c(r);
  });
}

tcvsr_status tcvsr_trainer_run(tcvsr_trainer* tr, int64_t max_steps, tcvsr_train_callback cb, void* user) {
  return guard([&] {
    need(tr, "trainer");
    tr->tr->run(max_steps, [&](const tcvsr::TrainLogRow& r) {
      if (cb) {
        const auto c = to_c(r);
        cb(&c, user);
      }
    });
  });
}

tcvsr_status tcvsr_trainer_progress(const tcvsr_trainer* tr, int64_t* done, int64_t* total) {
  return guard([&] {
    need(tr, "trainer");
    if (done) *done = tr->tr->steps_done();
    if (total) *total = tr->tr->train_config().total_iters;
  });
}

tcvsr_status tcvsr_trainer_save(const tcvsr_trainer* tr, const char* dir) {
  return guard([&] {
    need(tr, "trainer");
    need(dir, "dir");
    tr->tr->save(dir);
  });
}

tcvsr_status tcvsr_trainer_write_log(const tcvsr_trainer* tr, const char* path) {
  return guard([&] {
    need(tr, "trainer");
    need(path, "path");
    tcvsr::write_train_log(path, tr->tr->log());
  });
}

tcvsr_status tcvsr_trainer_config(const tcvsr_trainer* tr, tcvsr_config** out) {
  return guard([&] {
    need(tr, "trainer");
    need(out, "out");
    *out = new tcvsr_config{tr->tr->config()};
  });
}

void tcvsr_trainer_free(tcvsr_trainer* tr) { delete tr; }

// ---------------------------------------------------------------- inference

tcvsr_status tcvsr_model_load(const char* dir, tcvsr_model** out) {
  return guard([&] {
    need(dir, "dir");
    need(out, "out");
    auto m = std::make_unique<tcvsr_model>();
    m->model = tcvsr::load_model(dir, &m->cfg);
    *out = m.release();
  });
}

tcvsr_status tcvsr_model_param_count(const tcvsr_model* m, int64_t* count) {
  return guard([&] {
    need(m, "model");
    need(count, "count");
    *count = m->model->params().count();
  });
}

tcvsr_status tcvsr_model_infer(const tcvsr_model* m, const tcvsr_sequence* lr, tcvsr_sequence** sr) {
  return guard([&] {
    need(m, "model");
    need(lr, "lr");
    need(sr, "sr");
    tcvsr::Sequence out;
    out.frames = tcvsr::super_resolve(*m->model, lr->seq.frames);
    *sr = new tcvsr_sequence{std::move(out)};
  });
}

tcvsr_status tcvsr_model_flow(const tcvsr_model* m, const tcvsr_sequence* seq, int index_ref, int index_src,
                              const char* tct_path, double dx, double dy, int margin, double* epe) {
  return guard([&] {
    need(m, "model");
    need(seq, "seq");
    const auto n = static_cast<int>(seq->seq.size());
    if (index_ref < 0 || index_ref >= n || index_src < 0 || index_src >= n) throw tcvsr::InvalidArgument("frame index out of range");
    if (m->model->config().variant == tcvsr::Variant::Vanilla) throw tcvsr::StateError("vanilla models have no flow estimator");
    const auto& ref = seq->seq.frames[static_cast<std::size_t>(index_ref)];
    const auto& src = seq->seq.frames[static_cast<std::size_t>(index_src)];
    tcvsr::NoGradGuard ng;
    auto batch = [](const tcvsr::Image& f) { return tcvsr::constant(f.reshaped({1, f.dim(0), f.dim(1), f.dim(2)})); };
    const auto flow = m->model->flow().estimate(batch(ref), batch(src)).value();
    if (tct_path) tcvsr::save_tct(tct_path, flow.reshaped({2, flow.dim(2), flow.dim(3)}));
    if (epe) {
      tcvsr::Tensor<float> truth(flow.shape());
      const std::int64_t hw = flow.dim(2) * flow.dim(3);
      for (std::int64_t i = 0; i < hw; ++i) {
        truth[i] = static_cast<float>(dx);
        truth[hw + i] = static_cast<float>(dy);
      }
      *epe = tcvsr::endpoint_error(flow, truth, margin);
    }
  });
}

void tcvsr_model_free(tcvsr_model* m) { delete m; }

// ---------------------------------------------------------------- evaluation

tcvsr_status tcvsr_evaluate(const tcvsr_sequence* sr, const tcvsr_sequence* gt, const char* channel,
                            tcvsr_report** out) {
  return guard([&] {
    need(sr, "sr");
    need(gt, "gt");
    need(out, "out");
    const auto mode = tcvsr::parse_channel_mode(channel ? channel : "y");
    *out = new tcvsr_report{tcvsr::per_frame_report(sr->seq.frames, gt->seq.frames, mode)};
  });
}

tcvsr_status tcvsr_report_summary(const tcvsr_report* r, int* frames, double* mean_psnr, double* mean_ssim,
                                  double* psnr_std) {
  return guard([&] {
    need(r, "report");
    if (frames) *frames = static_cast<int>(r->rep.rows.size());
    if (mean_psnr) *mean_psnr = r->rep.mean_psnr;
    if (mean_ssim) *mean_ssim = r->rep.mean_ssim;
    if (psnr_std) *psnr_std = r->rep.psnr_std;
  });
}

tcvsr_status tcvsr_report_row(const tcvsr_report* r, int index, double* psnr, double* ssim, int* identical) {
  return guard([&] {
    need(r, "report");
    if (index < 0 || static_cast<std::size_t>(index) >= r->rep.rows.size()) throw tcvsr::InvalidArgument("row index out of range");
    const auto& row = r->rep.rows[static_cast<std::size_t>(index)];
    if (psnr) *psnr = row.psnr_db;
    if (ssim) *ssim = row.ssim;
    if (identical) *identical = row.identical ? 1 : 0;
  });
}

tcvsr_status tcvsr_report_write_csv(const tcvsr_report* r, const char* path) {
  return guard([&] {
    need(r, "report");
    need(path, "path");
    tcvsr::write_report_csv(path, r->rep);
  });
}

tcvsr_status tcvsr_report_read_csv(const char* path, tcvsr_report** out) {
  return guard([&] {
    need(path, "path");
    need(out, "out");
    *out = new tcvsr_report{tcvsr::read_report_csv(path)};
  });
}

void tcvsr_report_free(tcvsr_report* r) { delete r; }

tcvsr_status tcvsr_temporal_profile(const tcvsr_sequence* seq, int64_t row, const char* png_path, double* slope) {
  return guard([&] {
    need(seq, "seq");
    const auto p = tcvsr::temporal_profile(seq->seq.frames, row);
    if (png_path) tcvsr::save_png(png_path, p);
    if (slope) *slope = tcvsr::profile_slope(p);
  });
}

// ---------------------------------------------------------------- ablation

tcvsr_status tcvsr_ablate(const tcvsr_config* base, const tcvsr_sequence* train_hr, const tcvsr_sequence* eval_hr,
                          const int* models, int n_models, const char* csv_path, tcvsr_ablation_callback cb,
                          void* user) {
  return guard([&] {
    need(base, "base");
    need(train_hr, "train_hr");
    need(eval_hr, "eval_hr");
    if (n_models > 0) need(models, "models");
    tcvsr::AblationData data;
    data.train_hr = train_hr->seq;
    data.train_lr = degraded(train_hr->seq, base->cfg);
    data.eval_hr = eval_hr->seq;
    data.eval_lr = degraded(eval_hr->seq, base->cfg);
    std::vector<int> ids(models, models + std::max(n_models, 0));
    auto to_c_row = [](const tcvsr::AblationRow& r) {
      return tcvsr_ablation_row{r.spec.model, tcvsr::to_string(r.spec.variant), r.spec.tsb, r.spec.cmb,
                                r.spec.one_stage(), r.spec.progressive(), r.params, r.initial_loss, r.final_loss,
                                r.finite, r.monotone, r.psnr_y, r.psnr_rank};
    };
    auto rows = tcvsr::run_ablation(base->cfg, data, ids, [&](const tcvsr::AblationRow& r) {
      if (cb) {
        const auto c = to_c_row(r);
        cb(&c, user);
      }
    });
    if (csv_path) tcvsr::write_ablation_csv(csv_path, rows);
  });
}

// ---------------------------------------------------------------- gradcheck

tcvsr_status tcvsr_gradcheck(uint64_t seed, int negative_control, tcvsr_gradcheck_callback cb, void* user,
                             int* failures) {
  return guard([&] {
    need(failures, "failures");
    int bad = 0;
    auto report = [&](const tcvsr::GradCheckEntry& e, bool ok) {
      if (!ok) ++bad;
      if (cb) {
        const tcvsr_gradcheck_row row{e.name.c_str(), e.max_rel_error, e.tolerance, e.checked, ok ? 1 : 0, e.seconds};
        cb(&row, user);
      }
    };
    for (const auto& e : tcvsr::run_gradcheck_suite(seed)) report(e, e.passed);
    if (negative_control) {
      const auto e = tcvsr::run_negative_control(seed);
      // Passing here means the corruption went unnoticed.
      report(e, !e.passed);
    }
    *failures = bad;
  });
}

}  // extern "C"
