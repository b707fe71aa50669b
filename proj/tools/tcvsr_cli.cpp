// Command-line front end. Talks to the library only through tcvsr.h.

#include <CLI11.hpp>

#include <cinttypes>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include "tcvsr/tcvsr.h"

namespace fs = std::filesystem;

namespace {

struct Failure {
  tcvsr_status status;
  std::string message;
};

void check(tcvsr_status s) {
  if (s != TCVSR_OK) throw Failure{s, tcvsr_last_error()};
}

template <typename T, void (*Free)(T*)>
struct Deleter {
  void operator()(T* p) const { Free(p); }
};
using ConfigPtr = std::unique_ptr<tcvsr_config, Deleter<tcvsr_config, tcvsr_config_free>>;
using SeqPtr = std::unique_ptr<tcvsr_sequence, Deleter<tcvsr_sequence, tcvsr_sequence_free>>;
using TrainerPtr = std::unique_ptr<tcvsr_trainer, Deleter<tcvsr_trainer, tcvsr_trainer_free>>;
using ModelPtr = std::unique_ptr<tcvsr_model, Deleter<tcvsr_model, tcvsr_model_free>>;
using ReportPtr = std::unique_ptr<tcvsr_report, Deleter<tcvsr_report, tcvsr_report_free>>;

SeqPtr load_seq(const std::string& dir) {
  tcvsr_sequence* s = nullptr;
  check(tcvsr_sequence_load(dir.c_str(), &s));
  return SeqPtr(s);
}

std::string config_text(const tcvsr_config* cfg) {
  size_t n = 0;
  check(tcvsr_config_to_text(cfg, nullptr, 0, &n));
  std::string s(n, '\0');
  check(tcvsr_config_to_text(cfg, s.data(), s.size(), &n));
  s.resize(n - 1);
  return s;
}

struct Globals {
  std::string config_path;
  std::string preset = "toy";
  std::vector<std::string> assignments;
  std::uint64_t seed = 0;
  bool seed_given = false;
  std::string out;
};

// Preset, then the config file, then --set assignments, then --seed.
ConfigPtr resolve_config(const Globals& g, const std::vector<std::string>& extra = {}) {
  tcvsr_config* c = nullptr;
  check(tcvsr_config_new(g.preset.c_str(), &c));
  ConfigPtr cfg(c);
  if (!g.config_path.empty()) check(tcvsr_config_load_file(cfg.get(), g.config_path.c_str()));
  for (const auto& a : g.assignments) check(tcvsr_config_assign(cfg.get(), a.c_str()));
  for (const auto& a : extra) check(tcvsr_config_assign(cfg.get(), a.c_str()));
  if (g.seed_given) check(tcvsr_config_set(cfg.get(), "train.seed", std::to_string(g.seed).c_str()));
  check(tcvsr_config_validate(cfg.get()));
  return cfg;
}

void write_manifest(const fs::path& out, const std::string& command, const tcvsr_config* cfg,
                    const std::vector<std::pair<std::string, std::string>>& outputs) {
  std::ofstream m(out / "run_manifest.txt");
  if (!m) throw Failure{TCVSR_ERR_IO, "cannot write " + (out / "run_manifest.txt").string()};
  m << "version " << tcvsr_version() << '\n' << "command " << command << '\n';
  if (cfg) {
    size_t n = 0;
    check(tcvsr_config_get(cfg, "train.seed", nullptr, 0, &n));
    std::string seed(n, '\0');
    check(tcvsr_config_get(cfg, "train.seed", seed.data(), seed.size(), &n));
    seed.resize(n - 1);
    m << "seed " << seed << "\n[config]\n" << config_text(cfg);
  }
  m << "[outputs]\n";
  for (const auto& [k, v] : outputs) m << k << '=' << v << '\n';
}

std::pair<double, double> parse_pair(const std::string& s) {
  std::istringstream is(s);
  double a = 0, b = 0;
  char comma = 0;
  if (!(is >> a >> comma >> b) || comma != ',' || !is.eof()) throw CLI::ValidationError("--motion", "expected DX,DY");
  return {a, b};
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Video super-resolution toolkit: synthetic data, training, inference and diagnostics"};
  app.require_subcommand(1);
  Globals g;
  app.add_option("--config", g.config_path, "key=value config file")->check(CLI::ExistingFile);
  app.add_option("--preset", g.preset, "base preset (toy or full)")->check(CLI::IsMember({"toy", "full"}));
  app.add_option("--set", g.assignments, "override a config key (key=value), repeatable");
  app.add_option("--seed", g.seed, "random seed")->each([&](const std::string&) { g.seed_given = true; });
  app.add_option("--out", g.out, "output directory");
  app.fallthrough();

  // synth
  auto* synth = app.add_subcommand("synth", "generate a synthetic translating HR sequence");
  std::string pattern = "checkerboard", motion = "2,0";
  int frames = 16, size = 0, height = 128, width = 128;
  synth->add_option("--pattern", pattern)->check(CLI::IsMember({"checkerboard", "gradient-noise", "text-like"}));
  synth->add_option("--motion", motion, "per-frame displacement DX,DY in pixels");
  synth->add_option("--frames", frames)->check(CLI::PositiveNumber);
  synth->add_option("--size", size, "square frame size (overrides --height/--width)");
  synth->add_option("--height", height);
  synth->add_option("--width", width);

  // degrade
  auto* degrade = app.add_subcommand("degrade", "produce LR frames with BI or BD degradation");
  std::string in_dir, kind = "bi";
  int scale = 4;
  degrade->add_option("--in", in_dir, "HR frame directory")->required();
  degrade->add_option("--kind", kind)->check(CLI::IsMember({"bi", "bd"}));
  degrade->add_option("--scale", scale)->check(CLI::IsMember({2, 4}));

  // train
  auto* train = app.add_subcommand("train", "train a model on HR (and optional LR) frames");
  std::string hr_dir, lr_dir, resume_dir;
  std::int64_t iters = -1, max_steps = -1;
  std::string variant;
  int log_every = 50;
  train->add_option("--hr", hr_dir, "HR frame directory")->required();
  train->add_option("--lr", lr_dir, "LR frame directory (default: degrade HR on the fly)");
  train->add_option("--iters", iters, "train.total_iters");
  train->add_option("--variant", variant, "recurrent variant")->check(CLI::IsMember({"vanilla", "motion", "hybrid"}));
  train->add_option("--resume", resume_dir, "checkpoint directory to continue from");
  train->add_option("--max-steps", max_steps, "stop after this many steps (checkpoint is still written)");
  train->add_option("--log-every", log_every);

  // infer
  auto* infer = app.add_subcommand("infer", "super-resolve an LR frame directory");
  std::string ckpt;
  infer->add_option("--checkpoint", ckpt)->required();
  infer->add_option("--in", in_dir, "LR frame directory")->required();

  // eval
  auto* eval = app.add_subcommand("eval", "score SR frames against ground truth");
  std::string sr_dir, gt_dir, channel = "y";
  std::int64_t profile_row = -1;
  eval->add_option("--sr", sr_dir)->required();
  eval->add_option("--gt", gt_dir)->required();
  eval->add_option("--channel", channel)->check(CLI::IsMember({"y", "rgb"}));
  eval->add_option("--profile-row", profile_row, "also write the temporal profile of this row");

  // ablate
  auto* ablate = app.add_subcommand("ablate", "train and score the twelve-model ablation grid");
  std::string eval_hr_dir;
  std::vector<int> models;
  ablate->add_option("--hr", hr_dir, "training HR frames")->required();
  ablate->add_option("--eval-hr", eval_hr_dir, "held-out HR frames")->required();
  ablate->add_option("--models", models, "subset of models 1..12")->delimiter(',')->check(CLI::Range(1, 12));
  ablate->add_option("--iters", iters, "train.total_iters per model");

  // gradcheck
  auto* gradcheck = app.add_subcommand("gradcheck", "finite-difference check of every differentiable op");
  bool negative = false;
  gradcheck->add_flag("--negative-control", negative, "also verify that a broken gradient is caught");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  auto need_out = [&]() -> fs::path {
    if (g.out.empty()) throw CLI::RequiredError("--out");
    fs::create_directories(g.out);
    return g.out;
  };

  try {
    if (synth->parsed()) {
      const fs::path out = need_out();
      if (size > 0) height = width = size;
      const auto [dx, dy] = parse_pair(motion);
      tcvsr_sequence* s = nullptr;
      check(tcvsr_synth(pattern.c_str(), dx, dy, frames, height, width, g.seed, &s));
      SeqPtr seq(s);
      check(tcvsr_sequence_save(seq.get(), out.string().c_str()));
      std::printf("wrote %d frames %dx%d to %s\n", frames, width, height, out.string().c_str());
    } else if (degrade->parsed()) {
      const fs::path out = need_out();
      auto hr = load_seq(in_dir);
      tcvsr_sequence* s = nullptr;
      std::int64_t clamped = 0;
      check(tcvsr_sequence_degrade(hr.get(), kind.c_str(), scale, &s, &clamped));
      SeqPtr lr(s);
      check(tcvsr_sequence_save(lr.get(), out.string().c_str()));
      int n = 0, h = 0, w = 0;
      check(tcvsr_sequence_info(lr.get(), &n, &h, &w));
      std::printf("wrote %d %s frames %dx%d (%" PRId64 " values clamped)\n", n, kind.c_str(), w, h, clamped);
    } else if (train->parsed()) {
      const fs::path out = need_out();
      TrainerPtr tr;
      if (!resume_dir.empty()) {
        tcvsr_trainer* t = nullptr;
        check(tcvsr_trainer_resume(resume_dir.c_str(), &t));
        tr.reset(t);
      } else {
        std::vector<std::string> extra;
        if (iters > 0) extra.push_back("train.total_iters=" + std::to_string(iters));
        if (!variant.empty()) extra.push_back("model.variant=" + variant);
        auto cfg = resolve_config(g, extra);
        tcvsr_trainer* t = nullptr;
        check(tcvsr_trainer_new(cfg.get(), &t));
        tr.reset(t);
      }
      auto hr = load_seq(hr_dir);
      SeqPtr lr = lr_dir.empty() ? nullptr : load_seq(lr_dir);
      check(tcvsr_trainer_set_data(tr.get(), hr.get(), lr.get()));
      auto cb = [](const tcvsr_train_row* r, void* user) {
        const int every = *static_cast<int*>(user);
        if (every > 0 && r->step % every == 0) {
          std::printf("step %" PRId64 " loss %.6f sr %.6f flow %.6f lr %.3g\n", r->step, r->loss, r->sr_loss,
                      r->flow_loss, r->lr_main);
          std::fflush(stdout);
        }
      };
      check(tcvsr_trainer_run(tr.get(), max_steps, cb, &log_every));
      const fs::path ck = out / "checkpoint";
      check(tcvsr_trainer_save(tr.get(), ck.string().c_str()));
      check(tcvsr_trainer_write_log(tr.get(), (out / "train_log.csv").string().c_str()));
      tcvsr_config* c = nullptr;
      check(tcvsr_trainer_config(tr.get(), &c));
      ConfigPtr cfg(c);
      write_manifest(out, "train", cfg.get(),
                     {{"checkpoint", ck.string()}, {"loss_log", (out / "train_log.csv").string()}, {"hr", hr_dir},
                      {"lr", lr_dir.empty() ? "(degraded on the fly)" : lr_dir}});
      std::int64_t done = 0, total = 0;
      check(tcvsr_trainer_progress(tr.get(), &done, &total));
      std::printf("trained %" PRId64 "/%" PRId64 " steps; checkpoint in %s\n", done, total, ck.string().c_str());
    } else if (infer->parsed()) {
      const fs::path out = need_out();
      tcvsr_model* m = nullptr;
      check(tcvsr_model_load(ckpt.c_str(), &m));
      ModelPtr model(m);
      auto lr = load_seq(in_dir);
      tcvsr_sequence* s = nullptr;
      check(tcvsr_model_infer(model.get(), lr.get(), &s));
      SeqPtr sr(s);
      check(tcvsr_sequence_save(sr.get(), out.string().c_str()));
      write_manifest(out, "infer", nullptr, {{"checkpoint", ckpt}, {"input", in_dir}});
      int n = 0, h = 0, w = 0;
      check(tcvsr_sequence_info(sr.get(), &n, &h, &w));
      std::printf("wrote %d SR frames %dx%d\n", n, w, h);
    } else if (eval->parsed()) {
      const fs::path out = need_out();
      auto sr = load_seq(sr_dir);
      auto gt = load_seq(gt_dir);
      tcvsr_report* r = nullptr;
      check(tcvsr_evaluate(sr.get(), gt.get(), channel.c_str(), &r));
      ReportPtr rep(r);
      const fs::path csv = out / "metrics.csv";
      check(tcvsr_report_write_csv(rep.get(), csv.string().c_str()));
      int n = 0;
      double mp = 0, ms = 0, sd = 0;
      check(tcvsr_report_summary(rep.get(), &n, &mp, &ms, &sd));
      std::vector<std::pair<std::string, std::string>> outs{{"metrics", csv.string()}};
      std::ofstream summary(out / "summary.txt");
      summary.precision(17);
      summary << "channel " << channel << "\nframes " << n << "\nmean_psnr_db " << mp << "\nmean_ssim " << ms
              << "\npsnr_std_db " << sd << '\n';
      if (profile_row >= 0) {
        const fs::path png = out / "profile.png";
        double slope = 0;
        check(tcvsr_temporal_profile(sr.get(), profile_row, png.string().c_str(), &slope));
        summary << "profile_row " << profile_row << "\nprofile_slope_px_per_frame " << slope << '\n';
        outs.push_back({"profile", png.string()});
      }
      write_manifest(out, "eval", nullptr, outs);
      std::printf("%d frames: PSNR %.4f dB (std %.4f), SSIM %.5f [%s]\n", n, mp, sd, ms, channel.c_str());
    } else if (ablate->parsed()) {
      const fs::path out = need_out();
      std::vector<std::string> extra;
      if (iters > 0) extra.push_back("train.total_iters=" + std::to_string(iters));
      auto cfg = resolve_config(g, extra);
      auto hr = load_seq(hr_dir);
      auto ev = load_seq(eval_hr_dir);
      const fs::path csv = out / "ablation.csv";
      auto cb = [](const tcvsr_ablation_row* r, void*) {
        std::printf("model %2d %-7s tsb=%d cmb=%d params=%" PRId64 " loss %.4f -> %.4f monotone=%d PSNR(Y) %.3f\n",
                    r->model, r->variant, r->tsb, r->cmb, r->params, r->initial_loss, r->final_loss, r->monotone,
                    r->psnr_y);
        std::fflush(stdout);
      };
      check(tcvsr_ablate(cfg.get(), hr.get(), ev.get(), models.data(), static_cast<int>(models.size()),
                         csv.string().c_str(), cb, nullptr));
      write_manifest(out, "ablate", cfg.get(), {{"table", csv.string()}});
    } else if (gradcheck->parsed()) {
      int failures = 0;
      auto cb = [](const tcvsr_gradcheck_row* r, void*) {
        std::printf("%-24s max_rel_err %.3e (tol %.0e, %" PRId64 " entries, %.2fs) %s\n", r->name, r->max_rel_error,
                    r->tolerance, r->checked, r->seconds, r->passed ? "ok" : "FAIL");
      };
      check(tcvsr_gradcheck(g.seed, negative ? 1 : 0, cb, nullptr, &failures));
      std::printf("%s: %d failure(s)\n", failures ? "FAILED" : "all passed", failures);
      return failures ? 1 : 0;
    }
  } catch (const Failure& f) {
    std::fprintf(stderr, "error (%s): %s\n", tcvsr_status_name(f.status), f.message.c_str());
    return 1;
  } catch (const CLI::Error& e) {
    app.exit(e);
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
  return 0;
}
