#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>

#include "tcvsr/ablation.hpp"
#include "tcvsr/trainer.hpp"

using namespace tcvsr;
namespace fs = std::filesystem;

namespace {

Config small_config(std::int64_t iters = 6) {
  auto c = Config::preset("toy");
  c.set("model.channels", "4");
  c.set("model.resblocks", "1");
  c.set("model.cmb_blocks", "1");
  c.set("model.tsb_blocks", "1");
  c.set("model.pyramid_channels", "4");
  c.set("model.flow_channels", "4");
  c.set("model.embed_dim", "8");
  c.set("train.patch_lr", "8");
  c.set("train.batch", "1");
  c.set("train.clip_len", "3");
  c.set("train.total_iters", std::to_string(iters));
  c.set("train.freeze_flow_iters", "2");
  c.set("train.seed", "5");
  return c;
}

struct Data {
  Sequence hr, lr;
};

Data small_data() {
  Data d;
  d.hr = synth_sequence(Pattern::Checkerboard, {4.0, 0.0}, 5, 64, 64, 1);
  d.lr = degrade_sequence(d.hr, "bi", 4);
  return d;
}

fs::path scratch(const std::string& name) {
  auto p = fs::temp_directory_path() / ("tcvsr_test_" + name);
  fs::remove_all(p);
  return p;
}

bool same_params(const Model<float>& a, const Model<float>& b) {
  const auto& ea = a.params().entries();
  const auto& eb = b.params().entries();
  if (ea.size() != eb.size()) return false;
  for (std::size_t i = 0; i < ea.size(); ++i)
    if (ea[i].name != eb[i].name || !(ea[i].var.value() == eb[i].var.value())) return false;
  return true;
}

}  // namespace

TEST_CASE("training is seed deterministic") {
  const auto d = small_data();
  Trainer a(small_config(4)), b(small_config(4));
  a.set_data(d.hr, d.lr);
  b.set_data(d.hr, d.lr);
  a.run();
  b.run();
  REQUIRE(a.log().size() == 4);
  for (std::size_t i = 0; i < 4; ++i) CHECK(a.log()[i].loss == b.log()[i].loss);
  CHECK(same_params(a.model(), b.model()));
}

TEST_CASE("flow parameters stay frozen for the configured steps") {
  const auto d = small_data();
  Trainer t(small_config(4));
  t.set_data(d.hr, d.lr);
  auto snapshot = [&] {
    std::vector<Tensor<float>> v;
    for (const auto& e : t.model().params().entries())
      if (e.group == ParamGroup::Flow) v.push_back(e.var.value());
    return v;
  };
  const auto init = snapshot();
  REQUIRE_FALSE(init.empty());
  t.step();
  t.step();
  CHECK(snapshot() == init);
  CHECK(t.log()[1].lr_flow == 0.0);
  t.step();
  CHECK_FALSE(snapshot() == init);
  CHECK(t.log()[2].lr_flow > 0.0);
  CHECK(t.log()[0].lr_main == doctest::Approx(1e-3));
}

TEST_CASE("resuming continues the step counter, schedule and data stream") {
  const auto d = small_data();
  Trainer full(small_config(6));
  full.set_data(d.hr, d.lr);
  full.run();

  const auto dir = scratch("resume");
  {
    Trainer part(small_config(6));
    part.set_data(d.hr, d.lr);
    part.run(3);
    part.save(dir);
  }
  auto resumed = Trainer::resume(dir);
  CHECK(resumed->steps_done() == 3);
  resumed->set_data(d.hr, d.lr);
  resumed->run();
  CHECK(resumed->steps_done() == 6);
  REQUIRE(resumed->log().size() == 6);
  for (std::size_t i = 0; i < 6; ++i) {
    CHECK(resumed->log()[i].step == full.log()[i].step);
    CHECK(resumed->log()[i].loss == full.log()[i].loss);
    CHECK(resumed->log()[i].lr_main == full.log()[i].lr_main);
  }
  CHECK(same_params(resumed->model(), full.model()));
  CHECK_THROWS_AS(resumed->step(), StateError);
  fs::remove_all(dir);
}

TEST_CASE("non-finite loss aborts with the step number") {
  auto d = small_data();
  for (auto& f : d.lr.frames) f.fill(std::nanf(""));
  Trainer t(small_config(3));
  t.set_data(d.hr, d.lr);
  CHECK_THROWS_WITH_AS(t.step(), doctest::Contains("step 1"), NumericError);
}

TEST_CASE("set_data validates shapes") {
  const auto d = small_data();
  Trainer t(small_config(3));
  CHECK_THROWS_AS(t.step(), StateError);
  auto short_seq = d;
  short_seq.hr.frames.resize(2);
  short_seq.lr.frames.resize(2);
  CHECK_THROWS_AS(t.set_data(short_seq.hr, short_seq.lr), ShapeError);
  CHECK_THROWS_AS(t.set_data(d.hr, d.hr), ShapeError);
  auto bad = small_config(3);
  bad.set("train.patch_lr", "6");
  CHECK_THROWS_AS(Trainer{bad}, ConfigError);
}

TEST_CASE("loss log and model checkpoints round trip") {
  const auto d = small_data();
  Trainer t(small_config(3));
  t.set_data(d.hr, d.lr);
  t.run();
  const auto dir = scratch("ckpt");
  t.save(dir);
  const auto log = read_train_log(dir / "train_log.csv");
  REQUIRE(log.size() == 3);
  CHECK(log[2].loss == t.log()[2].loss);
  CHECK(log[0].step == 1);

  Config cfg;
  auto m = load_model(dir, &cfg);
  CHECK(same_params(*m, t.model()));
  CHECK(cfg.to_text() == t.config().to_text());

  // A shape that disagrees with the configuration is rejected.
  save_tct(dir / "params" / "recon.out.bias.tct", Tensor<float>({5}));
  CHECK_THROWS_AS(load_model(dir, nullptr), ShapeError);
  fs::remove_all(dir);
}

TEST_CASE("augmentations act identically on LR and HR") {
  const auto d = small_data();
  Rng rng(3);
  for (int trial = 0; trial < 8; ++trial) {
    auto clip = crop_clip(d.hr, d.lr, 0, 3, 2, 3, 8, 4);
    const auto orig = clip;
    const auto aug = Augment::draw(rng);
    aug.apply(clip);
    REQUIRE(clip.lr.size() == 3);
    const std::size_t src = aug.reverse ? 2 : 0;
    CHECK(clip.lr[0] == aug.apply(orig.lr[src]));
    CHECK(clip.hr[0] == aug.apply(orig.hr[src]));
  }
  Augment t;
  t.transpose = true;
  Image img({1, 2, 3}, std::vector<float>{1, 2, 3, 4, 5, 6});
  const auto out = t.apply(img);
  CHECK(out.shape() == Shape{1, 3, 2});
  CHECK(out(0, 2, 1) == 6);
  CHECK(out(0, 0, 1) == 4);
}

TEST_CASE("ablation grid mirrors the twelve-model layout") {
  const auto g = ablation_grid();
  REQUIRE(g.size() == 12);
  for (int i = 0; i < 12; ++i) {
    CHECK(g[i].model == i + 1);
    CHECK(g[i].variant == (i < 4 ? Variant::Vanilla : i < 8 ? Variant::Motion : Variant::Hybrid));
    CHECK(g[i].progressive() == (i % 4 == 3));
    CHECK(g[i].one_stage() == !g[i].progressive());
  }
  CHECK(g[9].cmb);
  CHECK_FALSE(g[9].tsb);
  CHECK(g[10].tsb);
  CHECK_FALSE(g[10].cmb);
}

TEST_CASE("smoothed monotone trend") {
  CHECK(smoothed_monotone({5, 4, 4.1, 3, 3.2, 2, 2.1, 1.5}));
  CHECK_FALSE(smoothed_monotone({1, 1, 2, 2, 3, 3, 4, 4}));
  CHECK_FALSE(smoothed_monotone({1, 1, 1, 1, 1, 1, 1, 1}));
  CHECK(smoothed_monotone({4, 4, 3, 3.1, 3, 3.1, 2, 2}));  // within 5 % slack
  CHECK_FALSE(smoothed_monotone({1, 2}));
}

TEST_CASE("ablation rows carry exact parameter counts and ranks") {
  const auto d = small_data();
  AblationData data{d.hr, d.lr, d.hr, d.lr};
  auto rows = run_ablation(small_config(4), data, {1, 8, 12});
  REQUIRE(rows.size() == 3);
  CHECK(rows[0].spec.model == 1);
  CHECK(rows[2].spec.model == 12);
  for (const auto& r : rows) {
    Model<float> m(ModelConfig::from(ablation_config(small_config(4), r.spec)), 5);
    CHECK(r.params == m.params().count());
    CHECK(r.finite);
    CHECK(std::isfinite(r.psnr_y));
  }
  std::vector<int> ranks;
  for (const auto& r : rows) ranks.push_back(r.psnr_rank);
  std::sort(ranks.begin(), ranks.end());
  CHECK(ranks == std::vector<int>{1, 2, 3});

  const auto path = fs::temp_directory_path() / "tcvsr_test_ablation.csv";
  write_ablation_csv(path, rows);
  std::ifstream in(path);
  std::string header, line;
  std::getline(in, header);
  CHECK(header.rfind("model,variant,tsb,cmb,one_stage,progressive,params", 0) == 0);
  int n = 0;
  while (std::getline(in, line)) {
    CHECK(std::count(line.begin(), line.end(), ',') == 12);
    ++n;
  }
  CHECK(n == 3);
  fs::remove(path);
}
