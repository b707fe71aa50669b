#include "tcvsr/trainer.hpp"

#include <cmath>
#include <fstream>
#include <iomanip>
#include <limits>
#include <sstream>

namespace tcvsr {

// ---------------------------------------------------------------- augmentation

Augment Augment::draw(Rng& rng) {
  Augment a;
  a.hflip = rng.coin();
  a.vflip = rng.coin();
  a.transpose = rng.coin();
  a.reverse = rng.coin();
  return a;
}

Image Augment::apply(const Image& img) const {
  const std::int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const std::int64_t oh = transpose ? W : H, ow = transpose ? H : W;
  Image out({C, oh, ow});
  for (std::int64_t c = 0; c < C; ++c)
    for (std::int64_t y = 0; y < oh; ++y)
      for (std::int64_t x = 0; x < ow; ++x) {
        std::int64_t sy = transpose ? x : y, sx = transpose ? y : x;
        if (vflip) sy = H - 1 - sy;
        if (hflip) sx = W - 1 - sx;
        out(c, y, x) = img(c, sy, sx);
      }
  return out;
}

void Augment::apply(ClipPair& clip) const {
  for (auto& f : clip.lr) f = apply(f);
  for (auto& f : clip.hr) f = apply(f);
  if (reverse) {
    std::reverse(clip.lr.begin(), clip.lr.end());
    std::reverse(clip.hr.begin(), clip.hr.end());
  }
}

// ---------------------------------------------------------------- trainer

namespace {

constexpr std::uint64_t kDataStream = 0xDA7A5EEDULL;

Var<float> as_batch(const Image& img) {
  return constant(img.reshaped({1, img.dim(0), img.dim(1), img.dim(2)}));
}

}  // namespace

Trainer::Trainer(Config cfg)
    : cfg_(std::move(cfg)), train_(TrainConfig::from(cfg_)), rng_(train_.seed ^ kDataStream) {
  const auto mc = ModelConfig::from(cfg_);
  if (train_.patch_lr % mc.size_multiple()) {
    throw ConfigError("train.patch_lr " + std::to_string(train_.patch_lr) + " must be a multiple of " +
                      std::to_string(mc.size_multiple()));
  }
  model_ = std::make_unique<Model<float>>(mc, train_.seed);
  for (const auto& e : model_->params().entries()) {
    if (e.group == ParamGroup::Flow) {
      flow_params_.push_back(e.var);
      flow_names_.push_back(e.name);
    } else {
      main_params_.push_back(e.var);
      main_names_.push_back(e.name);
    }
  }
  const AdamHyper h{train_.beta1, train_.beta2, train_.eps_opt};
  adam_main_ = AdamState<float>(main_params_, h);
  adam_flow_ = AdamState<float>(flow_params_, h);
}

void Trainer::set_data(Sequence hr, Sequence lr) {
  const int s = model_->config().scale;
  if (hr.size() != lr.size() || hr.size() == 0) throw ShapeError("train: HR and LR sequences must be equal-length and non-empty");
  if (hr.height() != lr.height() * s || hr.width() != lr.width() * s) {
    throw ShapeError("train: LR frames must be HR size / " + std::to_string(s));
  }
  if (static_cast<int>(lr.size()) < train_.clip_len) throw ShapeError("train: sequence shorter than train.clip_len");
  if (lr.height() < train_.patch_lr || lr.width() < train_.patch_lr) throw ShapeError("train: LR frames smaller than train.patch_lr");
  hr_ = std::move(hr);
  lr_ = std::move(lr);
}

TrainLogRow Trainer::step() {
  if (hr_.size() == 0) throw StateError("train: no data loaded");
  if (finished()) throw StateError("train: already at total_iters");
  const bool flow_active = !flow_params_.empty() && step_ >= train_.freeze_flow_iters;
  const bool flow_term = flow_active && train_.flow_loss_weight > 0;
  const auto eps = static_cast<float>(train_.charbonnier_eps);
  const int B = train_.batch;

  TrainLogRow row;
  row.step = step_ + 1;
  for (int b = 0; b < B; ++b) {
    ClipPair clip = crop_patch_pairs(hr_, lr_, train_.clip_len, train_.patch_lr, model_->config().scale, rng_);
    if (train_.augment) Augment::draw(rng_).apply(clip);
    std::vector<Var<float>> frames;
    for (const auto& f : clip.lr) frames.push_back(as_batch(f));
    SequenceOutputs<float> out;
    try {
      out = model_->forward(frames, flow_term, train_.flow_sr_grad || !flow_term);
    } catch (const NumericError& e) {
      throw NumericError("train: step " + std::to_string(row.step) + ": " + e.what());
    }
    const auto T = static_cast<float>(frames.size());

    Var<float> sr_loss;
    for (std::size_t i = 0; i < frames.size(); ++i) {
      auto l = charbonnier(out.sr[i], as_batch(clip.hr[i]), eps);
      sr_loss = sr_loss.defined() ? add(sr_loss, l) : l;
    }
    sr_loss = scale(sr_loss, 1.0f / T);
    Var<float> total = sr_loss;
    double flow_value = 0;
    if (flow_term) {
      Var<float> fl;
      int terms = 0;
      for (std::size_t i = 0; i < frames.size(); ++i) {
        for (const auto& h : {out.align[i].h_prev, out.align[i].h_next}) {
          if (!h.defined()) continue;
          auto l = charbonnier(h, frames[i], eps);
          fl = fl.defined() ? add(fl, l) : l;
          ++terms;
        }
      }
      if (terms > 0) {
        fl = scale(fl, 1.0f / static_cast<float>(terms));
        flow_value = fl.value()[0];
        total = add(total, scale(fl, static_cast<float>(train_.flow_loss_weight)));
      }
    }
    const double tv = total.value()[0];
    if (!std::isfinite(tv)) {
      throw NumericError("train: non-finite loss at step " + std::to_string(row.step) + " (batch element " +
                         std::to_string(b) + ")");
    }
    row.loss += tv / B;
    row.sr_loss += static_cast<double>(sr_loss.value()[0]) / B;
    row.flow_loss += flow_value / B;
    scale(total, 1.0f / static_cast<float>(B)).backward();
  }

  row.lr_main = cosine_lr(step_, train_.total_iters, train_.lr_main, train_.lr_min);
  adam_step(main_params_, adam_main_, row.lr_main);
  if (flow_active) {
    row.lr_flow = cosine_lr(step_, train_.total_iters, train_.lr_flow, std::min(train_.lr_min, train_.lr_flow));
    adam_step(flow_params_, adam_flow_, row.lr_flow);
  }
  model_->params().zero_grad();
  ++step_;
  log_.push_back(row);
  return row;
}

void Trainer::run(std::int64_t max_steps, const std::function<void(const TrainLogRow&)>& on_step) {
  std::int64_t n = 0;
  while (!finished() && (max_steps < 0 || n < max_steps)) {
    const auto row = step();
    ++n;
    if (on_step) on_step(row);
  }
}

// ---------------------------------------------------------------- checkpoints

namespace {

std::string param_file(const std::string& name) { return name + ".tct"; }

void write_text(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw IoError("cannot write " + path.string());
  out << text;
}

Config read_config(const std::filesystem::path& path) {
  if (!std::filesystem::exists(path)) throw IoError("checkpoint is missing " + path.string());
  Config cfg = Config::preset("full");
  cfg.load_file(path);
  return cfg;
}

}  // namespace

void save_model(const std::filesystem::path& dir, const Model<float>& model, const Config& cfg) {
  namespace fs = std::filesystem;
  fs::create_directories(dir / "params");
  cfg.write_file(dir / "config.txt");
  std::ostringstream man;
  for (const auto& e : model.params().entries()) {
    man << e.name << ' ' << (e.group == ParamGroup::Flow ? "flow" : "main");
    for (auto d : e.var.shape()) man << ' ' << d;
    man << '\n';
    save_tct(dir / "params" / param_file(e.name), e.var.value());
  }
  write_text(dir / "manifest.txt", man.str());
}

std::unique_ptr<Model<float>> load_model(const std::filesystem::path& dir, Config* cfg_out) {
  Config cfg = read_config(dir / "config.txt");
  const auto mc = ModelConfig::from(cfg);
  const auto seed = static_cast<std::uint64_t>(cfg.get_int("train.seed"));
  auto model = std::make_unique<Model<float>>(mc, seed);

  std::ifstream man(dir / "manifest.txt");
  if (!man) throw IoError("checkpoint is missing " + (dir / "manifest.txt").string());
  std::string line;
  std::size_t listed = 0;
  while (std::getline(man, line)) {
    if (line.empty()) continue;
    std::istringstream ls(line);
    std::string name, group;
    ls >> name >> group;
    Shape shape;
    for (std::int64_t d; ls >> d;) shape.push_back(d);
    const auto* e = model->params().find(name);
    if (!e) throw ShapeError("checkpoint parameter '" + name + "' does not exist in the configured model");
    if (e->var.shape() != shape) {
      throw ShapeError("checkpoint parameter '" + name + "' has shape " + shape_str(shape) + ", model expects " +
                       shape_str(e->var.shape()));
    }
    auto t = load_tct<float>(dir / "params" / param_file(name));
    if (t.shape() != shape) throw ShapeError("tensor file for '" + name + "' disagrees with the manifest");
    Var<float> v = e->var;
    v.mutable_value() = std::move(t);
    ++listed;
  }
  if (listed != model->params().entries().size()) {
    throw ShapeError("checkpoint lists " + std::to_string(listed) + " parameters, model has " +
                     std::to_string(model->params().entries().size()));
  }
  if (cfg_out) *cfg_out = cfg;
  return model;
}

void Trainer::save(const std::filesystem::path& dir) const {
  namespace fs = std::filesystem;
  save_model(dir, *model_, cfg_);
  fs::create_directories(dir / "optim");
  auto moments = [&](const std::vector<std::string>& names, const AdamState<float>& st) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      save_tct(dir / "optim" / (names[k] + ".m.tct"), st.m[k]);
      save_tct(dir / "optim" / (names[k] + ".v.tct"), st.v[k]);
    }
  };
  moments(main_names_, adam_main_);
  moments(flow_names_, adam_flow_);
  std::ostringstream st;
  st << "step " << step_ << '\n'
     << "main_step " << adam_main_.step << '\n'
     << "flow_step " << adam_flow_.step << '\n'
     << "rng " << rng_.state() << '\n';
  write_text(dir / "state.txt", st.str());
  write_train_log(dir / "train_log.csv", log_);
}

std::unique_ptr<Trainer> Trainer::resume(const std::filesystem::path& dir) {
  Config cfg = read_config(dir / "config.txt");
  auto tr = std::make_unique<Trainer>(cfg);
  auto loaded = load_model(dir);
  for (std::size_t k = 0; k < loaded->params().entries().size(); ++k) {
    tr->model_->params().entries()[k].var.mutable_value() = loaded->params().entries()[k].var.value();
  }
  auto moments = [&](const std::vector<std::string>& names, AdamState<float>& st) {
    for (std::size_t k = 0; k < names.size(); ++k) {
      st.m[k] = load_tct<float>(dir / "optim" / (names[k] + ".m.tct"));
      st.v[k] = load_tct<float>(dir / "optim" / (names[k] + ".v.tct"));
      if (st.m[k].shape() != st.v[k].shape() || st.m[k].shape() != (names == tr->main_names_ ? tr->main_params_[k] : tr->flow_params_[k]).shape()) {
        throw ShapeError("optimizer moments for '" + names[k] + "' have the wrong shape");
      }
    }
  };
  moments(tr->main_names_, tr->adam_main_);
  moments(tr->flow_names_, tr->adam_flow_);
  std::ifstream in(dir / "state.txt");
  if (!in) throw IoError("checkpoint is missing state.txt");
  std::string line;
  while (std::getline(in, line)) {
    const auto sp = line.find(' ');
    if (sp == std::string::npos) continue;
    const auto key = line.substr(0, sp), val = line.substr(sp + 1);
    if (key == "step") tr->step_ = std::stoll(val);
    else if (key == "main_step") tr->adam_main_.step = std::stoll(val);
    else if (key == "flow_step") tr->adam_flow_.step = std::stoll(val);
    else if (key == "rng") tr->rng_.restore(val);
  }
  tr->log_ = read_train_log(dir / "train_log.csv");
  if (static_cast<std::int64_t>(tr->log_.size()) != tr->step_) throw StateError("checkpoint log length disagrees with its step counter");
  return tr;
}

void write_train_log(const std::filesystem::path& path, const std::vector<TrainLogRow>& log) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write " + path.string());
  out.imbue(std::locale::classic());
  out << std::setprecision(std::numeric_limits<double>::max_digits10);
  out << "step,loss,sr_loss,flow_loss,lr_main,lr_flow\n";
  for (const auto& r : log) {
    out << r.step << ',' << r.loss << ',' << r.sr_loss << ',' << r.flow_loss << ',' << r.lr_main << ',' << r.lr_flow
        << '\n';
  }
}

std::vector<TrainLogRow> read_train_log(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot read " + path.string());
  std::string line;
  std::getline(in, line);
  std::vector<TrainLogRow> rows;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    for (auto& ch : line)
      if (ch == ',') ch = ' ';
    std::istringstream ls(line);
    ls.imbue(std::locale::classic());
    TrainLogRow r;
    if (!(ls >> r.step >> r.loss >> r.sr_loss >> r.flow_loss >> r.lr_main >> r.lr_flow)) {
      throw IoError(path.string() + ": malformed log row");
    }
    rows.push_back(r);
  }
  return rows;
}

}  // namespace tcvsr
