#include "fusionloc/train/trainer.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <map>
#include <numeric>
#include <sstream>

#include "fusionloc/data/text.hpp"
#include "fusionloc/error.hpp"
#include "fusionloc/nn/archive.hpp"

namespace fusionloc::train {

namespace fs = std::filesystem;

namespace {

constexpr const char* kLossHeader = "step,loss,beta,gamma";

std::string rng_state(const Rng& rng) {
  std::ostringstream out;
  out << rng;
  return out.str();
}

Rng derived_rng(std::uint64_t seed, std::uint64_t stream) {
  std::seed_seq seq{seed, stream};
  return Rng(seq);
}

}  // namespace

Trainer::Trainer(const RunConfig& cfg, const data::ImageNorm& norm)
    : cfg_(cfg), norm_(norm), rng_(derived_rng(cfg.train.seed, 3)) {
  cfg_.model.validate();
  cfg_.train.validate(cfg_.model);
  Rng init = derived_rng(cfg_.train.seed, 0);
  net_ = std::make_unique<model::FusionLocNet>(cfg_.model, init);
  nn::AdamOptions opt;
  opt.learning_rate = cfg_.train.learning_rate;
  opt.weight_decay = cfg_.train.weight_decay;
  adam_ = std::make_unique<nn::Adam>(net_->parameters(), opt);
}

double Trainer::step(std::span<const Example> examples, std::span<const std::size_t> indices) {
  net_->set_training(true);
  const auto options = batch_options(cfg_.model, cfg_.train.preprocess, cfg_.train.jitter, norm_, data::Mode::train);
  const Batch batch = make_batch(examples, indices, options, rng_);
  adam_->zero_grad();
  const auto pred = net_->forward(batch.input, rng_);
  auto& state = net_->loss_state();
  const auto diverged = [&] {
    std::string last = curve_.empty() ? "none" : data::format_double(curve_.back().loss);
    return DivergenceError("non-finite loss at step " + std::to_string(step_count() + 1) + " (epoch " +
                           std::to_string(epoch_ + 1) + "): beta " + data::format_double(state.beta_value()) +
                           ", gamma " + data::format_double(state.gamma_value()) + ", last finite loss " + last);
  };
  nn::Tensor loss;
  try {
    loss = model::pose_loss(pred.position, pred.orientation, batch.position, batch.orientation, state.beta(),
                            state.gamma());
  } catch (const NumericError&) {
    throw diverged();
  }
  const double value = loss.item();
  if (!std::isfinite(value)) throw diverged();
  loss.backward();
  adam_->step();
  curve_.push_back({step_count(), value, state.beta_value(), state.gamma_value()});
  return value;
}

bool Trainer::finished() const {
  if (cfg_.train.max_steps != 0 && step_count() >= cfg_.train.max_steps) return true;
  return epoch_ >= cfg_.train.epochs;
}

void Trainer::run_epoch(std::span<const Example> examples) {
  if (examples.empty()) throw ArgumentError("training needs at least one example");
  std::vector<std::size_t> order(examples.size());
  std::iota(order.begin(), order.end(), 0);
  std::shuffle(order.begin(), order.end(), rng_);
  const std::size_t batch = cfg_.train.effective_batch_size(cfg_.model);
  for (std::size_t begin = 0; begin < order.size(); begin += batch) {
    const std::size_t end = std::min(order.size(), begin + batch);
    if (end - begin == 1 && order.size() > 1) break;
    if (cfg_.train.max_steps != 0 && step_count() >= cfg_.train.max_steps) break;
    step(examples, std::span<const std::size_t>(order).subspan(begin, end - begin));
  }
  ++epoch_;
}

std::vector<core::Pose2D> Trainer::predict(std::span<const Example> examples, std::size_t batch_size) {
  const bool was_training = net_->training();
  net_->set_training(false);
  nn::NoGradGuard no_grad;
  const auto options = batch_options(cfg_.model, cfg_.train.preprocess, cfg_.train.jitter, norm_, data::Mode::eval);
  // Eval mode draws nothing; a private rng keeps the training stream intact regardless.
  Rng local(0);
  std::vector<core::Pose2D> out;
  out.reserve(examples.size());
  std::vector<std::size_t> idx;
  for (std::size_t begin = 0; begin < examples.size(); begin += batch_size) {
    const std::size_t end = std::min(examples.size(), begin + batch_size);
    idx.resize(end - begin);
    std::iota(idx.begin(), idx.end(), begin);
    const auto pred = net_->forward(make_batch(examples, idx, options, local).input, local);
    for (std::size_t i = 0; i < idx.size(); ++i) {
      const core::Vec2 q{pred.orientation[2 * i], pred.orientation[2 * i + 1]};
      double theta = 0.0;
      try {
        theta = core::vec_to_yaw(q);
      } catch (const DegenerateOrientationError&) {
        // A zero orientation vector has no heading; report it as heading 0.
      }
      out.emplace_back(pred.position[2 * i], pred.position[2 * i + 1], theta);
    }
  }
  net_->set_training(was_training);
  return out;
}

eval::EvalReport Trainer::evaluate(std::span<const Example> examples, std::vector<eval::FrameRecord>* records) {
  const auto pred = predict(examples);
  std::vector<core::Pose2D> truth;
  std::vector<std::string> ids;
  for (const auto& e : examples) {
    truth.push_back(e.pose);
    ids.push_back(e.sequence);
  }
  if (records) {
    records->clear();
    for (std::size_t i = 0; i < examples.size(); ++i) {
      records->push_back(eval::make_record(examples[i].sequence, examples[i].frame, truth[i], pred[i]));
    }
  }
  return eval::evaluate(pred, truth, ids);
}

void Trainer::save(const fs::path& dir) const {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
  nn::Archive archive;
  for (const auto& p : net_->parameters()) archive.put("param/" + p.name, p.tensor);
  for (const auto& b : net_->buffers()) archive.put("buffer/" + b.name, b.tensor);
  const auto& params = adam_->params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    const auto& shape = params[i].tensor.shape();
    const auto& m = adam_->first_moment(i);
    const auto& v = adam_->second_moment(i);
    archive.put("adam_m/" + params[i].name, shape, std::vector<double>(m.begin(), m.end()));
    archive.put("adam_v/" + params[i].name, shape, std::vector<double>(v.begin(), v.end()));
  }
  archive.save(dir / "checkpoint.bin");
  data::write_text(dir / "config.ini", dump_run_config(cfg_));
  data::save_norm(norm_, dir / "norm.txt");
  save_loss_curve(curve_, dir / "loss.csv");
  data::write_text(dir / "checkpoint.txt", "epoch " + std::to_string(epoch_) + "\nstep " +
                                               std::to_string(step_count()) + "\nconfig_hash " +
                                               config_hash(cfg_) + "\nrng " + rng_state(rng_) + "\n");
}

std::unique_ptr<Trainer> Trainer::load(const fs::path& dir) {
  if (!fs::is_directory(dir)) throw IoError("checkpoint directory " + dir.string() + " does not exist");
  const RunConfig cfg = load_run_config(dir / "config.ini");
  std::map<std::string, std::string> manifest;
  for (const auto& line : data::read_lines(dir / "checkpoint.txt")) {
    const auto space = line.find(' ');
    if (space != std::string::npos) manifest[line.substr(0, space)] = line.substr(space + 1);
  }
  for (const char* key : {"epoch", "step", "config_hash", "rng"}) {
    if (!manifest.count(key)) throw FormatError(dir.string() + "/checkpoint.txt: missing '" + key + "'");
  }
  if (manifest["config_hash"] != config_hash(cfg)) {
    throw ConsistencyError(dir.string() + ": config.ini does not match the checkpoint's config hash");
  }
  // Parameters come from the archive, so the pretrained trunk is not reloaded.
  RunConfig build = cfg;
  build.model.image.pretrained.clear();
  auto trainer = std::make_unique<Trainer>(build, data::load_norm(dir / "norm.txt"));
  trainer->cfg_ = cfg;

  const auto archive = nn::Archive::load(dir / "checkpoint.bin");
  for (auto& p : trainer->net_->parameters()) nn::assign(p.tensor, archive.at("param/" + p.name));
  for (auto& b : trainer->net_->buffers()) nn::assign(b.tensor, archive.at("buffer/" + b.name));
  const auto& params = trainer->adam_->params();
  for (std::size_t i = 0; i < params.size(); ++i) {
    for (auto [prefix, moment] : {std::pair{"adam_m/", &trainer->adam_->first_moment(i)},
                                  std::pair{"adam_v/", &trainer->adam_->second_moment(i)}}) {
      const auto& a = archive.at(prefix + params[i].name);
      if (a.values.size() != moment->size()) throw FormatError("optimizer moment size mismatch for " + params[i].name);
      moment->assign(a.values.begin(), a.values.end());
    }
  }
  const std::string ctx = dir.string() + "/checkpoint.txt";
  trainer->epoch_ = static_cast<std::size_t>(data::parse_int(manifest["epoch"], ctx));
  trainer->adam_->set_step_count(data::parse_int(manifest["step"], ctx));
  std::istringstream rng_in(manifest["rng"]);
  rng_in >> trainer->rng_;
  if (!rng_in) throw FormatError(ctx + ": malformed rng state");
  trainer->curve_ = load_loss_curve(dir / "loss.csv");
  return trainer;
}

void save_loss_curve(std::span<const LossPoint> curve, const fs::path& path) {
  std::string out = std::string(kLossHeader) + '\n';
  for (const auto& p : curve) {
    out += std::to_string(p.step) + ',' + data::format_double(p.loss) + ',' + data::format_double(p.beta) + ',' +
           data::format_double(p.gamma) + '\n';
  }
  data::write_text(path, out);
}

std::vector<LossPoint> load_loss_curve(const fs::path& path) {
  const auto lines = data::read_lines(path);
  if (lines.empty() || lines[0] != kLossHeader) throw FormatError(path.string() + ": missing loss curve header");
  std::vector<LossPoint> out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(ln + 1);
    std::string row = lines[ln];
    std::replace(row.begin(), row.end(), ',', ' ');
    const auto tok = data::split_ws(row);
    if (tok.size() != 4) throw FormatError(ctx + ": expected step,loss,beta,gamma");
    out.push_back({static_cast<std::size_t>(data::parse_int(tok[0], ctx)), data::parse_double(tok[1], ctx),
                   data::parse_double(tok[2], ctx), data::parse_double(tok[3], ctx)});
  }
  return out;
}

std::vector<EvalPoint> fit(Trainer& trainer, std::span<const Example> train_examples,
                           std::span<const Example> eval_examples, const TrainOptions& options) {
  std::vector<EvalPoint> history;
  const std::size_t every = trainer.config().train.eval_every;
  auto log = [&](const std::string& msg) {
    if (options.log) options.log(msg);
  };
  if (!options.out_dir.empty()) {
    std::error_code ec;
    fs::create_directories(options.out_dir, ec);
    if (ec) throw IoError("cannot create " + options.out_dir.string() + ": " + ec.message());
  }
  while (!trainer.finished()) {
    trainer.run_epoch(train_examples);
    const auto& curve = trainer.loss_curve();
    char buf[160];
    std::snprintf(buf, sizeof buf, "epoch %zu step %zu loss %.5f beta %.4f gamma %.4f", trainer.epoch(),
                  trainer.step_count(), curve.empty() ? NAN : curve.back().loss,
                  trainer.net().loss_state().beta_value(), trainer.net().loss_state().gamma_value());
    log(buf);
    const bool last = trainer.finished();
    const bool due = last || (every != 0 && trainer.epoch() % every == 0);
    if (!due) continue;
    if (!eval_examples.empty()) {
      std::vector<eval::FrameRecord> records;
      history.push_back({trainer.epoch(), trainer.evaluate(eval_examples, &records)});
      log(eval::format_report(history.back().report));
      if (!options.out_dir.empty()) {
        char name[48];
        std::snprintf(name, sizeof name, "eval_epoch_%04zu.txt", trainer.epoch());
        eval::save_report(history.back().report, options.out_dir / name);
        if (last) eval::save_dump(records, options.out_dir / "eval_frames.csv");
      }
    }
    if (!options.out_dir.empty()) {
      trainer.save(options.out_dir / "checkpoint");
      save_loss_curve(trainer.loss_curve(), options.out_dir / "loss.csv");
    }
  }
  return history;
}

}  // namespace fusionloc::train
