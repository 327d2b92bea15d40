#include <gtest/gtest.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <unistd.h>

#include "fusionloc/error.hpp"
#include "fusionloc/train/trainer.hpp"

using namespace fusionloc;
using namespace fusionloc::train;
namespace fs = std::filesystem;

namespace {

RunConfig tiny_config() {
  RunConfig cfg;
  cfg.world.seed = 5;
  cfg.world.extent_x = 6;
  cfg.world.extent_y = 6;
  cfg.world.obstacle_count = 2;
  cfg.world.lidar_res_deg = 3;
  cfg.world.image_width = 32;
  cfg.world.image_height = 24;
  cfg.layout.lengths = {10, 6};
  cfg.layout.eval_sequences = {2};
  cfg.model.image.d_image = 8;
  cfg.model.image.backbone = {{1}, 4};
  cfg.model.point.d_point = 8;
  cfg.model.point.n_fixed = 32;
  cfg.model.point.layers = {{8, 1.0, 4, {8}}};
  cfg.model.fusion.heads = 2;
  cfg.model.head_hidden = 8;
  cfg.train.preprocess = {24, 16};
  cfg.train.batch_size = 4;
  cfg.train.learning_rate = 1e-3;
  cfg.train.epochs = 2;
  cfg.train.eval_every = 1;
  cfg.train.seed = 9;
  return cfg;
}

class TrainFixture : public ::testing::Test {
 protected:
  static void SetUpTestSuite() {
    root_ = new fs::path(fs::temp_directory_path() / ("fusionloc_train_" + std::to_string(::getpid())));
    fs::remove_all(*root_);
    const RunConfig cfg = tiny_config();
    data::generate_dataset(cfg.generator(), *root_ / "data");
    norm_ = new data::ImageNorm(data::load_norm(*root_ / "data" / "norm.txt"));
    train_ = new std::vector<Example>(
        prepare_examples(load_split(*root_ / "data", data::Split::train), cfg.train.preprocess));
    eval_ = new std::vector<Example>(
        prepare_examples(load_split(*root_ / "data", data::Split::eval), cfg.train.preprocess));
  }
  static void TearDownTestSuite() {
    fs::remove_all(*root_);
    delete root_;
    delete norm_;
    delete train_;
    delete eval_;
  }

  static std::vector<std::vector<double>> snapshot(Trainer& t) {
    std::vector<std::vector<double>> out;
    for (auto& p : t.net().parameters()) {
      const auto d = p.tensor.data();
      out.emplace_back(d.begin(), d.end());
    }
    return out;
  }

  static inline fs::path* root_ = nullptr;
  static inline data::ImageNorm* norm_ = nullptr;
  static inline std::vector<Example>* train_ = nullptr;
  static inline std::vector<Example>* eval_ = nullptr;
};

}  // namespace

TEST(Config, DefaultDumpIsAFixedPoint) {
  const RunConfig cfg;
  const std::string dump = dump_run_config(cfg);
  EXPECT_EQ(dump_run_config(parse_run_config(dump)), dump);
  EXPECT_EQ(config_hash(parse_run_config(dump)), config_hash(cfg));
}

TEST(Config, CustomValuesRoundTrip) {
  const RunConfig cfg = tiny_config();
  const RunConfig back = parse_run_config(dump_run_config(cfg));
  EXPECT_EQ(back.world.image_width, 32u);
  EXPECT_EQ(back.layout.lengths, (std::vector<std::size_t>{10, 6}));
  EXPECT_EQ(back.model.image.backbone, cfg.model.image.backbone);
  EXPECT_EQ(back.model.point.layers.size(), 1u);
  EXPECT_EQ(back.model.point.layers[0].mlp_widths, std::vector<std::size_t>{8});
  EXPECT_EQ(back.train.learning_rate, 1e-3);
  EXPECT_EQ(back.train.preprocess.crop, 16u);
  EXPECT_EQ(config_hash(back), config_hash(cfg));
}

TEST(Config, PartialFileKeepsDefaults) {
  const RunConfig cfg = parse_run_config("[model]\nfusion = concat\nnorm = layer\n[train]\nseed = 4\n");
  EXPECT_EQ(cfg.model.fusion.mode, model::FusionMode::concat);
  EXPECT_EQ(cfg.model.fusion.norm, model::NormKind::layer);
  EXPECT_EQ(cfg.train.seed, 4u);
  EXPECT_EQ(cfg.train.learning_rate, 1e-4);
  EXPECT_EQ(cfg.model.image.d_image, 256u);
}

TEST(Config, RejectsBadInput) {
  EXPECT_THROW(parse_run_config("[model]\nwidth = 3\n"), ConfigError);
  EXPECT_THROW(parse_run_config("seed = 3\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nepochs = many\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[model]\nnorm = group\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train\n"), ConfigError);
  EXPECT_THROW(parse_run_config("[train]\nepochs = -1\n"), ConfigError);
}

TEST(Config, HashTracksEveryChange) {
  RunConfig a, b;
  b.train.weight_decay = 2e-4;
  EXPECT_NE(config_hash(a), config_hash(b));
  b = a;
  b.layout.eval_sequences = {3};
  EXPECT_NE(config_hash(a), config_hash(b));
  EXPECT_EQ(config_hash(a).size(), 64u);
}

TEST(Config, BatchSizeDefaults) {
  TrainConfig t;
  model::ModelConfig m;
  EXPECT_EQ(t.effective_batch_size(m), 256u);
  m.image.d_image = m.point.d_point = 2048;
  EXPECT_EQ(t.effective_batch_size(m), 64u);
  m.point.d_point = 1024;
  EXPECT_EQ(t.effective_batch_size(m), 256u);
  t.batch_size = 7;
  EXPECT_EQ(t.effective_batch_size(m), 7u);
}

TEST(Config, Validation) {
  RunConfig cfg = tiny_config();
  EXPECT_NO_THROW(cfg.validate());
  cfg.train.batch_size = 1;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg.model.fusion.norm = model::NormKind::layer;
  EXPECT_NO_THROW(cfg.validate());
  cfg.train.jitter.hue = 0.6;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.train.preprocess.crop = 32;
  EXPECT_THROW(cfg.validate(), ConfigError);
  cfg = tiny_config();
  cfg.layout.eval_sequences = {3};
  EXPECT_THROW(cfg.validate(), ConfigError);
}

TEST(Config, SeedOverride) {
  RunConfig cfg;
  ::unsetenv("FUSIONLOC_SEED");
  EXPECT_FALSE(apply_seed_override(cfg));
  ::setenv("FUSIONLOC_SEED", "123", 1);
  EXPECT_TRUE(apply_seed_override(cfg));
  EXPECT_EQ(cfg.world.seed, 123u);
  EXPECT_EQ(cfg.train.seed, 123u);
  ::setenv("FUSIONLOC_SEED", "12x", 1);
  EXPECT_THROW(apply_seed_override(cfg), ConfigError);
  ::unsetenv("FUSIONLOC_SEED");
}

TEST(LayoutSpecs, IdsAndSplits) {
  DatasetLayout layout;
  layout.sets = 2;
  const auto specs = layout.specs();
  ASSERT_EQ(specs.size(), 2u);
  EXPECT_EQ(specs[1].id, "set-02");
  EXPECT_EQ(specs[0].sequences[2].id, "seq-03");
  EXPECT_EQ(specs[0].sequences[2].split, data::Split::eval);
  EXPECT_EQ(specs[0].sequences[3].split, data::Split::train);
  std::size_t total = 0;
  for (const auto& s : specs[0].sequences) total += s.length;
  EXPECT_EQ(total, 3964u);
}

TEST_F(TrainFixture, ExamplesCarrySequenceIds) {
  ASSERT_EQ(train_->size(), 10u);
  ASSERT_EQ(eval_->size(), 6u);
  EXPECT_EQ((*train_)[0].sequence, "set-01/seq-01");
  EXPECT_EQ((*eval_)[5].sequence, "set-01/seq-02");
  EXPECT_EQ((*eval_)[5].frame, 5u);
  EXPECT_EQ((*train_)[0].image.rows, 24);
}

TEST_F(TrainFixture, BatchShapes) {
  const RunConfig cfg = tiny_config();
  const auto opts = batch_options(cfg.model, cfg.train.preprocess, cfg.train.jitter, *norm_, data::Mode::train);
  Rng rng(1);
  const std::vector<std::size_t> idx{3, 0, 7};
  const Batch b = make_batch(*train_, idx, opts, rng);
  EXPECT_EQ(b.input.images.shape(), (std::vector<std::size_t>{3, 3, 16, 16}));
  EXPECT_EQ(b.input.scans.shape(), (std::vector<std::size_t>{3, 32, 2}));
  EXPECT_EQ(b.position.shape(), (std::vector<std::size_t>{3, 2}));
  for (std::size_t i = 0; i < 3; ++i) {
    const double c = b.orientation.data()[2 * i], s = b.orientation.data()[2 * i + 1];
    EXPECT_NEAR(c * c + s * s, 1.0, 1e-15);
    EXPECT_EQ(b.position.data()[2 * i], (*train_)[idx[i]].pose.x());
  }
  EXPECT_THROW(make_batch(*train_, std::vector<std::size_t>{}, opts, rng), ArgumentError);
  EXPECT_THROW(make_batch(*train_, std::vector<std::size_t>{10}, opts, rng), ArgumentError);
}

TEST_F(TrainFixture, SingleSensorBatchesOmitTheOtherInput) {
  RunConfig cfg = tiny_config();
  cfg.model.modality = model::Modality::point;
  const auto opts = batch_options(cfg.model, cfg.train.preprocess, cfg.train.jitter, *norm_, data::Mode::eval);
  Rng rng(1);
  const Batch b = make_batch(*train_, std::vector<std::size_t>{0, 1}, opts, rng);
  EXPECT_FALSE(b.input.images.defined());
  EXPECT_TRUE(b.input.scans.defined());
}

TEST_F(TrainFixture, EvalBatchesDoNotDependOnRng) {
  const RunConfig cfg = tiny_config();
  const auto opts = batch_options(cfg.model, cfg.train.preprocess, cfg.train.jitter, *norm_, data::Mode::eval);
  Rng r1(1), r2(2);
  const std::vector<std::size_t> idx{0, 4};
  const Batch a = make_batch(*train_, idx, opts, r1);
  const Batch b = make_batch(*train_, idx, opts, r2);
  EXPECT_TRUE(std::ranges::equal(a.input.images.data(), b.input.images.data()));
  EXPECT_TRUE(std::ranges::equal(a.input.scans.data(), b.input.scans.data()));
}

TEST_F(TrainFixture, ZeroLearningRateLeavesParametersUnchanged) {
  RunConfig cfg = tiny_config();
  cfg.train.learning_rate = 0;
  Trainer t(cfg, *norm_);
  const auto before = snapshot(t);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  t.step(*train_, idx);
  EXPECT_EQ(snapshot(t), before);
  EXPECT_EQ(t.step_count(), 1u);
}

TEST_F(TrainFixture, BalanceTermsMoveAfterOneStep) {
  Trainer t(tiny_config(), *norm_);
  EXPECT_EQ(t.net().loss_state().beta_value(), 0.0);
  EXPECT_EQ(t.net().loss_state().gamma_value(), -3.0);
  const std::vector<std::size_t> idx{0, 1, 2, 3};
  const double loss = t.step(*train_, idx);
  EXPECT_TRUE(std::isfinite(loss));
  EXPECT_NE(t.net().loss_state().beta_value(), 0.0);
  EXPECT_NE(t.net().loss_state().gamma_value(), -3.0);
  ASSERT_EQ(t.loss_curve().size(), 1u);
  EXPECT_EQ(t.loss_curve()[0].loss, loss);
  EXPECT_EQ(t.loss_curve()[0].step, 1u);
}

TEST_F(TrainFixture, SameSeedSameLossCurve) {
  Trainer a(tiny_config(), *norm_), b(tiny_config(), *norm_);
  a.run_epoch(*train_);
  b.run_epoch(*train_);
  ASSERT_EQ(a.loss_curve().size(), 3u);  // 10 examples in batches of 4, 4, 2
  for (std::size_t i = 0; i < 3; ++i) EXPECT_EQ(a.loss_curve()[i].loss, b.loss_curve()[i].loss);
  RunConfig other = tiny_config();
  other.train.seed = 10;
  Trainer c(other, *norm_);
  c.run_epoch(*train_);
  EXPECT_NE(c.loss_curve()[0].loss, a.loss_curve()[0].loss);
}

TEST_F(TrainFixture, TrailingSingletonBatchIsDropped) {
  RunConfig cfg = tiny_config();
  cfg.train.batch_size = 3;
  Trainer t(cfg, *norm_);
  t.run_epoch(*train_);
  EXPECT_EQ(t.step_count(), 3u);
  EXPECT_EQ(t.epoch(), 1u);
}

TEST_F(TrainFixture, MaxStepsStopsTraining) {
  RunConfig cfg = tiny_config();
  cfg.train.max_steps = 2;
  cfg.train.epochs = 50;
  Trainer t(cfg, *norm_);
  while (!t.finished()) t.run_epoch(*train_);
  EXPECT_EQ(t.step_count(), 2u);
}

TEST_F(TrainFixture, ResumeReproducesUninterruptedRun) {
  Trainer straight(tiny_config(), *norm_);
  straight.run_epoch(*train_);
  straight.run_epoch(*train_);

  Trainer first(tiny_config(), *norm_);
  first.run_epoch(*train_);
  const fs::path dir = *root_ / "resume";
  first.save(dir);
  auto resumed = Trainer::load(dir);
  EXPECT_EQ(resumed->epoch(), 1u);
  EXPECT_EQ(resumed->step_count(), 3u);
  resumed->run_epoch(*train_);
  ASSERT_EQ(resumed->loss_curve().size(), straight.loss_curve().size());
  for (std::size_t i = 0; i < straight.loss_curve().size(); ++i) {
    EXPECT_EQ(resumed->loss_curve()[i].loss, straight.loss_curve()[i].loss) << i;
  }
  EXPECT_EQ(snapshot(*resumed), snapshot(straight));
}

TEST_F(TrainFixture, ReloadGivesIdenticalPredictions) {
  Trainer t(tiny_config(), *norm_);
  t.run_epoch(*train_);
  const auto before = t.predict(*eval_);
  const fs::path dir = *root_ / "reload";
  t.save(dir);
  auto back = Trainer::load(dir);
  const auto after = back->predict(*eval_);
  ASSERT_EQ(after.size(), before.size());
  for (std::size_t i = 0; i < after.size(); ++i) EXPECT_TRUE(after[i] == before[i]) << i;
  EXPECT_EQ(back->predict(*eval_, 2)[3].x(), before[3].x());
}

TEST_F(TrainFixture, PredictionLeavesTrainingStateAlone) {
  Trainer a(tiny_config(), *norm_), b(tiny_config(), *norm_);
  a.predict(*eval_);
  a.run_epoch(*train_);
  b.run_epoch(*train_);
  EXPECT_EQ(a.loss_curve().back().loss, b.loss_curve().back().loss);
}

TEST_F(TrainFixture, TamperedConfigIsRejected) {
  Trainer t(tiny_config(), *norm_);
  const fs::path dir = *root_ / "tamper";
  t.save(dir);
  std::ofstream(dir / "config.ini", std::ios::app) << "[train]\nseed = 77\n";
  EXPECT_THROW(Trainer::load(dir), Error);
  EXPECT_THROW(Trainer::load(*root_ / "missing"), IoError);
}

TEST_F(TrainFixture, NonFiniteLossThrowsBeforeUpdate) {
  Trainer t(tiny_config(), *norm_);
  t.net().loss_state().beta().data()[0] = -1e4;
  const auto before = snapshot(t);
  const std::vector<std::size_t> idx{0, 1};
  EXPECT_THROW(t.step(*train_, idx), DivergenceError);
  EXPECT_EQ(snapshot(t), before);
  EXPECT_EQ(t.step_count(), 0u);
}

TEST_F(TrainFixture, LossCurveFileRoundTrip) {
  Trainer t(tiny_config(), *norm_);
  t.run_epoch(*train_);
  const fs::path path = *root_ / "loss.csv";
  save_loss_curve(t.loss_curve(), path);
  const auto back = load_loss_curve(path);
  ASSERT_EQ(back.size(), t.loss_curve().size());
  EXPECT_EQ(back[2].step, 3u);
  EXPECT_EQ(back[2].loss, t.loss_curve()[2].loss);
  EXPECT_EQ(back[1].gamma, t.loss_curve()[1].gamma);
}

TEST_F(TrainFixture, FitWritesReportsAndCheckpoint) {
  Trainer t(tiny_config(), *norm_);
  const fs::path out = *root_ / "fit";
  std::vector<std::string> log;
  const auto points = fit(t, *train_, *eval_, {out, [&](const std::string& s) { log.push_back(s); }});
  ASSERT_EQ(points.size(), 2u);
  EXPECT_EQ(points[1].epoch, 2u);
  EXPECT_EQ(points[1].report.sequences[0].id, "set-01/seq-02");
  EXPECT_TRUE(fs::exists(out / "eval_epoch_0001.txt"));
  EXPECT_TRUE(fs::exists(out / "eval_epoch_0002.txt"));
  EXPECT_EQ(eval::load_dump(out / "eval_frames.csv").size(), 6u);
  EXPECT_EQ(load_loss_curve(out / "loss.csv").size(), 6u);
  EXPECT_EQ(Trainer::load(out / "checkpoint")->epoch(), 2u);
  EXPECT_FALSE(log.empty());
}
