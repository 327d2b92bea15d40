#pragma once

#include <filesystem>
#include <functional>
#include <span>
#include <string>
#include <vector>

#include "fusionloc/train/trainer.hpp"

namespace fusionloc::train {

inline constexpr std::size_t kFusionDims[] = {256, 512, 1024, 2048};
inline constexpr std::size_t kHeadCounts[] = {1, 2, 4, 8};
inline constexpr std::size_t kLayerCounts[] = {1, 2, 4, 6};

/// Cartesian product of the listed values; every axis nonempty.
struct AblationGrid {
  std::vector<std::size_t> d_image{256};
  std::vector<std::size_t> d_point{256};
  std::vector<std::size_t> heads{1};
  std::vector<std::size_t> layers{1};
  std::vector<model::NormKind> norms{model::NormKind::batch};

  /// Dimensions must come from kFusionDims, heads from kHeadCounts and
  /// layers from kLayerCounts; duplicates are errors.
  void validate() const;
  std::size_t size() const;
};

struct AblationCell {
  std::size_t d_image = 0;
  std::size_t d_point = 0;
  std::size_t heads = 0;
  std::size_t layers = 0;
  model::NormKind norm = model::NormKind::batch;

  /// "dI256_dP512_h2_l4_bn"
  std::string name() const;
  void apply(model::ModelConfig& model) const;
};

/// Cells in axis order, d_image slowest and norm fastest.
std::vector<AblationCell> expand(const AblationGrid& grid);

struct AblationRow {
  AblationCell cell;
  bool ok = false;
  std::string error;
  eval::EvalReport report;
  std::vector<LossPoint> curve;
};

struct AblationOptions {
  /// One subdirectory per cell (named by AblationCell::name) when set.
  std::filesystem::path out_dir;
  std::function<void(const std::string&)> log;
};

/// Trains and evaluates one model per cell from `base` with the cell's
/// fusion settings. A cell that throws is recorded as failed and the grid
/// continues.
std::vector<AblationRow> run_ablation(const AblationGrid& grid, const RunConfig& base, const data::ImageNorm& norm,
                                      std::span<const Example> train_examples, std::span<const Example> eval_examples,
                                      const AblationOptions& options = {});

/// Header "d_image d_point heads layers norm median_pos_m mean_pos_m
/// median_ori_deg mean_ori_deg status", one row per cell; failed cells show
/// "nan" errors and status "failed".
std::string format_ablation_table(std::span<const AblationRow> rows);
void save_ablation_table(std::span<const AblationRow> rows, const std::filesystem::path& path);

/// Loss trajectories of every successful cell: "cell,step,loss,beta,gamma".
void save_trajectories(std::span<const AblationRow> rows, const std::filesystem::path& path);

}  // namespace fusionloc::train
