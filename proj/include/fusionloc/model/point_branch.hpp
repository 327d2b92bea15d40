#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <vector>

#include "fusionloc/nn/module.hpp"

namespace fusionloc::model {

using nn::Rng;
using nn::Tensor;

struct SetAbstractionParams {
  std::size_t point_num = 0;
  double radius = 0.0;
  std::size_t sample_num = 0;
  std::vector<std::size_t> mlp_widths;

  bool operator==(const SetAbstractionParams&) const = default;
};

/// SA1..SA3 from the reference point-cloud extractor, scaled to 2-D scans.
std::vector<SetAbstractionParams> default_set_abstraction();

struct PointBranchConfig {
  std::size_t d_point = 256;
  std::size_t n_fixed = 1024;
  std::vector<SetAbstractionParams> layers = default_set_abstraction();

  void validate() const;
};

/// Centers [B, M, 2] and per-center features [B, M, C]. `features` is
/// undefined for a raw scan.
struct PointFeatureMatrix {
  Tensor centers;
  Tensor features;
};

/// Greedy max-min sampling over `points` (N x 2, row-major). The first pick is
/// `start`; each next pick maximizes the distance to the chosen set among
/// unchosen points, lowest index on ties.
std::vector<std::int32_t> farthest_point_sample(std::span<const double> points, std::size_t m,
                                                std::size_t start);

/// For each center, the first `k` points (index order) within `radius`. Short
/// groups repeat their first member; empty groups use the nearest point.
/// Returns centers.size()/2 * k indices.
std::vector<std::int32_t> ball_query(std::span<const double> points,
                                     std::span<const double> centers, double radius,
                                     std::size_t k);

class SetAbstraction : public nn::Module {
 public:
  SetAbstraction(const SetAbstractionParams& params, std::size_t in_features, Rng& rng);

  /// `start_rng` picks the sampling start per batch item; null means start 0.
  PointFeatureMatrix forward(const PointFeatureMatrix& input, Rng* start_rng);

  const SetAbstractionParams& params() const { return params_; }
  std::size_t out_features() const { return params_.mlp_widths.back(); }

 private:
  SetAbstractionParams params_;
  nn::Mlp mlp_;
};

/// Sigmoid gate: F * sigmoid(MLP(F)) with a C -> C/2 -> C shared MLP.
class PointSelfAttention : public nn::Module {
 public:
  PointSelfAttention(std::size_t channels, Rng& rng);
  Tensor forward(const Tensor& features) const;
  nn::Mlp& mlp() { return mlp_; }

 private:
  nn::Mlp mlp_;
};

/// Shared per-point MLP to d_point channels, then max over points.
class GroupAll : public nn::Module {
 public:
  GroupAll(std::size_t in_features, std::size_t d_point, Rng& rng);
  Tensor forward(const Tensor& features) const;
  nn::Mlp& mlp() { return mlp_; }

 private:
  nn::Mlp mlp_;
};

class PointBranch : public nn::Module {
 public:
  PointBranch(const PointBranchConfig& cfg, Rng& rng);

  /// scans [B, N, 2] -> f_P [B, d_point]. In training mode the sampling start
  /// of every set abstraction is drawn from `rng`; in eval mode it is 0.
  Tensor forward(const Tensor& scans, Rng& rng);

  SetAbstraction& layer(std::size_t i) { return *layers_[i]; }
  PointSelfAttention& attention() { return attention_; }
  GroupAll& group_all() { return group_all_; }

 private:
  std::vector<std::unique_ptr<SetAbstraction>> layers_;
  PointSelfAttention attention_;
  GroupAll group_all_;
};

}  // namespace fusionloc::model
