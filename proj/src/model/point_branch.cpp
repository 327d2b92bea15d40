#include "fusionloc/model/point_branch.hpp"

#include <algorithm>
#include <limits>

#include "fusionloc/error.hpp"

namespace fusionloc::model {

std::vector<SetAbstractionParams> default_set_abstraction() {
  return {
      {256, 0.2, 32, {16, 16, 32}},
      {128, 0.4, 16, {32, 32, 64}},
      {64, 0.8, 8, {64, 64, 64}},
  };
}

void PointBranchConfig::validate() const {
  if (d_point == 0) throw ConfigError("point feature dimension must be positive");
  if (layers.empty()) throw ConfigError("point branch needs at least one set abstraction layer");
  std::size_t available = n_fixed;
  for (const auto& sa : layers) {
    if (sa.point_num == 0 || sa.point_num > available) {
      throw ConfigError("set abstraction point_num " + std::to_string(sa.point_num) +
                        " exceeds its input size " + std::to_string(available));
    }
    if (sa.sample_num == 0) throw ConfigError("set abstraction sample_num must be >= 1");
    if (!(sa.radius > 0.0)) throw ConfigError("set abstraction radius must be positive");
    if (sa.mlp_widths.empty() ||
        std::find(sa.mlp_widths.begin(), sa.mlp_widths.end(), 0u) != sa.mlp_widths.end()) {
      throw ConfigError("set abstraction MLP widths must be nonempty and positive");
    }
    available = sa.point_num;
  }
}

std::vector<std::int32_t> farthest_point_sample(std::span<const double> points, std::size_t m,
                                                std::size_t start) {
  const std::size_t n = points.size() / 2;
  if (m > n) {
    throw ArgumentError("farthest_point_sample: requested " + std::to_string(m) + " of " +
                        std::to_string(n) + " points");
  }
  if (m == 0) return {};
  if (start >= n) throw ArgumentError("farthest_point_sample: start index out of range");

  std::vector<std::int32_t> chosen;
  chosen.reserve(m);
  // Chosen points are marked with -1 so they can never win again.
  std::vector<double> min_dist(n, std::numeric_limits<double>::infinity());
  std::size_t current = start;
  for (std::size_t step = 0; step < m; ++step) {
    chosen.push_back(static_cast<std::int32_t>(current));
    min_dist[current] = -1.0;
    if (step + 1 == m) break;
    const double cx = points[2 * current];
    const double cy = points[2 * current + 1];
    std::size_t best = n;
    double best_dist = -1.0;
    for (std::size_t i = 0; i < n; ++i) {
      if (min_dist[i] < 0.0) continue;
      const double dx = points[2 * i] - cx;
      const double dy = points[2 * i + 1] - cy;
      min_dist[i] = std::min(min_dist[i], dx * dx + dy * dy);
      if (min_dist[i] > best_dist) {
        best_dist = min_dist[i];
        best = i;
      }
    }
    current = best;
  }
  return chosen;
}

std::vector<std::int32_t> ball_query(std::span<const double> points,
                                     std::span<const double> centers, double radius,
                                     std::size_t k) {
  if (!(radius > 0.0) || k == 0) throw ArgumentError("ball_query: radius and K must be positive");
  const std::size_t n = points.size() / 2;
  const std::size_t m = centers.size() / 2;
  if (n == 0) throw DegenerateInputError("ball_query: no points");
  const double r2 = radius * radius;
  std::vector<std::int32_t> out(m * k);
  for (std::size_t c = 0; c < m; ++c) {
    const double cx = centers[2 * c];
    const double cy = centers[2 * c + 1];
    std::int32_t* group = out.data() + c * k;
    std::size_t found = 0;
    std::size_t nearest = 0;
    double nearest_d2 = std::numeric_limits<double>::infinity();
    for (std::size_t i = 0; i < n && found < k; ++i) {
      const double dx = points[2 * i] - cx;
      const double dy = points[2 * i + 1] - cy;
      const double d2 = dx * dx + dy * dy;
      if (d2 <= r2) group[found++] = static_cast<std::int32_t>(i);
      if (d2 < nearest_d2) {
        nearest_d2 = d2;
        nearest = i;
      }
    }
    const std::int32_t fill = found > 0 ? group[0] : static_cast<std::int32_t>(nearest);
    std::fill(group + found, group + k, fill);
  }
  return out;
}

SetAbstraction::SetAbstraction(const SetAbstractionParams& params, std::size_t in_features,
                               Rng& rng)
    : params_(params), mlp_([&] {
        std::vector<std::size_t> widths{2 + in_features};
        widths.insert(widths.end(), params.mlp_widths.begin(), params.mlp_widths.end());
        return widths;
      }(), rng, /*relu_last=*/true) {
  register_module("mlp", mlp_);
}

PointFeatureMatrix SetAbstraction::forward(const PointFeatureMatrix& input, Rng* start_rng) {
  const Tensor& xyz = input.centers;
  if (xyz.rank() != 3 || xyz.dim(2) != 2) {
    throw ArgumentError("set abstraction expects [B, N, 2] coordinates, got " +
                        nn::shape_str(xyz.shape()));
  }
  const std::size_t batch = xyz.dim(0);
  const std::size_t n = xyz.dim(1);
  const std::size_t m = params_.point_num;
  const std::size_t k = params_.sample_num;
  if (m > n) {
    throw ArgumentError("set abstraction: point_num " + std::to_string(m) + " exceeds " +
                        std::to_string(n) + " input points");
  }

  std::vector<std::int32_t> center_idx(batch * m);
  std::vector<std::int32_t> group_idx(batch * m * k);
  const auto values = xyz.data();
  for (std::size_t b = 0; b < batch; ++b) {
    const auto pts = values.subspan(b * n * 2, n * 2);
    std::size_t start = 0;
    if (start_rng) start = std::uniform_int_distribution<std::size_t>(0, n - 1)(*start_rng);
    const auto fps = farthest_point_sample(pts, m, start);
    nn::Buffer centers(m * 2);
    for (std::size_t i = 0; i < m; ++i) {
      centers[2 * i] = pts[2 * fps[i]];
      centers[2 * i + 1] = pts[2 * fps[i] + 1];
    }
    std::copy(fps.begin(), fps.end(), center_idx.begin() + b * m);
    const auto groups = ball_query(pts, centers, params_.radius, k);
    std::copy(groups.begin(), groups.end(), group_idx.begin() + b * m * k);
  }

  const Tensor new_centers = nn::gather_rows(xyz, center_idx, {batch, m});
  Tensor grouped = nn::subtract_centers(nn::gather_rows(xyz, group_idx, {batch, m, k}), new_centers);
  if (input.features.defined()) {
    grouped = nn::concat_last(grouped, nn::gather_rows(input.features, group_idx, {batch, m, k}));
  }
  return {new_centers, nn::max_reduce(mlp_.forward(grouped))};
}

PointSelfAttention::PointSelfAttention(std::size_t channels, Rng& rng)
    : mlp_({channels, std::max<std::size_t>(1, channels / 2), channels}, rng, false) {
  register_module("mlp", mlp_);
}

Tensor PointSelfAttention::forward(const Tensor& features) const {
  return nn::mul(features, nn::sigmoid(mlp_.forward(features)));
}

GroupAll::GroupAll(std::size_t in_features, std::size_t d_point, Rng& rng)
    : mlp_({in_features, d_point}, rng, /*relu_last=*/true) {
  register_module("mlp", mlp_);
}

Tensor GroupAll::forward(const Tensor& features) const {
  if (features.rank() != 3) {
    throw ArgumentError("group_all expects [B, M, C], got " + nn::shape_str(features.shape()));
  }
  return nn::max_reduce(mlp_.forward(features));
}

namespace {

std::size_t final_width(const PointBranchConfig& cfg) {
  cfg.validate();
  return cfg.layers.back().mlp_widths.back();
}

}  // namespace

PointBranch::PointBranch(const PointBranchConfig& cfg, Rng& rng)
    : attention_(final_width(cfg), rng), group_all_(final_width(cfg), cfg.d_point, rng) {
  std::size_t features = 0;
  for (std::size_t i = 0; i < cfg.layers.size(); ++i) {
    layers_.push_back(std::make_unique<SetAbstraction>(cfg.layers[i], features, rng));
    register_module("sa" + std::to_string(i + 1), *layers_.back());
    features = cfg.layers[i].mlp_widths.back();
  }
  register_module("attention", attention_);
  register_module("group_all", group_all_);
}

Tensor PointBranch::forward(const Tensor& scans, Rng& rng) {
  PointFeatureMatrix h{scans, Tensor{}};
  for (auto& layer : layers_) h = layer->forward(h, training() ? &rng : nullptr);
  return group_all_.forward(attention_.forward(h.features));
}

}  // namespace fusionloc::model
