#include "fusionloc/train/ablation.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <set>
#include <sstream>

#include "fusionloc/data/text.hpp"
#include "fusionloc/error.hpp"

namespace fusionloc::train {

namespace {

template <std::size_t N>
void check_axis(const std::vector<std::size_t>& values, const std::size_t (&allowed)[N], const std::string& axis) {
  if (values.empty()) throw ConfigError("ablation axis " + axis + " is empty");
  if (std::set<std::size_t>(values.begin(), values.end()).size() != values.size()) {
    throw ConfigError("ablation axis " + axis + " repeats a value");
  }
  for (std::size_t v : values) {
    if (std::find(std::begin(allowed), std::end(allowed), v) == std::end(allowed)) {
      std::string list;
      for (std::size_t a : allowed) list += (list.empty() ? "" : ", ") + std::to_string(a);
      throw ConfigError("ablation " + axis + " = " + std::to_string(v) + " is outside {" + list + "}");
    }
  }
}

std::string norm_name(model::NormKind k) { return k == model::NormKind::batch ? "bn" : "ln"; }

}  // namespace

void AblationGrid::validate() const {
  check_axis(d_image, kFusionDims, "d_image");
  check_axis(d_point, kFusionDims, "d_point");
  check_axis(heads, kHeadCounts, "heads");
  check_axis(layers, kLayerCounts, "layers");
  if (norms.empty()) throw ConfigError("ablation axis norm is empty");
  if (std::set<model::NormKind>(norms.begin(), norms.end()).size() != norms.size()) {
    throw ConfigError("ablation axis norm repeats a value");
  }
}

std::size_t AblationGrid::size() const {
  return d_image.size() * d_point.size() * heads.size() * layers.size() * norms.size();
}

std::string AblationCell::name() const {
  return "dI" + std::to_string(d_image) + "_dP" + std::to_string(d_point) + "_h" + std::to_string(heads) + "_l" +
         std::to_string(layers) + "_" + norm_name(norm);
}

void AblationCell::apply(model::ModelConfig& model) const {
  model.image.d_image = d_image;
  model.point.d_point = d_point;
  model.fusion.heads = heads;
  model.fusion.layers = layers;
  model.fusion.norm = norm;
}

std::vector<AblationCell> expand(const AblationGrid& grid) {
  std::vector<AblationCell> cells;
  cells.reserve(grid.size());
  for (auto di : grid.d_image)
    for (auto dp : grid.d_point)
      for (auto h : grid.heads)
        for (auto l : grid.layers)
          for (auto n : grid.norms) cells.push_back({di, dp, h, l, n});
  return cells;
}

std::vector<AblationRow> run_ablation(const AblationGrid& grid, const RunConfig& base, const data::ImageNorm& norm,
                                      std::span<const Example> train_examples, std::span<const Example> eval_examples,
                                      const AblationOptions& options) {
  grid.validate();
  const auto cells = expand(grid);
  std::vector<AblationRow> rows;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    AblationRow row;
    row.cell = cells[i];
    if (options.log) {
      options.log("cell " + std::to_string(i + 1) + "/" + std::to_string(cells.size()) + " " + row.cell.name());
    }
    try {
      RunConfig cfg = base;
      row.cell.apply(cfg.model);
      Trainer trainer(cfg, norm);
      TrainOptions topts;
      if (!options.out_dir.empty()) topts.out_dir = options.out_dir / row.cell.name();
      topts.log = options.log;
      const auto points = fit(trainer, train_examples, eval_examples, topts);
      row.report = points.empty() ? trainer.evaluate(train_examples) : points.back().report;
      row.curve = trainer.loss_curve();
      row.ok = true;
    } catch (const std::exception& e) {
      row.error = e.what();
      if (options.log) options.log("cell " + row.cell.name() + " failed: " + row.error);
    }
    rows.push_back(std::move(row));
  }
  return rows;
}

std::string format_ablation_table(std::span<const AblationRow> rows) {
  std::ostringstream out;
  out << "d_image d_point heads layers norm median_pos_m mean_pos_m median_ori_deg mean_ori_deg status\n";
  out << std::fixed;
  for (const auto& r : rows) {
    const auto& c = r.cell;
    out << c.d_image << ' ' << c.d_point << ' ' << c.heads << ' ' << c.layers << ' ' << norm_name(c.norm);
    if (r.ok) {
      const auto& a = r.report.average;
      out << std::setprecision(4) << ' ' << a.median_pos_m << ' ' << a.mean_pos_m << ' ' << std::setprecision(3)
          << a.median_ori_deg << ' ' << a.mean_ori_deg << " ok\n";
    } else {
      out << " nan nan nan nan failed\n";
    }
  }
  return out.str();
}

void save_ablation_table(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  data::write_text(path, format_ablation_table(rows));
}

void save_trajectories(std::span<const AblationRow> rows, const std::filesystem::path& path) {
  std::ostringstream out;
  out << "cell,step,loss,beta,gamma\n";
  for (const auto& r : rows) {
    if (!r.ok) continue;
    for (const auto& p : r.curve) {
      out << r.cell.name() << ',' << p.step << ',' << data::format_double(p.loss) << ','
          << data::format_double(p.beta) << ',' << data::format_double(p.gamma) << '\n';
    }
  }
  data::write_text(path, out.str());
}

}  // namespace fusionloc::train
