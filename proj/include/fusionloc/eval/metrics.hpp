#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "fusionloc/core/pose.hpp"

namespace fusionloc::eval {

struct ErrorSummary {
  std::string id;
  double median_pos_m = 0.0;
  double mean_pos_m = 0.0;
  double median_ori_deg = 0.0;
  double mean_ori_deg = 0.0;
  std::size_t frames = 0;
};

/// Per-sequence rows sorted by id, and their unweighted average (id "avg").
struct EvalReport {
  std::vector<ErrorSummary> sequences;
  ErrorSummary average;
};

/// Mean of the two middle values for even sizes. Throws ArgumentError when empty.
double median(std::vector<double> values);

/// Errors per frame: position_error_m and angular_error_deg, grouped by
/// sequence id. All three spans must have the same length.
EvalReport evaluate(std::span<const core::Pose2D> predictions, std::span<const core::Pose2D> ground_truth,
                    std::span<const std::string> sequence_ids);

/// One line per sequence then "avg":
///   sequence median_pos_m mean_pos_m median_ori_deg mean_ori_deg
void save_report(const EvalReport& report, const std::filesystem::path& path);
EvalReport load_report(const std::filesystem::path& path);
/// Fixed-width table for terminals.
std::string format_report(const EvalReport& report);

/// One evaluated frame, as dumped for plotting.
struct FrameRecord {
  std::string sequence;
  std::size_t frame = 0;
  core::Pose2D truth;
  core::Pose2D prediction;
  double pos_err_m = 0.0;
  double ori_err_deg = 0.0;
};

FrameRecord make_record(std::string sequence, std::size_t frame, const core::Pose2D& truth,
                        const core::Pose2D& prediction);

/// CSV with header
///   sequence,frame,gt_x,gt_y,gt_theta,pred_x,pred_y,pred_theta,pos_err_m,ori_err_deg
void save_dump(std::span<const FrameRecord> records, const std::filesystem::path& path);
std::vector<FrameRecord> load_dump(const std::filesystem::path& path);

}  // namespace fusionloc::eval
