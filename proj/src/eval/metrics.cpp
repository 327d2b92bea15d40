#include "fusionloc/eval/metrics.hpp"

#include <algorithm>
#include <cstdio>
#include <map>
#include <numeric>

#include "fusionloc/data/text.hpp"
#include "fusionloc/error.hpp"

namespace fusionloc::eval {

namespace {

using data::format_double;
using data::parse_double;

constexpr const char* kReportHeader = "sequence median_pos_m mean_pos_m median_ori_deg mean_ori_deg";
constexpr const char* kDumpHeader =
    "sequence,frame,gt_x,gt_y,gt_theta,pred_x,pred_y,pred_theta,pos_err_m,ori_err_deg";

double mean(const std::vector<double>& v) {
  return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

std::string report_line(const ErrorSummary& s) {
  return s.id + ' ' + format_double(s.median_pos_m) + ' ' + format_double(s.mean_pos_m) + ' ' +
         format_double(s.median_ori_deg) + ' ' + format_double(s.mean_ori_deg) + '\n';
}

std::vector<std::string_view> split_commas(std::string_view line) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  while (true) {
    const std::size_t comma = line.find(',', start);
    out.push_back(line.substr(start, comma == std::string_view::npos ? std::string_view::npos : comma - start));
    if (comma == std::string_view::npos) break;
    start = comma + 1;
  }
  return out;
}

}  // namespace

double median(std::vector<double> values) {
  if (values.empty()) throw ArgumentError("median of an empty list");
  const std::size_t mid = values.size() / 2;
  std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid), values.end());
  const double upper = values[mid];
  if (values.size() % 2 == 1) return upper;
  const double lower = *std::max_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(mid));
  return (lower + upper) / 2.0;
}

EvalReport evaluate(std::span<const core::Pose2D> predictions, std::span<const core::Pose2D> ground_truth,
                    std::span<const std::string> sequence_ids) {
  if (predictions.size() != ground_truth.size() || predictions.size() != sequence_ids.size()) {
    throw ArgumentError("evaluate: " + std::to_string(predictions.size()) + " predictions, " +
                        std::to_string(ground_truth.size()) + " ground-truth poses and " +
                        std::to_string(sequence_ids.size()) + " sequence ids");
  }
  if (predictions.empty()) throw ArgumentError("evaluate: no frames");
  std::map<std::string, std::pair<std::vector<double>, std::vector<double>>> groups;
  for (std::size_t i = 0; i < predictions.size(); ++i) {
    auto& [pos, ori] = groups[sequence_ids[i]];
    pos.push_back(core::position_error_m(predictions[i].position(), ground_truth[i].position()));
    ori.push_back(core::angular_error_deg(predictions[i].theta(), ground_truth[i].theta()));
  }
  EvalReport report;
  report.average.id = "avg";
  for (const auto& [id, errors] : groups) {
    const auto& [pos, ori] = errors;
    ErrorSummary s{id, median(pos), mean(pos), median(ori), mean(ori), pos.size()};
    report.average.median_pos_m += s.median_pos_m;
    report.average.mean_pos_m += s.mean_pos_m;
    report.average.median_ori_deg += s.median_ori_deg;
    report.average.mean_ori_deg += s.mean_ori_deg;
    report.average.frames += s.frames;
    report.sequences.push_back(std::move(s));
  }
  const double n = static_cast<double>(report.sequences.size());
  report.average.median_pos_m /= n;
  report.average.mean_pos_m /= n;
  report.average.median_ori_deg /= n;
  report.average.mean_ori_deg /= n;
  return report;
}

void save_report(const EvalReport& report, const std::filesystem::path& path) {
  std::string out = std::string(kReportHeader) + '\n';
  for (const auto& s : report.sequences) out += report_line(s);
  out += report_line(report.average);
  data::write_text(path, out);
}

EvalReport load_report(const std::filesystem::path& path) {
  const auto lines = data::read_lines(path);
  if (lines.empty() || lines[0] != kReportHeader) {
    throw FormatError(path.string() + ": missing report header '" + kReportHeader + "'");
  }
  EvalReport report;
  bool have_avg = false;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    const auto tok = data::split_ws(lines[ln]);
    if (tok.empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(ln + 1);
    if (tok.size() != 5) throw FormatError(ctx + ": expected a sequence id and four numbers");
    ErrorSummary s{std::string(tok[0]), parse_double(tok[1], ctx), parse_double(tok[2], ctx),
                   parse_double(tok[3], ctx), parse_double(tok[4], ctx), 0};
    if (s.id == "avg") {
      report.average = s;
      have_avg = true;
    } else {
      report.sequences.push_back(s);
    }
  }
  if (!have_avg) throw FormatError(path.string() + ": missing 'avg' row");
  return report;
}

std::string format_report(const EvalReport& report) {
  std::string out;
  char buf[160];
  std::snprintf(buf, sizeof buf, "%-12s %14s %12s %16s %14s\n", "sequence", "median_pos_m", "mean_pos_m",
                "median_ori_deg", "mean_ori_deg");
  out += buf;
  auto row = [&](const ErrorSummary& s) {
    std::snprintf(buf, sizeof buf, "%-12s %14.3f %12.3f %16.2f %14.2f\n", s.id.c_str(), s.median_pos_m,
                  s.mean_pos_m, s.median_ori_deg, s.mean_ori_deg);
    out += buf;
  };
  for (const auto& s : report.sequences) row(s);
  row(report.average);
  return out;
}

FrameRecord make_record(std::string sequence, std::size_t frame, const core::Pose2D& truth,
                        const core::Pose2D& prediction) {
  return {std::move(sequence),
          frame,
          truth,
          prediction,
          core::position_error_m(prediction.position(), truth.position()),
          core::angular_error_deg(prediction.theta(), truth.theta())};
}

void save_dump(std::span<const FrameRecord> records, const std::filesystem::path& path) {
  std::string out = std::string(kDumpHeader) + '\n';
  for (const auto& r : records) {
    out += r.sequence + ',' + std::to_string(r.frame);
    for (double v : {r.truth.x(), r.truth.y(), r.truth.theta(), r.prediction.x(), r.prediction.y(),
                     r.prediction.theta(), r.pos_err_m, r.ori_err_deg}) {
      out += ',' + format_double(v);
    }
    out += '\n';
  }
  data::write_text(path, out);
}

std::vector<FrameRecord> load_dump(const std::filesystem::path& path) {
  const auto lines = data::read_lines(path);
  if (lines.empty() || lines[0] != kDumpHeader) {
    throw FormatError(path.string() + ": missing dump header '" + kDumpHeader + "'");
  }
  std::vector<FrameRecord> out;
  for (std::size_t ln = 1; ln < lines.size(); ++ln) {
    if (lines[ln].empty()) continue;
    const std::string ctx = path.string() + ":" + std::to_string(ln + 1);
    const auto tok = split_commas(lines[ln]);
    if (tok.size() != 10) throw FormatError(ctx + ": expected 10 comma-separated fields");
    const auto frame = data::parse_int(tok[1], ctx);
    if (frame < 0) throw FormatError(ctx + ": negative frame index");
    double v[8];
    for (std::size_t i = 0; i < 8; ++i) v[i] = parse_double(tok[2 + i], ctx);
    if (v[6] < 0.0 || v[7] < 0.0) throw FormatError(ctx + ": negative error");
    out.push_back({std::string(tok[0]), static_cast<std::size_t>(frame), core::Pose2D(v[0], v[1], v[2]),
                   core::Pose2D(v[3], v[4], v[5]), v[6], v[7]});
  }
  return out;
}

}  // namespace fusionloc::eval
