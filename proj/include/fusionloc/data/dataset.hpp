#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include <opencv2/core.hpp>

#include "fusionloc/core/pose.hpp"
#include "fusionloc/data/image.hpp"
#include "fusionloc/data/world.hpp"

namespace fusionloc::data {

/// Longest scan accepted from disk.
inline constexpr std::size_t kMaxScanPoints = 1150;

enum class Split { train, eval };
const char* split_name(Split s);
Split parse_split(std::string_view s);

struct Sample {
  cv::Mat image;  // RGB, empty when loaded without images
  std::vector<core::Vec2> scan;
  core::Pose2D pose;
  std::size_t frame_index = 0;
};

struct Sequence {
  std::string id;
  Split split = Split::train;
  std::vector<Sample> samples;
};

struct LoadOptions {
  bool images = true;
};

/// Reads <dir>/{poses.txt, split.txt, rgb/, scan/}. The sequence id is the
/// directory name. Missing frame files throw ConsistencyError naming the
/// frame; unparsable content throws FormatError naming the frame.
Sequence load_sequence(const std::filesystem::path& dir, const LoadOptions& options = {});

/// Every <root>/<set>/<seq> directory holding a poses.txt, sorted by path.
std::vector<std::filesystem::path> find_sequences(const std::filesystem::path& root);

struct SequenceSpec {
  std::string id;
  std::size_t length = 0;
  Split split = Split::train;
};

/// One environment: a generated world and a continuous walk through it, cut
/// into consecutive sequences.
struct SetSpec {
  std::string id;
  std::vector<SequenceSpec> sequences;
};

struct GeneratorConfig {
  WorldConfig world;
  std::vector<SetSpec> sets;
  void validate() const;
};

/// Set-01 layout: ten sequences of 394, 374, 389, 359, 429, 401, 390, 404,
/// 408 and 416 frames, with seq-03, seq-06 and seq-09 held out for evaluation.
SetSpec reference_set();

struct SequenceSummary {
  std::string set;
  std::string sequence;
  std::size_t length = 0;
  Split split = Split::train;
};

/// Writes the dataset under `root`:
///   <set>/world.txt, <set>/<seq>/{rgb/NNNNNN.png, scan/NNNNNN.txt, poses.txt, split.txt}
///   norm.txt (per-channel mean then std over all training images)
/// Set i uses world seed `seed + i`.
std::vector<SequenceSummary> generate_dataset(const GeneratorConfig& cfg, const std::filesystem::path& root);

void save_norm(const ImageNorm& norm, const std::filesystem::path& path);
ImageNorm load_norm(const std::filesystem::path& path);

/// Run manifest written next to generated data; not part of the dataset.
inline constexpr const char* kManifestName = "manifest.txt";

/// SHA-256 (hex) over every regular file under `root` except the top-level
/// manifest, in sorted relative-path order, hashing each path followed by
/// the file contents.
std::string dataset_hash(const std::filesystem::path& root);

/// Zero-padded six-digit frame name.
std::string frame_name(std::size_t frame);

}  // namespace fusionloc::data
