#include "fusionloc/data/dataset.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "fusionloc/data/hash.hpp"
#include "fusionloc/data/text.hpp"
#include "fusionloc/error.hpp"

namespace fusionloc::data {

namespace fs = std::filesystem;

namespace {

std::vector<core::Vec2> read_scan(const fs::path& path, std::size_t frame) {
  const std::string ctx = "frame " + std::to_string(frame) + " (" + path.string() + ")";
  std::vector<std::string> lines;
  try {
    lines = read_lines(path);
  } catch (const IoError&) {
    throw FormatError(ctx + ": unreadable scan file");
  }
  std::vector<core::Vec2> scan;
  scan.reserve(lines.size());
  for (const auto& line : lines) {
    const auto tok = split_ws(line);
    if (tok.empty()) continue;
    if (tok.size() != 2) throw FormatError(ctx + ": scan lines must be '<x> <y>'");
    scan.push_back({parse_double(tok[0], ctx), parse_double(tok[1], ctx)});
  }
  if (scan.size() > kMaxScanPoints) {
    throw FormatError(ctx + ": " + std::to_string(scan.size()) + " points exceeds the limit of " +
                      std::to_string(kMaxScanPoints));
  }
  return scan;
}

std::string scan_text(const std::vector<core::Vec2>& scan) {
  std::string out;
  out.reserve(scan.size() * 24);
  for (const auto& p : scan) {
    out += format_double(p[0]);
    out += ' ';
    out += format_double(p[1]);
    out += '\n';
  }
  return out;
}

std::size_t count_files(const fs::path& dir) {
  if (!fs::is_directory(dir)) return 0;
  return static_cast<std::size_t>(std::count_if(fs::directory_iterator(dir), fs::directory_iterator{},
                                                [](const auto& e) { return e.is_regular_file(); }));
}

void make_dirs(const fs::path& dir) {
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec) throw IoError("cannot create " + dir.string() + ": " + ec.message());
}

}  // namespace

const char* split_name(Split s) { return s == Split::train ? "train" : "eval"; }

Split parse_split(std::string_view s) {
  if (s == "train") return Split::train;
  if (s == "eval") return Split::eval;
  throw FormatError("split must be 'train' or 'eval', got '" + std::string(s) + "'");
}

std::string frame_name(std::size_t frame) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%06zu", frame);
  return buf;
}

Sequence load_sequence(const fs::path& dir, const LoadOptions& options) {
  if (!fs::is_directory(dir)) throw IoError("sequence directory " + dir.string() + " does not exist");
  Sequence seq;
  seq.id = dir.filename().string();

  const auto split_lines = read_lines(dir / "split.txt");
  if (split_lines.empty()) throw FormatError(dir.string() + "/split.txt is empty");
  seq.split = parse_split(split_lines[0]);

  const auto pose_lines = read_lines(dir / "poses.txt");
  for (std::size_t ln = 0; ln < pose_lines.size(); ++ln) {
    const auto tok = split_ws(pose_lines[ln]);
    if (tok.empty()) continue;
    const std::string ctx = dir.string() + "/poses.txt:" + std::to_string(ln + 1);
    if (tok.size() != 4) throw FormatError(ctx + ": expected '<frame> <x> <y> <theta>'");
    const auto frame = parse_int(tok[0], ctx);
    if (frame < 0) throw FormatError(ctx + ": negative frame index");
    Sample s;
    s.frame_index = static_cast<std::size_t>(frame);
    if (!seq.samples.empty() && s.frame_index <= seq.samples.back().frame_index) {
      throw ConsistencyError(ctx + ": frame indices must be strictly increasing");
    }
    s.pose = core::Pose2D(parse_double(tok[1], ctx), parse_double(tok[2], ctx), parse_double(tok[3], ctx));
    seq.samples.push_back(std::move(s));
  }

  for (auto& s : seq.samples) {
    const std::string name = frame_name(s.frame_index);
    const fs::path scan_path = dir / "scan" / (name + ".txt");
    const fs::path image_path = dir / "rgb" / (name + ".png");
    for (const auto& p : {scan_path, image_path}) {
      if (!fs::is_regular_file(p)) {
        throw ConsistencyError("frame " + std::to_string(s.frame_index) + ": missing " +
                               p.lexically_relative(dir).generic_string() + " in " + dir.string());
      }
    }
    s.scan = read_scan(scan_path, s.frame_index);
    if (options.images) {
      try {
        s.image = read_rgb(image_path);
      } catch (const IoError&) {
        throw FormatError("frame " + std::to_string(s.frame_index) + ": unreadable image " +
                          image_path.string());
      }
    }
  }
  const std::size_t n = seq.samples.size();
  if (count_files(dir / "scan") != n || count_files(dir / "rgb") != n) {
    throw ConsistencyError(dir.string() + ": " + std::to_string(n) +
                           " poses but a different number of scan or image files");
  }
  return seq;
}

std::vector<fs::path> find_sequences(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset directory " + root.string() + " does not exist");
  std::vector<fs::path> out;
  for (const auto& set : fs::directory_iterator(root)) {
    if (!set.is_directory()) continue;
    for (const auto& seq : fs::directory_iterator(set.path())) {
      if (seq.is_directory() && fs::is_regular_file(seq.path() / "poses.txt")) out.push_back(seq.path());
    }
  }
  std::sort(out.begin(), out.end());
  return out;
}

void GeneratorConfig::validate() const {
  world.validate();
  if (sets.empty()) throw ConfigError("generator needs at least one set");
  for (const auto& set : sets) {
    if (set.id.empty() || set.sequences.empty()) throw ConfigError("every set needs an id and sequences");
    for (const auto& s : set.sequences) {
      if (s.id.empty() || s.length == 0) {
        throw ConfigError("set " + set.id + ": sequences need an id and a positive length");
      }
    }
  }
}

SetSpec reference_set() {
  const std::size_t lengths[] = {394, 374, 389, 359, 429, 401, 390, 404, 408, 416};
  SetSpec set{"set-01", {}};
  for (std::size_t i = 0; i < 10; ++i) {
    char id[16];
    std::snprintf(id, sizeof id, "seq-%02zu", i + 1);
    const bool eval = i == 2 || i == 5 || i == 8;
    set.sequences.push_back({id, lengths[i], eval ? Split::eval : Split::train});
  }
  return set;
}

std::vector<SequenceSummary> generate_dataset(const GeneratorConfig& cfg, const fs::path& root) {
  cfg.validate();
  make_dirs(root);
  std::vector<SequenceSummary> summary;
  NormAccumulator norm;
  for (std::size_t si = 0; si < cfg.sets.size(); ++si) {
    const auto& set = cfg.sets[si];
    WorldConfig wc = cfg.world;
    wc.seed = cfg.world.seed + si;
    const World world = generate_world(wc);
    make_dirs(root / set.id);
    save_world(world, root / set.id / "world.txt");

    std::size_t total = 0;
    for (const auto& s : set.sequences) total += s.length;
    std::seed_seq walk_seed{static_cast<std::uint64_t>(wc.seed), std::uint64_t{1}};
    Rng walk_rng(walk_seed);
    const auto poses = generate_trajectory(world, wc, total, walk_rng);
    std::seed_seq noise_seed{static_cast<std::uint64_t>(wc.seed), std::uint64_t{2}};
    Rng noise_rng(noise_seed);

    std::size_t offset = 0;
    for (const auto& spec : set.sequences) {
      const fs::path dir = root / set.id / spec.id;
      make_dirs(dir / "rgb");
      make_dirs(dir / "scan");
      std::ostringstream pose_text;
      for (std::size_t f = 0; f < spec.length; ++f) {
        const auto& pose = poses[offset + f];
        const std::string name = frame_name(f);
        const cv::Mat image = render_view(world, pose, wc);
        write_rgb(dir / "rgb" / (name + ".png"), image);
        if (spec.split == Split::train) norm.add(image);
        write_text(dir / "scan" / (name + ".txt"), scan_text(raycast_scan(world, pose, wc, &noise_rng)));
        pose_text << f << ' ' << format_double(pose.x()) << ' ' << format_double(pose.y()) << ' '
                  << format_double(pose.theta()) << '\n';
      }
      write_text(dir / "poses.txt", pose_text.str());
      write_text(dir / "split.txt", std::string(split_name(spec.split)) + "\n");
      offset += spec.length;
      summary.push_back({set.id, spec.id, spec.length, spec.split});
    }
  }
  save_norm(norm.result(), root / "norm.txt");
  return summary;
}

void save_norm(const ImageNorm& norm, const fs::path& path) {
  std::string out;
  for (double v : norm.mean) out += format_double(v) + ' ';
  for (std::size_t i = 0; i < 3; ++i) out += format_double(norm.stddev[i]) + (i < 2 ? " " : "\n");
  write_text(path, out);
}

ImageNorm load_norm(const fs::path& path) {
  const auto lines = read_lines(path);
  std::vector<std::string_view> tok;
  for (const auto& l : lines) {
    const auto t = split_ws(l);
    tok.insert(tok.end(), t.begin(), t.end());
  }
  if (tok.size() != 6) throw FormatError(path.string() + ": expected 6 numbers (3 means, 3 stds)");
  ImageNorm n;
  for (std::size_t i = 0; i < 3; ++i) {
    n.mean[i] = parse_double(tok[i], path.string());
    n.stddev[i] = parse_double(tok[3 + i], path.string());
    if (!(n.stddev[i] > 0.0)) throw FormatError(path.string() + ": standard deviations must be positive");
  }
  return n;
}

std::string dataset_hash(const fs::path& root) {
  if (!fs::is_directory(root)) throw IoError("dataset directory " + root.string() + " does not exist");
  std::vector<fs::path> files;
  for (const auto& e : fs::recursive_directory_iterator(root)) {
    if (e.is_regular_file() && e.path() != root / kManifestName) files.push_back(e.path());
  }
  std::sort(files.begin(), files.end(), [&](const fs::path& a, const fs::path& b) {
    return a.lexically_relative(root).generic_string() < b.lexically_relative(root).generic_string();
  });

  Sha256 hash;
  std::vector<char> buf(1 << 16);
  for (const auto& f : files) {
    const std::string rel = f.lexically_relative(root).generic_string();
    hash.update(rel.data(), rel.size() + 1);  // includes the terminating NUL
    std::ifstream in(f, std::ios::binary);
    if (!in) throw IoError("cannot read " + f.string());
    while (in) {
      in.read(buf.data(), static_cast<std::streamsize>(buf.size()));
      hash.update(buf.data(), static_cast<std::size_t>(in.gcount()));
    }
  }
  return hash.hex();
}

}  // namespace fusionloc::data
