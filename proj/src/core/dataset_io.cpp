#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <set>
#include <sstream>

#include "data.hpp"
#include "error.hpp"

namespace fs = std::filesystem;

namespace sdm::data {

namespace {

constexpr const char* kHeatmapMagic = "SDMHM1";
constexpr const char* kManifestName = "manifest.json";

std::string frame_file(int index, const char* ext) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "frame_%05d.%s", index, ext);
  return buf;
}

// frame_%05d.<ext> -> index, or -1.
int parse_frame_index(const fs::path& p, const std::string& ext) {
  const auto name = p.filename().string();
  if (name.rfind("frame_", 0) != 0 || p.extension() != "." + ext) return -1;
  const auto digits = name.substr(6, name.size() - 6 - ext.size() - 1);
  if (digits.empty() || !std::all_of(digits.begin(), digits.end(), ::isdigit)) return -1;
  return std::stoi(digits);
}

std::set<int> scan(const fs::path& dir, const std::string& ext) {
  std::set<int> out;
  std::error_code ec;
  if (!fs::is_directory(dir, ec)) return out;
  for (const auto& e : fs::directory_iterator(dir)) {
    const int idx = parse_frame_index(e.path(), ext);
    if (idx >= 0) out.insert(idx);
  }
  return out;
}

std::string join(const std::vector<int>& v) {
  std::ostringstream os;
  for (std::size_t i = 0; i < v.size(); ++i) os << (i ? "," : "") << v[i];
  return os.str();
}

void write_atomic(const fs::path& path, const std::string& bytes) {
  const auto tmp = path.string() + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    require(static_cast<bool>(out), ErrorCode::Io, "cannot write " + tmp);
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    require(static_cast<bool>(out), ErrorCode::Io, "short write to " + tmp);
  }
  std::error_code ec;
  fs::rename(tmp, path, ec);
  require(!ec, ErrorCode::Io, "cannot rename " + tmp + ": " + ec.message());
}

}  // namespace

void write_heatmap(const fs::path& path, const Heatmap& h) {
  std::ostringstream os;
  os << kHeatmapMagic << "\n"
     << "dtype=f32 rows=" << h.rows << " cols=" << h.cols << " scale=1\n";
  os.write(reinterpret_cast<const char*>(h.values.data()),
           static_cast<std::streamsize>(h.values.size() * sizeof(float)));
  write_atomic(path, os.str());
}

Heatmap read_heatmap(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::string magic, header;
  std::getline(in, magic);
  std::getline(in, header);
  require(magic == kHeatmapMagic, ErrorCode::Corrupt, path.string() + ": bad heatmap magic");
  int rows = -1, cols = -1;
  double scale = 1.0;
  char dtype[16] = {0};
  const int n = std::sscanf(header.c_str(), "dtype=%15s rows=%d cols=%d scale=%lf", dtype, &rows,
                            &cols, &scale);
  require(n == 4 && std::strcmp(dtype, "f32") == 0 && rows > 0 && cols > 0, ErrorCode::Corrupt,
          path.string() + ": bad heatmap header '" + header + "'");
  Heatmap h(rows, cols);
  in.read(reinterpret_cast<char*>(h.values.data()),
          static_cast<std::streamsize>(h.values.size() * sizeof(float)));
  require(in.gcount() == static_cast<std::streamsize>(h.values.size() * sizeof(float)),
          ErrorCode::Corrupt, path.string() + ": truncated heatmap payload");
  if (scale != 1.0) {
    for (float& v : h.values) v = static_cast<float>(v * scale);
  }
  return h;
}

void write_gray_pgm(const fs::path& path, int rows, int cols, const std::vector<std::uint8_t>& px) {
  std::ostringstream os;
  os << "P5\n" << cols << " " << rows << "\n255\n";
  os.write(reinterpret_cast<const char*>(px.data()), static_cast<std::streamsize>(px.size()));
  write_atomic(path, os.str());
}

void write_pgm(const fs::path& path, const LabelGrid& g, int scale) {
  std::vector<std::uint8_t> px(g.values.size());
  for (std::size_t i = 0; i < px.size(); ++i) px[i] = static_cast<std::uint8_t>(g.values[i] * scale);
  write_gray_pgm(path, g.rows, g.cols, px);
}

LabelGrid read_mask_pgm(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  require(static_cast<bool>(in), ErrorCode::Io, "cannot open " + path.string());
  std::string magic;
  int cols = 0, rows = 0, maxval = 0;
  in >> magic >> cols >> rows >> maxval;
  require(magic == "P5" && rows > 0 && cols > 0 && maxval > 0 && maxval < 256, ErrorCode::Corrupt,
          path.string() + ": not an 8-bit binary PGM");
  in.get();
  LabelGrid g(rows, cols);
  in.read(reinterpret_cast<char*>(g.values.data()), static_cast<std::streamsize>(g.values.size()));
  require(in.gcount() == static_cast<std::streamsize>(g.values.size()), ErrorCode::Corrupt,
          path.string() + ": truncated mask");
  for (auto& v : g.values) {
    require(v == 0 || v == maxval, ErrorCode::Corrupt, path.string() + ": mask is not binary");
    v = v ? 1 : 0;
  }
  return g;
}

void write_group(const fs::path& root, const SequenceSample& sample) {
  const auto base = root / sample.group_id;
  std::error_code ec;
  for (const char* sub : {"hor", "ver", "mask"}) {
    fs::create_directories(base / sub, ec);
    require(!ec, ErrorCode::Io, "cannot create " + (base / sub).string() + ": " + ec.message());
  }
  for (const auto& f : sample.frames) {
    write_heatmap(base / "hor" / frame_file(f.heatmaps.frame_index, "hm"), f.heatmaps.horizontal);
    write_heatmap(base / "ver" / frame_file(f.heatmaps.frame_index, "hm"), f.heatmaps.vertical);
    write_pgm(base / "mask" / frame_file(f.mask.frame_index, "pgm"), f.mask.labels);
  }
}

nlohmann::json Manifest::to_json() const {
  nlohmann::json gs = nlohmann::json::array();
  for (const auto& g : groups) {
    gs.push_back({{"id", g.id}, {"frames", g.frames}, {"seed", g.seed}, {"person_count", g.person_count}});
  }
  return {{"format", "sdm-hiber-layout"},
          {"version", 1},
          {"layout", "<group>/{hor,ver,mask}/frame_%05d.{hm,hm,pgm}"},
          {"config_hash", config_hash},
          {"scene_config", scene_config},
          {"groups", gs}};
}

Manifest Manifest::from_json(const nlohmann::json& j) {
  Manifest m;
  m.config_hash = j.value("config_hash", "");
  m.scene_config = j.value("scene_config", nlohmann::json::object());
  for (const auto& g : j.at("groups")) {
    m.groups.push_back({g.at("id").get<std::string>(), g.value("frames", 0),
                        g.value("seed", std::uint64_t{0}), g.value("person_count", 0)});
  }
  return m;
}

Manifest read_manifest(const fs::path& root) {
  std::ifstream in(root / kManifestName);
  require(static_cast<bool>(in), ErrorCode::Io, "no manifest in " + root.string());
  try {
    return Manifest::from_json(nlohmann::json::parse(in));
  } catch (const nlohmann::json::exception& e) {
    fail(ErrorCode::Corrupt, "malformed manifest: " + std::string(e.what()));
  }
}

void write_manifest(const fs::path& root, const Manifest& m) {
  write_atomic(root / kManifestName, m.to_json().dump(2) + "\n");
}

GroupLoad load_hiber_group(const fs::path& root, const std::string& group_id) {
  const auto base = root / group_id;
  const auto hor = scan(base / "hor", "hm");
  const auto ver = scan(base / "ver", "hm");
  const auto mask = scan(base / "mask", "pgm");

  std::set<int> all;
  all.insert(hor.begin(), hor.end());
  all.insert(ver.begin(), ver.end());
  all.insert(mask.begin(), mask.end());
  require(!all.empty(), ErrorCode::NoFrames, "group '" + group_id + "' has no frames under " + base.string());

  GroupLoad out;
  out.sample.group_id = group_id;

  std::error_code ec;
  if (fs::exists(root / kManifestName, ec)) {
    const auto manifest = read_manifest(root);
    for (const auto& g : manifest.groups) {
      if (g.id != group_id) continue;
      out.sample.person_count = g.person_count;
      std::vector<int> absent, extra;
      for (int i = 0; i < g.frames; ++i) {
        if (!all.count(i)) absent.push_back(i);
      }
      for (int i : all) {
        if (i >= g.frames) extra.push_back(i);
      }
      require(absent.empty() && extra.empty(), ErrorCode::CountMismatch,
              "group '" + group_id + "' declares " + std::to_string(g.frames) +
                  " frames; missing indices [" + join(absent) + "], unexpected indices [" +
                  join(extra) + "]");
    }
  }

  for (int idx : all) {
    if (!hor.count(idx) || !ver.count(idx) || !mask.count(idx)) {
      out.skipped.push_back(idx);
      continue;
    }
    Frame f;
    f.heatmaps.frame_index = idx;
    f.mask.frame_index = idx;
    f.heatmaps.horizontal = read_heatmap(base / "hor" / frame_file(idx, "hm"));
    f.heatmaps.vertical = read_heatmap(base / "ver" / frame_file(idx, "hm"));
    f.mask.labels = read_mask_pgm(base / "mask" / frame_file(idx, "pgm"));
    out.sample.frames.push_back(std::move(f));
  }
  out.partial = !out.skipped.empty();
  require(!out.sample.frames.empty(), ErrorCode::NoFrames,
          "group '" + group_id + "' has no complete frames");
  return out;
}

std::uint64_t group_seed(std::uint64_t base, int group) {
  // splitmix64 step
  std::uint64_t z = base + 0x9e3779b97f4a7c15ULL * static_cast<std::uint64_t>(group + 1);
  z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
  z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
  return z ^ (z >> 31);
}

std::string group_name(int group) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "g%04d", group);
  return buf;
}

Manifest export_synthetic_dataset(const SceneConfig& cfg, int groups, int frames_per_group,
                                  const fs::path& out) {
  require(groups >= 1 && frames_per_group >= 1, ErrorCode::InvalidArgument,
          "export needs groups >= 1 and frames_per_group >= 1");
  std::error_code ec;
  fs::create_directories(out, ec);
  require(!ec && fs::is_directory(out), ErrorCode::Io, "cannot create output directory " + out.string());

  Manifest m;
  m.config_hash = config_hash(cfg);
  m.scene_config = to_json(cfg);
  for (int g = 0; g < groups; ++g) {
    SceneConfig gc = cfg;
    gc.seed = group_seed(cfg.seed, g);
    auto sample = simulate_sequence(gc, frames_per_group);
    sample.group_id = group_name(g);
    write_group(out, sample);
    m.groups.push_back({sample.group_id, frames_per_group, gc.seed, sample.person_count});
  }
  write_manifest(out, m);
  return m;
}

std::vector<SequenceSample> make_windows(const std::vector<SequenceSample>& groups, int N,
                                         int stride, WindowStats* stats) {
  require(N >= 1 && stride >= 1, ErrorCode::InvalidArgument, "window length and stride must be >= 1");
  WindowStats local;
  std::vector<SequenceSample> out;
  for (const auto& g : groups) {
    // split into runs of consecutive frame indices
    std::size_t begin = 0;
    while (begin < g.frames.size()) {
      std::size_t end = begin + 1;
      while (end < g.frames.size() &&
             g.frames[end].heatmaps.frame_index == g.frames[end - 1].heatmaps.frame_index + 1) {
        ++end;
      }
      const int run = static_cast<int>(end - begin);
      int covered = 0;
      for (int start = 0; start + N <= run; start += stride) {
        SequenceSample w;
        w.group_id = g.group_id;
        w.person_count = g.person_count;
        w.frames.assign(g.frames.begin() + begin + start, g.frames.begin() + begin + start + N);
        out.push_back(std::move(w));
        ++local.windows;
        covered = start + N;
      }
      if (covered < run) {
        local.dropped_frames += run - covered;
        ++local.dropped_tails;
      }
      begin = end;
    }
  }
  if (stats) *stats = local;
  return out;
}

}  // namespace sdm::data
