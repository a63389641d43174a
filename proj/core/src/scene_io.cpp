#include "ovpseg/scene_io.hpp"

#include <array>
#include <charconv>
#include <filesystem>
#include <iomanip>
#include <map>
#include <set>
#include <sstream>
#include <utility>

#include "detail/byteio.hpp"
#include "ovpseg/errors.hpp"

namespace ovpseg {
namespace {

using detail::append_f64;
using detail::append_i32;
using detail::append_u32;
using detail::append_u64;
using detail::ByteReader;
using detail::read_file;
using detail::write_file;

// ------------------------------------------------------------ text utils --

std::string trim(const std::string& s) {
  std::size_t a = 0;
  std::size_t b = s.size();
  while (a < b && (s[a] == ' ' || s[a] == '\t' || s[a] == '\r')) ++a;
  while (b > a && (s[b - 1] == ' ' || s[b - 1] == '\t' || s[b - 1] == '\r'))
    --b;
  return s.substr(a, b - a);
}

// Shortest text that parses back to the same double.
std::string format_double(double v) {
  std::array<char, 32> buf{};
  const auto res = std::to_chars(buf.data(), buf.data() + buf.size(), v);
  return std::string(buf.data(), res.ptr);
}

}  // namespace

// -------------------------------------------------------------- scenes ----

void save_scene(const Scene& scene, const std::string& path) {
  std::string out;
  out.append("OVSC");
  append_u32(out, kSceneFileVersion);

  const auto section = [&out](const char* tag, const std::string& payload) {
    out.append(tag, 4);
    append_u64(out, payload.size());
    out.append(payload);
  };

  {
    std::string p;
    append_u64(p, scene.id);
    section("META", p);
  }

  const int n = scene.count();
  {
    std::string p;
    append_u64(p, static_cast<std::uint64_t>(n));
    for (int i = 0; i < n; ++i)
      for (int a = 0; a < 3; ++a) append_f64(p, scene.cloud.points.at(i, a));
    append_u64(p, scene.cloud.intensity.size());
    for (double v : scene.cloud.intensity) append_f64(p, v);
    section("PNTS", p);
  }

  {
    std::string p;
    append_u64(p, static_cast<std::uint64_t>(n));
    for (int v : scene.semantic) append_i32(p, v);
    for (int v : scene.instance) append_i32(p, v);
    section("GTLB", p);
  }

  {
    std::string p;
    append_u64(p, scene.rig.size());
    for (const CameraModel& cam : scene.rig) {
      append_f64(p, cam.fx());
      append_f64(p, cam.fy());
      append_f64(p, cam.cx());
      append_f64(p, cam.cy());
      append_u64(p, static_cast<std::uint64_t>(cam.width()));
      append_u64(p, static_cast<std::uint64_t>(cam.height()));
      for (int r = 0; r < 4; ++r)
        for (int c = 0; c < 4; ++c) append_f64(p, cam.extrinsics().at(r, c));
    }
    section("CAMS", p);
  }

  {
    std::string p;
    append_u64(p, scene.maps.size());
    for (const Tensor& m : scene.maps) {
      append_u64(p, static_cast<std::uint64_t>(m.dim(0)));
      append_u64(p, static_cast<std::uint64_t>(m.dim(1)));
      append_u64(p, static_cast<std::uint64_t>(m.dim(2)));
      for (double v : m.values()) append_f64(p, v);
    }
    section("MAPS", p);
  }

  write_file(path, out);
}

Scene load_scene(const std::string& path) {
  ByteReader r(read_file(path));

  if (r.tag4("file magic") != "OVSC")
    throw ParseError("'" + path + "' is not a scene file (bad magic)", 0);
  const std::uint32_t version = r.u32("format version");
  if (version != kSceneFileVersion)
    throw VersionError("unsupported scene file version " +
                       std::to_string(version) + " in '" + path + "'");

  bool have_meta = false, have_pnts = false, have_gtlb = false,
       have_cams = false, have_maps = false;
  std::uint64_t id = 0;
  std::uint64_t n_points = 0;
  std::vector<double> coords;
  std::vector<double> intensity;
  std::vector<int> semantic;
  std::vector<int> instance;
  std::vector<CameraModel> rig;
  std::vector<Tensor> maps;

  while (!r.done()) {
    const std::string tag = r.tag4("section tag");
    const std::uint64_t payload = r.u64("section size");
    const std::size_t start = r.pos();
    r.need(payload, "section '" + tag + "' payload");

    if (tag == "META") {
      if (have_meta) throw ParseError("duplicate META section", start);
      have_meta = true;
      id = r.u64("scene id");
    } else if (tag == "PNTS") {
      if (have_pnts) throw ParseError("duplicate PNTS section", start);
      have_pnts = true;
      n_points = r.u64("point count");
      if (n_points == 0)
        throw ParseError("scene file holds zero points", r.pos());
      r.need_counted(n_points, 24, "point coordinates");
      coords.reserve(static_cast<std::size_t>(n_points) * 3);
      for (std::uint64_t i = 0; i < n_points * 3; ++i)
        coords.push_back(r.f64("point coordinates"));
      const std::uint64_t n_intensity = r.u64("intensity count");
      if (n_intensity != 0 && n_intensity != n_points)
        throw ParseError("intensity count disagrees with point count",
                         r.pos());
      r.need_counted(n_intensity, 8, "intensity values");
      for (std::uint64_t i = 0; i < n_intensity; ++i)
        intensity.push_back(r.f64("intensity values"));
    } else if (tag == "GTLB") {
      if (have_gtlb) throw ParseError("duplicate GTLB section", start);
      have_gtlb = true;
      const std::uint64_t n = r.u64("label count");
      r.need_counted(n, 8, "ground-truth labels");
      for (std::uint64_t i = 0; i < n; ++i) {
        const std::int32_t v = r.i32("semantic labels");
        if (v < 0) throw ParseError("negative class id", r.pos() - 4);
        semantic.push_back(v);
      }
      for (std::uint64_t i = 0; i < n; ++i) {
        const std::int32_t v = r.i32("instance ids");
        if (v < 0) throw ParseError("negative instance id", r.pos() - 4);
        instance.push_back(v);
      }
    } else if (tag == "CAMS") {
      if (have_cams) throw ParseError("duplicate CAMS section", start);
      have_cams = true;
      const std::uint64_t n = r.u64("camera count");
      r.need_counted(n, 4 * 8 + 2 * 8 + 16 * 8, "camera models");
      for (std::uint64_t i = 0; i < n; ++i) {
        const double fx = r.f64("camera fx");
        const double fy = r.f64("camera fy");
        const double cx = r.f64("camera cx");
        const double cy = r.f64("camera cy");
        const std::uint64_t w = r.u64("image width");
        const std::uint64_t h = r.u64("image height");
        if (w == 0 || w > 1 << 20 || h == 0 || h > 1 << 20)
          throw ParseError("implausible image size", r.pos() - 16);
        std::vector<double> ext(16);
        for (double& v : ext) v = r.f64("camera extrinsics");
        try {
          rig.emplace_back(fx, fy, cx, cy, Tensor::from({4, 4}, ext),
                           static_cast<int>(w), static_cast<int>(h));
        } catch (const Error& e) {
          throw ParseError(std::string("broken camera model: ") + e.what(),
                           start);
        }
      }
    } else if (tag == "MAPS") {
      if (have_maps) throw ParseError("duplicate MAPS section", start);
      have_maps = true;
      const std::uint64_t n = r.u64("map count");
      for (std::uint64_t i = 0; i < n; ++i) {
        const std::uint64_t h = r.u64("map height");
        const std::uint64_t w = r.u64("map width");
        const std::uint64_t d = r.u64("map depth");
        if (h == 0 || h > 1 << 20 || w == 0 || w > 1 << 20 || d == 0 ||
            d > 1 << 20)
          throw ParseError("implausible map shape", r.pos() - 24);
        r.need_counted(h * w * d, 8, "map values");
        std::vector<double> vals;
        vals.reserve(static_cast<std::size_t>(h * w * d));
        for (std::uint64_t k = 0; k < h * w * d; ++k)
          vals.push_back(r.f64("map values"));
        try {
          maps.push_back(Tensor::from({static_cast<int>(h),
                                       static_cast<int>(w),
                                       static_cast<int>(d)},
                                      std::move(vals)));
        } catch (const Error& e) {
          throw ParseError(std::string("broken embedding map: ") + e.what(),
                           start);
        }
      }
    } else {
      // Unknown sections within a supported version are skippable padding.
      r.skip(payload, "section '" + tag + "' payload");
    }

    if (r.pos() != start + payload)
      throw ParseError("section '" + tag + "' size disagrees with content",
                       r.pos());
  }

  const std::size_t end = r.size();
  if (!have_meta) throw ParseError("missing META section", end);
  if (!have_pnts) throw ParseError("missing PNTS section", end);
  if (!have_gtlb) throw ParseError("missing GTLB section", end);
  if (!have_cams) throw ParseError("missing CAMS section", end);
  if (!have_maps) throw ParseError("missing MAPS section", end);

  if (semantic.size() != n_points)
    throw ParseError("ground-truth length disagrees with point count", end);
  if (rig.size() != maps.size())
    throw ParseError("camera count disagrees with map count", end);
  for (std::size_t c = 0; c < rig.size(); ++c) {
    if (maps[c].dim(0) != rig[c].height() || maps[c].dim(1) != rig[c].width())
      throw ParseError("map shape disagrees with camera image size", end);
    if (maps[c].dim(2) != maps[0].dim(2))
      throw ParseError("maps disagree on embedding width", end);
  }

  Scene scene;
  try {
    scene.cloud = make_point_cloud(
        Tensor::from({static_cast<int>(n_points), 3}, std::move(coords)),
        std::move(intensity));
  } catch (const Error& e) {
    throw ParseError(std::string("broken point data: ") + e.what(), end);
  }
  scene.semantic = std::move(semantic);
  scene.instance = std::move(instance);
  scene.rig = std::move(rig);
  scene.maps = std::move(maps);
  scene.id = id;
  return scene;
}

// ------------------------------------------------------------ manifests ---

void save_manifest(const DatasetManifest& manifest, const std::string& path) {
  std::ostringstream out;
  out << "manifest_version = " << manifest.version << "\n";
  out << "split = " << manifest.split << "\n";
  out << "generation_seed = " << manifest.generation_seed << "\n";
  out << "prototype_seed = " << manifest.prototype_seed << "\n";
  out << "embedding_dim = " << manifest.embedding_dim << "\n";
  out << "label_noise = " << format_double(manifest.label_noise) << "\n";
  out << "pixel_noise = " << format_double(manifest.pixel_noise) << "\n";

  out << "class_count = " << manifest.classes.size() << "\n";
  for (std::size_t i = 0; i < manifest.classes.size(); ++i) {
    const ClassInfo& c = manifest.classes[i];
    out << "class_" << i << "_name = " << c.name << "\n";
    out << "class_" << i << "_kind = " << (c.is_thing ? "thing" : "stuff")
        << "\n";
    out << "class_" << i << "_split = " << (c.is_base ? "base" : "novel")
        << "\n";
    out << "class_" << i << "_labels = ";
    for (std::size_t l = 0; l < c.labels.size(); ++l) {
      if (l != 0) out << ", ";
      out << c.labels[l];
    }
    out << "\n";
  }

  out << "scene_count = " << manifest.scene_files.size() << "\n";
  for (std::size_t i = 0; i < manifest.scene_files.size(); ++i)
    out << "scene_" << i << " = " << manifest.scene_files[i] << "\n";

  write_file(path, std::move(out).str());
}

DatasetManifest load_manifest(const std::string& path) {
  const std::string text = read_file(path);

  std::map<std::string, std::string> entries;
  std::map<std::string, std::size_t> offsets;
  std::size_t line_start = 0;
  while (line_start < text.size()) {
    std::size_t line_end = text.find('\n', line_start);
    if (line_end == std::string::npos) line_end = text.size();
    std::string line = text.substr(line_start, line_end - line_start);
    if (const std::size_t hash = line.find('#'); hash != std::string::npos)
      line = line.substr(0, hash);
    line = trim(line);
    if (!line.empty()) {
      const std::size_t eq = line.find('=');
      if (eq == std::string::npos)
        throw ParseError("manifest line without '='", line_start);
      const std::string key = trim(line.substr(0, eq));
      const std::string value = trim(line.substr(eq + 1));
      if (key.empty()) throw ParseError("manifest line without a key",
                                        line_start);
      if (entries.count(key))
        throw ParseError("duplicate manifest key '" + key + "'", line_start);
      entries[key] = value;
      offsets[key] = line_start;
    }
    line_start = line_end + 1;
  }

  std::set<std::string> consumed;
  const auto need = [&](const std::string& key) -> const std::string& {
    const auto it = entries.find(key);
    if (it == entries.end())
      throw ParseError("manifest missing key '" + key + "'", text.size());
    consumed.insert(key);
    return it->second;
  };
  const auto to_u64 = [&](const std::string& key) {
    const std::string& v = need(key);
    std::uint64_t out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
      throw ParseError("manifest key '" + key + "': expected an integer, got '"
                           + v + "'",
                       offsets[key]);
    return out;
  };
  const auto to_double = [&](const std::string& key) {
    const std::string& v = need(key);
    double out = 0.0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc{} || res.ptr != v.data() + v.size())
      throw ParseError("manifest key '" + key + "': expected a number, got '" +
                           v + "'",
                       offsets[key]);
    return out;
  };

  const std::uint64_t version = to_u64("manifest_version");
  if (version != kManifestVersion)
    throw VersionError("unsupported manifest version " +
                       std::to_string(version) + " in '" + path + "'");

  DatasetManifest m;
  m.version = static_cast<std::uint32_t>(version);
  m.split = need("split");
  m.generation_seed = to_u64("generation_seed");
  m.prototype_seed = to_u64("prototype_seed");
  m.embedding_dim = static_cast<int>(to_u64("embedding_dim"));
  m.label_noise = to_double("label_noise");
  m.pixel_noise = to_double("pixel_noise");

  const std::uint64_t n_classes = to_u64("class_count");
  if (n_classes > 4096)
    throw ParseError("implausible class_count", offsets["class_count"]);
  for (std::uint64_t i = 0; i < n_classes; ++i) {
    const std::string base = "class_" + std::to_string(i);
    ClassInfo c;
    c.name = need(base + "_name");
    const std::string& kind = need(base + "_kind");
    if (kind == "thing")
      c.is_thing = true;
    else if (kind == "stuff")
      c.is_thing = false;
    else
      throw ParseError("manifest key '" + base + "_kind': expected thing or "
                           "stuff, got '" + kind + "'",
                       offsets[base + "_kind"]);
    const std::string& split = need(base + "_split");
    if (split == "base")
      c.is_base = true;
    else if (split == "novel")
      c.is_base = false;
    else
      throw ParseError("manifest key '" + base + "_split': expected base or "
                           "novel, got '" + split + "'",
                       offsets[base + "_split"]);
    const std::string& labels = need(base + "_labels");
    std::size_t from = 0;
    while (from <= labels.size()) {
      std::size_t comma = labels.find(',', from);
      if (comma == std::string::npos) comma = labels.size();
      const std::string label = trim(labels.substr(from, comma - from));
      if (!label.empty()) c.labels.push_back(label);
      from = comma + 1;
    }
    if (c.labels.empty())
      throw ParseError("manifest key '" + base + "_labels' lists no labels",
                       offsets[base + "_labels"]);
    m.classes.push_back(std::move(c));
  }

  const std::uint64_t n_scenes = to_u64("scene_count");
  if (n_scenes > 1000000)
    throw ParseError("implausible scene_count", offsets["scene_count"]);
  for (std::uint64_t i = 0; i < n_scenes; ++i)
    m.scene_files.push_back(need("scene_" + std::to_string(i)));

  for (const auto& [key, value] : entries) {
    (void)value;
    if (!consumed.count(key))
      throw ParseError("unknown manifest key '" + key + "'", offsets[key]);
  }
  return m;
}

// -------------------------------------------------------------- datasets --

DatasetManifest save_dataset(const std::vector<Scene>& scenes,
                             DatasetManifest manifest,
                             const std::string& dir) {
  if (scenes.empty()) throw ConfigError("refusing to write an empty dataset");
  const std::filesystem::path base(dir);
  std::filesystem::create_directories(base);

  manifest.scene_files.clear();
  for (std::size_t i = 0; i < scenes.size(); ++i) {
    std::ostringstream name;
    name << "scene_" << std::setw(5) << std::setfill('0') << i << ".ovsc";
    save_scene(scenes[i], (base / name.str()).string());
    manifest.scene_files.push_back(name.str());
  }
  save_manifest(manifest, (base / "manifest.txt").string());
  return manifest;
}

Dataset load_dataset(const std::string& dir) {
  const std::filesystem::path base(dir);
  Dataset out;
  out.manifest = load_manifest((base / "manifest.txt").string());
  const Vocabulary vocab(out.manifest.classes);
  out.scenes.reserve(out.manifest.scene_files.size());
  for (const std::string& file : out.manifest.scene_files) {
    Scene scene = load_scene((base / file).string());
    validate_scene(scene, vocab);
    out.scenes.push_back(std::move(scene));
  }
  return out;
}

std::string dataset_signature(const DatasetManifest& manifest) {
  std::string sig = "emb=" + std::to_string(manifest.embedding_dim) +
                    ";proto_seed=" + std::to_string(manifest.prototype_seed) +
                    ";label_noise=" + format_double(manifest.label_noise) +
                    ";classes=";
  for (std::size_t i = 0; i < manifest.classes.size(); ++i) {
    const ClassInfo& c = manifest.classes[i];
    if (i) sig += ",";
    sig += c.name;
    sig += c.is_thing ? ":thing" : ":stuff";
    sig += c.is_base ? ":base" : ":novel";
    for (const std::string& label : c.labels) sig += ":" + label;
  }
  return sig;
}

}  // namespace ovpseg
