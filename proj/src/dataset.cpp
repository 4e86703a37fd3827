#include "tromr/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tromr/image.hpp"
#include "tromr/rng.hpp"

namespace fs = std::filesystem;

namespace tromr {

namespace {

nlohmann::json boxes_to_json(const std::vector<Box>& boxes) {
  nlohmann::json out = nlohmann::json::array();
  for (const Box& b : boxes) out.push_back({b.x0, b.y0, b.x1, b.y1});
  return out;
}

std::vector<Box> boxes_from_json(const nlohmann::json& j) {
  std::vector<Box> out;
  for (const auto& e : j) {
    Box b;
    b.x0 = e.at(0);
    b.y0 = e.at(1);
    b.x1 = e.at(2);
    b.y1 = e.at(3);
    out.push_back(b);
  }
  return out;
}

std::string format_index(const char* prefix, int index, int width) {
  char buf[64];
  std::snprintf(buf, sizeof(buf), "%s%0*d", prefix, width, index);
  return buf;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open manifest: " + path);
  std::vector<ManifestEntry> entries;
  std::string line;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::exception& e) {
      throw IoError("bad manifest line in " + path + ": " + e.what());
    }
    ManifestEntry e;
    e.kind = j.value("kind", "staff");
    e.id = j.value("id", "");
    e.image = j.value("image", "");
    e.annotation = j.value("annotation", "");
    e.split = j.value("split", "");
    e.mask = j.value("mask", "");
    e.page_type = j.value("page_type", "");
    if (j.contains("boxes")) e.boxes = boxes_from_json(j["boxes"]);
    if (j.contains("systems")) e.systems = j["systems"].get<std::vector<std::vector<int>>>();
    if (j.contains("staves")) e.staves = j["staves"].get<std::vector<std::string>>();
    entries.push_back(std::move(e));
  }
  return entries;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries) {
  std::ofstream out(path);
  if (!out) throw IoError("cannot write manifest: " + path);
  for (const ManifestEntry& e : entries) {
    nlohmann::json j;
    j["kind"] = e.kind;
    j["id"] = e.id;
    j["split"] = e.split;
    if (!e.image.empty()) j["image"] = e.image;
    if (!e.annotation.empty()) j["annotation"] = e.annotation;
    if (e.kind == "page") {
      j["mask"] = e.mask;
      j["page_type"] = e.page_type;
      j["boxes"] = boxes_to_json(e.boxes);
      j["systems"] = e.systems;
      j["staves"] = e.staves;
    }
    out << j.dump() << '\n';
  }
}

std::string split_of(std::uint64_t seed, std::uint64_t index) {
  const std::uint64_t h = mix_seed(seed ^ 0x517ba7ull, index) % 100;
  if (h < 90) return "train";
  if (h < 95) return "val";
  return "test";
}

void gen_dataset(const std::string& out_dir, const GenDatasetOptions& options) {
  options.config.validate();
  fs::create_directories(fs::path(out_dir) / "images");
  fs::create_directories(fs::path(out_dir) / "annotations");
  if (options.n_pages > 0) fs::create_directories(fs::path(out_dir) / "masks");

  std::vector<ManifestEntry> entries;
  const std::uint64_t seed = options.config.rng_seed;

  for (int i = 0; i < options.n_staves; ++i) {
    Rng rng(mix_seed(seed, static_cast<std::uint64_t>(i)));
    const StaffAnnotation ann = sample_annotation(rng, options.config);
    RenderedStaff staff = render_staff(ann, options.config.style);
    ImageF img = staff.image;
    if (!options.config.augment.identity()) img = augment(img, rng, options.config.augment);

    const std::string stem = format_index("staff_", i, 6);
    ManifestEntry e;
    e.kind = "staff";
    e.id = stem;
    e.image = "images/" + stem + ".png";
    e.annotation = "annotations/" + stem + ".txt";
    e.split = split_of(seed, static_cast<std::uint64_t>(i));
    png_write_gray((fs::path(out_dir) / e.image).string(), to_u8(img));
    write_annotation((fs::path(out_dir) / e.annotation).string(), ann);
    entries.push_back(std::move(e));
  }

  for (int i = 0; i < options.n_pages; ++i) {
    Rng rng(mix_seed(seed, 0x100000ull + static_cast<std::uint64_t>(i)));
    RenderedPage page = render_page(rng, options.config);
    ImageF img = page.image;
    if (!options.config.augment.identity()) img = augment(img, rng, options.config.augment);

    const std::string stem = format_index("page_", i, 4);
    ManifestEntry e;
    e.kind = "page";
    e.id = stem;
    e.image = "images/" + stem + ".png";
    e.mask = "masks/" + stem + ".png";
    e.page_type = to_string(page.page_type);
    e.boxes = page.boxes;
    e.systems = page.systems;
    e.split = split_of(seed, 0x100000ull + static_cast<std::uint64_t>(i));
    png_write_gray((fs::path(out_dir) / e.image).string(), to_u8(img));
    png_write_gray((fs::path(out_dir) / e.mask).string(),
                   to_u8((1.0f - page.mask.array()).matrix()));
    for (std::size_t sidx = 0; sidx < page.staves.size(); ++sidx) {
      const std::string apath =
          "annotations/" + stem + "_staff_" + format_index("", static_cast<int>(sidx), 2) + ".txt";
      write_annotation((fs::path(out_dir) / apath).string(), page.staves[sidx]);
      e.staves.push_back(apath);
    }
    entries.push_back(std::move(e));
  }

  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), entries);
}

std::vector<StaffSample> load_staff_samples(const std::string& dataset_dir,
                                            const std::string& split) {
  const auto entries = read_manifest((fs::path(dataset_dir) / "manifest.jsonl").string());
  std::vector<StaffSample> samples;
  for (const auto& e : entries) {
    if (e.kind != "staff") continue;
    if (!split.empty() && e.split != split) continue;
    StaffSample s;
    s.id = e.id;
    s.image = png_read_gray((fs::path(dataset_dir) / e.image).string());
    s.annotation = read_annotation((fs::path(dataset_dir) / e.annotation).string());
    samples.push_back(std::move(s));
  }
  return samples;
}

std::vector<PageSample> load_page_samples(const std::string& dataset_dir,
                                          const std::string& split) {
  const auto entries = read_manifest((fs::path(dataset_dir) / "manifest.jsonl").string());
  std::vector<PageSample> samples;
  for (const auto& e : entries) {
    if (e.kind != "page") continue;
    if (!split.empty() && e.split != split) continue;
    PageSample p;
    p.id = e.id;
    p.image = png_read_gray((fs::path(dataset_dir) / e.image).string());
    if (!e.mask.empty()) p.mask = png_read_gray((fs::path(dataset_dir) / e.mask).string());
    p.page_type = page_type_from_string(e.page_type);
    p.boxes = e.boxes;
    p.staff_annotations = e.staves;
    samples.push_back(std::move(p));
  }
  return samples;
}

}  // namespace tromr
