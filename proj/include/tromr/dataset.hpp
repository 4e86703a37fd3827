#pragma once

#include <string>
#include <vector>

#include "tromr/codec.hpp"
#include "tromr/common.hpp"
#include "tromr/staffdet.hpp"
#include "tromr/synth.hpp"

namespace tromr {

struct ManifestEntry {
  std::string kind = "staff";  // "staff" | "page"
  std::string id;
  std::string image;
  std::string annotation;
  std::string split;
  // page records only:
  std::string mask;
  std::string page_type;
  std::vector<Box> boxes;
  std::vector<std::vector<int>> systems;
  std::vector<std::string> staves;
};

std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& entries);

// Deterministic 90/5/5 split from the sample's seed stream.
std::string split_of(std::uint64_t seed, std::uint64_t index);

struct GenDatasetOptions {
  int n_staves = 0;
  int n_pages = 0;
  GenConfig config;
};

// Writes images/, annotations/, masks/ and manifest.jsonl under out_dir.
void gen_dataset(const std::string& out_dir, const GenDatasetOptions& options);

struct StaffSample {
  std::string id;
  ImageU8 image;
  StaffAnnotation annotation;
};

struct PageSample {
  std::string id;
  ImageU8 image;
  ImageU8 mask;
  PageType page_type = PageType::other;
  std::vector<Box> boxes;
  std::vector<std::string> staff_annotations;  // paths relative to dataset dir
};

// split == "" loads every record of the kind.
std::vector<StaffSample> load_staff_samples(const std::string& dataset_dir,
                                            const std::string& split = "");
std::vector<PageSample> load_page_samples(const std::string& dataset_dir,
                                          const std::string& split = "");

}  // namespace tromr
