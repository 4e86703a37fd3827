#pragma once

#include <string>
#include <vector>

#include "tromr/codec.hpp"
#include "tromr/common.hpp"
#include "tromr/metrics.hpp"
#include "tromr/staffdet.hpp"

namespace tromr {

struct PipelineOptions {
  ProjectionParams projection;
  std::string gt_manifest;  // dataset manifest; enables SER + detection metrics
  double iou_threshold = 0.4;
  int threads = 2;
  int crop_margin = 2;  // extra pixels around detected staff crops
};

struct PageResult {
  std::string path;
  std::string id;
  bool ok = true;
  std::string error;
  PageType page_type = PageType::other;
  std::vector<Box> boxes;  // in original page coordinates
  std::vector<std::vector<int>> systems;
  bool grouping_warning = false;
  std::vector<StaffAnnotation> annotations;
  std::vector<bool> truncated;
};

struct PipelineReport {
  std::vector<PageResult> pages;
  int total_staves = 0;
  int failed_pages = 0;
  bool has_ser = false;
  SerReport ser;
  bool has_detection = false;
  double det_precision = 0;
  double det_recall = 0;
  int det_tp = 0, det_pred = 0, det_gt = 0;
  double seconds_detect = 0;
  double seconds_recognize = 0;
  double seconds_total = 0;
};

PipelineReport run_pipeline(const std::vector<std::string>& page_paths,
                            const std::string& detector_ckpt, const std::string& recognizer_ckpt,
                            const PipelineOptions& options);

// report.json + per-staff annotation files + hypothesis manifest under
// out_dir; stage timings go to a separate timings.json since they vary run
// to run.
void write_pipeline_report(const std::string& out_dir, const PipelineReport& report);

}  // namespace tromr
