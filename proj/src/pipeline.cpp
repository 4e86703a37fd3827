#include "tromr/pipeline.hpp"

#include <algorithm>
#include <chrono>
#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "tromr/dataset.hpp"
#include "tromr/image.hpp"
#include "tromr/model.hpp"
#include "tromr/train.hpp"

namespace fs = std::filesystem;

namespace tromr {

namespace {

double seconds_since(const std::chrono::steady_clock::time_point& t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

ImageU8 crop_page(const ImageU8& page, const Box& box, int margin) {
  const int x0 = std::max(0, static_cast<int>(std::floor(box.x0)) - margin);
  const int y0 = std::max(0, static_cast<int>(std::floor(box.y0)) - margin);
  const int x1 = std::min(static_cast<int>(page.cols()), static_cast<int>(std::ceil(box.x1)) + margin);
  const int y1 = std::min(static_cast<int>(page.rows()), static_cast<int>(std::ceil(box.y1)) + margin);
  if (x1 <= x0 || y1 <= y0) return ImageU8::Constant(1, 1, 255);
  return page.block(y0, x0, y1 - y0, x1 - x0);
}

}  // namespace

PipelineReport run_pipeline(const std::vector<std::string>& page_paths,
                            const std::string& detector_ckpt, const std::string& recognizer_ckpt,
                            const PipelineOptions& options) {
  const auto t_start = std::chrono::steady_clock::now();
  SegNet<float> detector = SegNet<float>::load(detector_ckpt);
  TrOMRModel<float> recognizer = TrOMRModel<float>::load(recognizer_ckpt);
  const Vocabulary vocab = build_vocabulary(VocabConfig{});
  if (vocab.rhythm.size() != recognizer.config().rhythm_vocab ||
      vocab.pitch.size() != recognizer.config().pitch_vocab ||
      vocab.accidental.size() != recognizer.config().accidental_vocab)
    throw LoadError("recognizer checkpoint was trained with a different vocabulary");

  // Optional ground truth, keyed by image basename.
  std::vector<ManifestEntry> gt_pages;
  std::string gt_dir;
  if (!options.gt_manifest.empty()) {
    for (auto& e : read_manifest(options.gt_manifest))
      if (e.kind == "page") gt_pages.push_back(std::move(e));
    gt_dir = fs::path(options.gt_manifest).parent_path().string();
  }

  PipelineReport rep;
  std::vector<StaffAnnotation> ser_refs, ser_hyps;

  for (const std::string& path : page_paths) {
    PageResult page;
    page.path = path;
    page.id = fs::path(path).stem().string();
    ImageU8 image;
    try {
      image = png_read_gray(path);
    } catch (const Error& e) {
      page.ok = false;
      page.error = e.what();
      ++rep.failed_pages;
      rep.pages.push_back(std::move(page));
      continue;
    }

    const auto t_det = std::chrono::steady_clock::now();
    const SegNetConfig& sc = detector.config();
    const ImageF ink = prepare_page_ink(image, sc.in_h, sc.in_w);
    const auto seg = detector.segment(ink);
    page.page_type = seg.page_type;
    std::vector<Box> det_boxes = project_boxes(seg.mask, options.projection);
    const double sx = static_cast<double>(image.cols()) / sc.in_w;
    const double sy = static_cast<double>(image.rows()) / sc.in_h;
    for (Box& b : det_boxes) {
      b.x0 *= sx;
      b.x1 *= sx;
      b.y0 *= sy;
      b.y1 *= sy;
    }
    page.boxes = det_boxes;
    rep.seconds_detect += seconds_since(t_det);

    const auto t_rec = std::chrono::steady_clock::now();
    page.annotations.resize(det_boxes.size());
    page.truncated.assign(det_boxes.size(), false);
    std::vector<StaffSample> crops(det_boxes.size());
    for (std::size_t i = 0; i < det_boxes.size(); ++i)
      crops[i].image = crop_page(image, det_boxes[i], options.crop_margin);
    parallel_for(static_cast<int>(det_boxes.size()), options.threads, [&](int i, int) {
      bool truncated = false;
      const ImageF staff_ink =
          prepare_staff_ink(crops[static_cast<std::size_t>(i)].image,
                            recognizer.config().image_height, recognizer.config().image_width,
                            &truncated);
      page.annotations[static_cast<std::size_t>(i)] = recognizer.greedy_predict(staff_ink, vocab);
      page.truncated[static_cast<std::size_t>(i)] = truncated;
    });
    rep.seconds_recognize += seconds_since(t_rec);

    page.systems = group_systems(static_cast<int>(det_boxes.size()), page.page_type,
                                 &page.grouping_warning);
    rep.total_staves += static_cast<int>(det_boxes.size());

    // Ground-truth comparison when this page appears in the manifest.
    const ManifestEntry* gt = nullptr;
    for (const auto& e : gt_pages)
      if (fs::path(e.image).stem().string() == page.id) {
        gt = &e;
        break;
      }
    if (gt) {
      const DetectionPR pr = evaluate_detection(page.boxes, gt->boxes, options.iou_threshold);
      rep.det_tp += pr.true_positives;
      rep.det_pred += static_cast<int>(page.boxes.size());
      rep.det_gt += static_cast<int>(gt->boxes.size());
      rep.has_detection = true;

      const std::size_t n = std::max(gt->staves.size(), page.annotations.size());
      for (std::size_t i = 0; i < n; ++i) {
        StaffAnnotation ref;
        if (i < gt->staves.size())
          ref = read_annotation((fs::path(gt_dir) / gt->staves[i]).string());
        ser_refs.push_back(std::move(ref));
        ser_hyps.push_back(i < page.annotations.size() ? page.annotations[i]
                                                       : StaffAnnotation{});
      }
    }

    rep.pages.push_back(std::move(page));
  }

  if (!ser_refs.empty()) {
    rep.ser = report(ser_refs, ser_hyps);
    rep.has_ser = true;
  }
  if (rep.has_detection) {
    rep.det_precision = rep.det_pred > 0 ? static_cast<double>(rep.det_tp) / rep.det_pred : 1.0;
    rep.det_recall = rep.det_gt > 0 ? static_cast<double>(rep.det_tp) / rep.det_gt : 1.0;
  }
  rep.seconds_total = seconds_since(t_start);
  return rep;
}

void write_pipeline_report(const std::string& out_dir, const PipelineReport& rep) {
  fs::create_directories(fs::path(out_dir) / "annotations");

  nlohmann::json pages = nlohmann::json::array();
  std::vector<ManifestEntry> hyp_manifest;
  for (const PageResult& p : rep.pages) {
    nlohmann::json jp;
    jp["image"] = p.path;
    jp["id"] = p.id;
    jp["ok"] = p.ok;
    if (!p.ok) {
      jp["error"] = p.error;
      pages.push_back(jp);
      continue;
    }
    jp["page_type"] = to_string(p.page_type);
    jp["staff_count"] = p.annotations.size();
    nlohmann::json boxes = nlohmann::json::array();
    for (const Box& b : p.boxes) boxes.push_back({b.x0, b.y0, b.x1, b.y1});
    jp["boxes"] = boxes;
    jp["systems"] = p.systems;
    jp["grouping_warning"] = p.grouping_warning;
    nlohmann::json files = nlohmann::json::array();
    for (std::size_t i = 0; i < p.annotations.size(); ++i) {
      char suffix[32];
      std::snprintf(suffix, sizeof(suffix), "_staff_%02d.txt", static_cast<int>(i));
      const std::string rel = "annotations/" + p.id + suffix;
      write_annotation((fs::path(out_dir) / rel).string(), p.annotations[i]);
      files.push_back(rel);
      ManifestEntry he;
      he.kind = "staff";
      he.id = p.id + "_staff_" + std::to_string(i);
      he.annotation = rel;
      hyp_manifest.push_back(std::move(he));
    }
    jp["annotations"] = files;
    jp["truncated"] = p.truncated;
    pages.push_back(jp);
  }

  nlohmann::json j;
  j["pages"] = pages;
  j["total_staves"] = rep.total_staves;
  j["failed_pages"] = rep.failed_pages;
  if (rep.has_ser)
    j["ser"] = {{"pitch_ser", rep.ser.pitch_ser},
                {"rhythm_ser", rep.ser.rhythm_ser},
                {"merge_ser", rep.ser.merge_ser}};
  if (rep.has_detection)
    j["detection"] = {{"precision", rep.det_precision},
                      {"recall", rep.det_recall},
                      {"true_positives", rep.det_tp},
                      {"predicted", rep.det_pred},
                      {"ground_truth", rep.det_gt}};

  std::ofstream out(fs::path(out_dir) / "report.json");
  if (!out) throw IoError("cannot write pipeline report under " + out_dir);
  out << j.dump(2) << '\n';

  write_manifest((fs::path(out_dir) / "manifest.jsonl").string(), hyp_manifest);

  std::ofstream tout(fs::path(out_dir) / "timings.json");
  tout << nlohmann::json({{"seconds_detect", rep.seconds_detect},
                          {"seconds_recognize", rep.seconds_recognize},
                          {"seconds_total", rep.seconds_total}})
              .dump(2)
       << '\n';
}

}  // namespace tromr
