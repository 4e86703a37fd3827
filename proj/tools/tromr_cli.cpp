#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "tromr/codec.hpp"
#include "tromr/dataset.hpp"
#include "tromr/image.hpp"
#include "tromr/metrics.hpp"
#include "tromr/model.hpp"
#include "tromr/pipeline.hpp"
#include "tromr/staffdet.hpp"
#include "tromr/synth.hpp"
#include "tromr/train.hpp"

namespace fs = std::filesystem;
using namespace tromr;

namespace {

struct GlobalOpts {
  std::uint64_t seed = 0;
  bool verbose = false;
};

nlohmann::json counts_json(const EditCounts& c) {
  return {{"insertions", c.ins}, {"substitutions", c.sub}, {"deletions", c.del},
          {"ref_len", c.ref_len}};
}

void add_gen_data(CLI::App& app, GlobalOpts& g) {
  auto* cmd = app.add_subcommand("gen-data", "Generate a synthetic score dataset");
  auto opts = std::make_shared<GenDatasetOptions>();
  auto out = std::make_shared<std::string>();
  auto augment_name = std::make_shared<std::string>("none");
  cmd->add_option("--out", *out, "Output dataset directory")->required();
  cmd->add_option("--n", opts->n_staves, "Number of single-staff samples");
  cmd->add_option("--pages", opts->n_pages, "Number of full-page samples");
  cmd->add_option("--polyphonic-ratio", opts->config.polyphonic_ratio,
                  "Fraction of polyphonic staves");
  cmd->add_option("--symbols-min", opts->config.symbols_min, "Min body symbols per staff");
  cmd->add_option("--symbols-max", opts->config.symbols_max, "Max body symbols per staff");
  cmd->add_option("--staves-min", opts->config.staves_min, "Min staves per page");
  cmd->add_option("--staves-max", opts->config.staves_max, "Max staves per page");
  cmd->add_option("--staff-height", opts->config.style.image_height, "Staff strip height (px)");
  cmd->add_option("--staff-space", opts->config.style.staff_space, "Staff line spacing (px)");
  cmd->add_option("--page-width", opts->config.page_width, "Page width (px)");
  cmd->add_option("--page-height", opts->config.page_height, "Page height (px)");
  cmd->add_option("--augment", *augment_name, "Augmentation profile: none|camera");
  cmd->callback([&g, opts, out, augment_name]() {
    opts->config.rng_seed = g.seed;
    if (*augment_name == "camera")
      opts->config.augment = AugmentProfile::camera();
    else if (*augment_name != "none")
      throw ConfigError("unknown augmentation profile: " + *augment_name);
    gen_dataset(*out, *opts);
    if (g.verbose)
      std::cerr << "wrote " << opts->n_staves << " staves and " << opts->n_pages << " pages to "
                << *out << "\n";
  });
}

void add_train(CLI::App& app, GlobalOpts& g) {
  auto* cmd = app.add_subcommand("train", "Train the staff recognizer");
  struct Args {
    std::string data, out, init, standard = "note";
    ModelConfig model;
    TrainConfig train;
  };
  auto a = std::make_shared<Args>();
  a->model.image_height = 128;
  a->model.image_width = 1280;
  cmd->add_option("--data", a->data, "Dataset directory (with manifest.jsonl)")->required();
  cmd->add_option("--out", a->out, "Output directory for checkpoints and metrics")->required();
  cmd->add_option("--init", a->init, "Optional checkpoint to initialize from");
  cmd->add_option("--epochs", a->train.epochs, "Training epochs");
  cmd->add_option("--batch-size", a->train.batch_size, "Batch size");
  cmd->add_option("--lr", a->train.lr, "Adam learning rate");
  cmd->add_option("--lambda", a->train.weights.lambda, "Cross-entropy weight");
  cmd->add_option("--beta", a->train.weights.beta, "Consistency-loss weight");
  cmd->add_option("--threads", a->train.threads, "Worker threads");
  cmd->add_option("--max-steps", a->train.max_steps, "Optional cap on optimizer steps");
  cmd->add_option("--height", a->model.image_height, "Model input height");
  cmd->add_option("--width", a->model.image_width, "Model input width");
  cmd->add_option("--patch", a->model.patch_size, "Patch size");
  cmd->add_option("--embed-dim", a->model.embed_dim, "Embedding dimension");
  cmd->add_option("--enc-layers", a->model.encoder_layers, "Encoder layers");
  cmd->add_option("--dec-layers", a->model.decoder_layers, "Decoder layers");
  cmd->add_option("--heads", a->model.heads, "Attention heads");
  cmd->add_option("--max-decode-len", a->model.max_decode_len, "Max decode length");
  cmd->add_option("--consistency-standard", a->standard,
                  "Consistency standard: note|rhythm (rhythm is experimental)");
  cmd->callback([&g, a]() {
    const Vocabulary vocab = build_vocabulary(VocabConfig{});
    a->model.rhythm_vocab = vocab.rhythm.size();
    a->model.pitch_vocab = vocab.pitch.size();
    a->model.accidental_vocab = vocab.accidental.size();
    a->train.seed = g.seed;
    a->train.standard = a->standard == "rhythm" ? ConsistencyStandard::rhythm_branch
                                                : ConsistencyStandard::note_branch;
    fs::create_directories(a->out);
    a->train.checkpoint_dir = a->out;
    a->train.metrics_path = a->out + "/metrics.jsonl";

    TrOMRModel<float> model(a->model, g.seed);
    if (!a->init.empty()) model = TrOMRModel<float>::load(a->init);
    const auto train_set = load_staff_samples(a->data, "train");
    const auto val_set = load_staff_samples(a->data, "val");
    const auto history = train_recognizer(model, vocab, train_set, val_set, a->train);
    model.save(a->out + "/model.ckpt");
    if (g.verbose && !history.empty())
      std::cerr << "final loss " << history.back().total << " after " << history.size()
                << " epochs\n";
  });
}

void add_train_detector(CLI::App& app, GlobalOpts& g) {
  auto* cmd = app.add_subcommand("train-detector", "Train the staff detection module");
  struct Args {
    std::string data, out;
    SegNetConfig net;
    DetectorTrainConfig train;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--data", a->data, "Dataset directory with page samples")->required();
  cmd->add_option("--out", a->out, "Output directory")->required();
  cmd->add_option("--epochs", a->train.epochs, "Training epochs");
  cmd->add_option("--batch-size", a->train.batch_size, "Batch size");
  cmd->add_option("--lr", a->train.lr, "Adam learning rate");
  cmd->add_option("--threads", a->train.threads, "Worker threads");
  cmd->add_option("--max-steps", a->train.max_steps, "Optional cap on optimizer steps");
  cmd->callback([&g, a]() {
    a->train.seed = g.seed;
    fs::create_directories(a->out);
    a->train.checkpoint_dir = a->out;
    a->train.metrics_path = a->out + "/metrics.jsonl";
    SegNet<float> net(a->net, g.seed);
    const auto pages = load_page_samples(a->data, "train");
    auto all = pages.empty() ? load_page_samples(a->data) : pages;
    train_detector(net, all, a->train);
    net.save(a->out + "/detector.ckpt");
  });
}

void add_eval(CLI::App& app, GlobalOpts&) {
  auto* cmd = app.add_subcommand("eval", "Score hypothesis annotations against references");
  auto ref = std::make_shared<std::string>();
  auto hyp = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  cmd->add_option("--ref", *ref, "Reference manifest (JSONL)")->required();
  cmd->add_option("--hyp", *hyp, "Hypothesis manifest (JSONL)")->required();
  cmd->add_option("--out", *out, "Report path (default: stdout)");
  cmd->callback([ref, hyp, out]() {
    const auto ref_entries = read_manifest(*ref);
    const auto hyp_entries = read_manifest(*hyp);
    const std::string ref_dir = fs::path(*ref).parent_path().string();
    const std::string hyp_dir = fs::path(*hyp).parent_path().string();

    std::vector<StaffAnnotation> refs, hyps;
    std::size_t hyp_with_annotation = 0;
    for (const auto& e : hyp_entries)
      if (!e.annotation.empty()) ++hyp_with_annotation;
    for (const auto& e : ref_entries) {
      if (e.annotation.empty()) continue;
      refs.push_back(read_annotation((fs::path(ref_dir) / e.annotation).string()));
      const ManifestEntry* match = nullptr;
      for (const auto& h : hyp_entries)
        if (h.id == e.id && !h.annotation.empty()) {
          match = &h;
          break;
        }
      if (!match) throw EvalError("hypothesis manifest lacks id: " + e.id);
      hyps.push_back(read_annotation((fs::path(hyp_dir) / match->annotation).string()));
    }
    if (refs.size() != hyp_with_annotation)
      throw EvalError("reference and hypothesis manifests have different sample counts");

    const SerReport rep = report(refs, hyps);
    nlohmann::json j = {{"pitch_ser", rep.pitch_ser},
                        {"rhythm_ser", rep.rhythm_ser},
                        {"merge_ser", rep.merge_ser},
                        {"counts",
                         {{"pitch", counts_json(rep.pitch)},
                          {"rhythm", counts_json(rep.rhythm)},
                          {"merge", counts_json(rep.merge)}}}};
    if (out->empty()) {
      std::cout << j.dump(2) << "\n";
    } else {
      std::ofstream f(*out);
      if (!f) throw IoError("cannot write report: " + *out);
      f << j.dump(2) << '\n';
    }
  });
}

void add_predict(CLI::App& app, GlobalOpts&) {
  auto* cmd = app.add_subcommand("predict", "Recognize single staff images");
  auto model_path = std::make_shared<std::string>();
  auto out = std::make_shared<std::string>();
  auto images = std::make_shared<std::vector<std::string>>();
  auto threads = std::make_shared<int>(2);
  cmd->add_option("--model", *model_path, "Recognizer checkpoint")->required();
  cmd->add_option("--out", *out, "Output directory")->required();
  cmd->add_option("--threads", *threads, "Worker threads");
  cmd->add_option("images", *images, "Staff images (PNG)")->required();
  cmd->callback([model_path, out, images, threads]() {
    TrOMRModel<float> model = TrOMRModel<float>::load(*model_path);
    const Vocabulary vocab = build_vocabulary(VocabConfig{});
    fs::create_directories(fs::path(*out) / "annotations");
    std::vector<StaffSample> samples(images->size());
    for (std::size_t i = 0; i < images->size(); ++i) {
      samples[i].id = fs::path((*images)[i]).stem().string();
      samples[i].image = png_read_gray((*images)[i]);
    }
    const auto hyps = predict_all(model, vocab, samples, *threads);
    std::vector<ManifestEntry> manifest;
    for (std::size_t i = 0; i < samples.size(); ++i) {
      ManifestEntry e;
      e.id = samples[i].id;
      e.annotation = "annotations/" + samples[i].id + ".txt";
      write_annotation((fs::path(*out) / e.annotation).string(), hyps[i]);
      manifest.push_back(std::move(e));
    }
    write_manifest((fs::path(*out) / "manifest.jsonl").string(), manifest);
  });
}

void add_detect(CLI::App& app, GlobalOpts&) {
  auto* cmd = app.add_subcommand("detect", "Detect staves on full-page images");
  struct Args {
    std::string model, out;
    std::vector<std::string> images;
    ProjectionParams proj;
    bool crops = false;
    int crop_height = 128, crop_width = 1280;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--model", a->model, "Detector checkpoint")->required();
  cmd->add_option("--out", a->out, "Output directory")->required();
  cmd->add_option("--threshold", a->proj.threshold_frac, "Projection threshold (fraction of width)");
  cmd->add_option("--min-gap", a->proj.min_gap, "Minimum gap between bands (rows)");
  cmd->add_option("--band-pad", a->proj.band_pad, "Vertical box padding (rows)");
  cmd->add_flag("--crops", a->crops, "Also write recognizer-ready staff crops");
  cmd->add_option("--crop-height", a->crop_height, "Crop height for the recognizer");
  cmd->add_option("--crop-width", a->crop_width, "Crop width for the recognizer");
  cmd->add_option("images", a->images, "Page images (PNG)")->required();
  cmd->callback([a]() {
    SegNet<float> net = SegNet<float>::load(a->model);
    fs::create_directories(a->out);
    nlohmann::json pages = nlohmann::json::array();
    for (std::size_t pi = 0; pi < a->images.size(); ++pi) {
      const ImageU8 image = png_read_gray(a->images[pi]);
      const ImageF ink = prepare_page_ink(image, net.config().in_h, net.config().in_w);
      const auto seg = net.segment(ink);
      std::vector<Box> boxes = project_boxes(seg.mask, a->proj);
      const double sx = static_cast<double>(image.cols()) / net.config().in_w;
      const double sy = static_cast<double>(image.rows()) / net.config().in_h;
      for (Box& b : boxes) {
        b.x0 *= sx;
        b.x1 *= sx;
        b.y0 *= sy;
        b.y1 *= sy;
      }
      bool warning = false;
      const auto systems = group_systems(static_cast<int>(boxes.size()), seg.page_type, &warning);

      nlohmann::json jb = nlohmann::json::array();
      for (const Box& b : boxes) jb.push_back({b.x0, b.y0, b.x1, b.y1});
      pages.push_back({{"image", a->images[pi]},
                       {"page_type", to_string(seg.page_type)},
                       {"boxes", jb},
                       {"systems", systems},
                       {"grouping_warning", warning}});

      if (a->crops) {
        for (std::size_t bi = 0; bi < boxes.size(); ++bi) {
          char name[64];
          std::snprintf(name, sizeof(name), "page_%04d_staff_%02d.png", static_cast<int>(pi),
                        static_cast<int>(bi));
          const int x0 = std::max(0, static_cast<int>(boxes[bi].x0) - 2);
          const int y0 = std::max(0, static_cast<int>(boxes[bi].y0) - 2);
          const int x1 = std::min<int>(static_cast<int>(image.cols()),
                                       static_cast<int>(boxes[bi].x1) + 2);
          const int y1 = std::min<int>(static_cast<int>(image.rows()),
                                       static_cast<int>(boxes[bi].y1) + 2);
          if (x1 <= x0 || y1 <= y0) continue;
          const ImageU8 crop = image.block(y0, x0, y1 - y0, x1 - x0);
          const ImageF prepared =
              1.0f - prepare_staff_ink(crop, a->crop_height, a->crop_width).array();
          png_write_gray((fs::path(a->out) / name).string(), to_u8(prepared));
        }
      }
    }
    std::ofstream f(fs::path(a->out) / "layout.json");
    if (!f) throw IoError("cannot write layout report under " + a->out);
    f << nlohmann::json({{"pages", pages}}).dump(2) << '\n';
  });
}

void add_pipeline(CLI::App& app, GlobalOpts&) {
  auto* cmd = app.add_subcommand("pipeline", "Full-page recognition: detect, recognize, regroup");
  struct Args {
    std::string detector, recognizer, out, gt;
    std::vector<std::string> pages;
    PipelineOptions opts;
  };
  auto a = std::make_shared<Args>();
  cmd->add_option("--detector", a->detector, "Detector checkpoint")->required();
  cmd->add_option("--recognizer", a->recognizer, "Recognizer checkpoint")->required();
  cmd->add_option("--out", a->out, "Output directory")->required();
  cmd->add_option("--gt", a->gt, "Optional ground-truth dataset manifest");
  cmd->add_option("--iou", a->opts.iou_threshold, "Detection IoU threshold");
  cmd->add_option("--threshold", a->opts.projection.threshold_frac, "Projection threshold");
  cmd->add_option("--min-gap", a->opts.projection.min_gap, "Projection min gap");
  cmd->add_option("--band-pad", a->opts.projection.band_pad, "Projection band padding");
  cmd->add_option("--threads", a->opts.threads, "Worker threads");
  cmd->add_option("pages", a->pages, "Page images (PNG)");
  cmd->callback([a]() {
    a->opts.gt_manifest = a->gt;
    const PipelineReport rep = run_pipeline(a->pages, a->detector, a->recognizer, a->opts);
    write_pipeline_report(a->out, rep);
    std::cout << "pages=" << rep.pages.size() << " staves=" << rep.total_staves
              << " failures=" << rep.failed_pages;
    if (rep.has_detection)
      std::cout << " det_precision=" << rep.det_precision << " det_recall=" << rep.det_recall;
    if (rep.has_ser) std::cout << " merge_ser=" << rep.ser.merge_ser;
    std::cout << "\n";
  });
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"tromr: desk-scale polyphonic optical music recognition"};
  app.require_subcommand(1);
  app.set_config("--config", "", "Read options from a config file");

  GlobalOpts g;
  app.add_option("--seed", g.seed, "Seed controlling all randomness")->configurable(true);
  app.add_flag("--verbose", g.verbose, "Chatty diagnostics on stderr");

  add_gen_data(app, g);
  add_train(app, g);
  add_train_detector(app, g);
  add_eval(app, g);
  add_predict(app, g);
  add_detect(app, g);
  add_pipeline(app, g);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
