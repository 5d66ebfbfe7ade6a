// pagenet command-line tool: train, infer, baseline, eval, synth, annotate.

#include <cmath>
#include <csignal>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "CLI11.hpp"
#include "pagenet/annotation_server.hpp"
#include "pagenet/pagenet.hpp"

namespace fs = std::filesystem;
using namespace pagenet;

namespace {

enum Exit { kOk = 0, kUsage = 1, kData = 2, kInternal = 3 };

struct UsageError : std::runtime_error {
  using std::runtime_error::runtime_error;
};

fs::path default_images_dir(const std::optional<fs::path>& dir, const fs::path& annotations) {
  return dir ? *dir : annotations.parent_path();
}

// Loads and preprocesses every record in parallel; order follows the file.
std::vector<Sample> load_samples(const std::vector<AnnotationRecord>& records, const fs::path& images_dir,
                                 int input_size, int workers) {
  std::vector<Sample> samples(records.size());
  parallel_for(records.size(), workers, [&](std::size_t i) {
    samples[i] = preprocess(load_record_image(images_dir, records[i]), records[i], input_size);
  });
  return samples;
}

// Identifier of an image: its path relative to images_dir when it lies
// inside it, else the path as given.
std::string image_key(const fs::path& image, const std::optional<fs::path>& images_dir) {
  if (images_dir) {
    const auto rel = image.lexically_normal().lexically_relative(images_dir->lexically_normal());
    if (!rel.empty() && *rel.begin() != "..") return rel.generic_string();
  }
  return image.generic_string();
}

fs::path artifact_path(const fs::path& out_dir, const std::string& key, const std::string& suffix) {
  fs::path rel(key);
  if (rel.is_absolute()) rel = rel.relative_path();
  rel.replace_extension(suffix);
  return out_dir / rel;
}

void write_artifact(const fs::path& path, const Image& img) {
  fs::create_directories(path.parent_path());
  write_image(path, img);
}

// ---------------------------------------------------------------- train

struct TrainArgs {
  fs::path annotations;
  std::optional<fs::path> images_dir;
  std::optional<fs::path> val_annotations;
  fs::path out_model;
  std::optional<fs::path> log;
  std::optional<int> lr_drop_at;
  int input_size = kDefaultInputSize;
  nn::TrainConfig cfg;
};

int run_train(TrainArgs a, int workers) {
  auto& cfg = a.cfg;
  cfg.lr_after = cfg.lr_initial / 10;
  // Without an explicit drop point the schedule keeps its 2/3 proportion.
  cfg.lr_drop_at = a.lr_drop_at ? *a.lr_drop_at
                                : static_cast<int>(std::lround(cfg.total_updates * (10000.0 / 15000.0)));
  cfg.workers = workers;
  try {
    cfg.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  const auto images_dir = default_images_dir(a.images_dir, a.annotations);
  auto train_records = load_annotations(a.annotations);
  std::vector<AnnotationRecord> val_records;
  if (a.val_annotations) {
    val_records = load_annotations(*a.val_annotations);
  } else {
    auto parts = split(train_records, {0.9, 0.1}, cfg.seed);
    if (parts.val.empty()) throw EmptyDataset();
    train_records = std::move(parts.train);
    val_records = std::move(parts.val);
  }
  const auto train_set = load_samples(train_records, images_dir, a.input_size, workers);
  const auto val_set = load_samples(val_records, images_dir, a.input_size, workers);

  const auto result = nn::train(cfg, train_set, val_set);
  nn::save_model(a.out_model, result.model);
  const fs::path log_path = a.log ? *a.log : fs::path(a.out_model.string() + ".log");
  write_file_atomic(log_path, nn::format_train_log(result));
  const auto& best = result.restarts[result.best_restart];
  std::cout << "selected restart " << result.best_restart << " of " << result.restarts.size() << "\n"
            << "val mIoU (quads) " << format_number(best.val_miou) << "\n"
            << "val mIoU (pixels) " << format_number(best.val_pixel_miou) << "\n";
  return kOk;
}

// ---------------------------------------------------------------- infer

struct InferArgs {
  fs::path model;
  std::vector<fs::path> images;
  std::optional<fs::path> annotations;
  std::optional<fs::path> images_dir;
  fs::path out_dir;
  std::string emit = "quad";
  std::string on_empty = "full-image";
  int input_size = kDefaultInputSize;
};

int run_infer(const InferArgs& a, int workers) {
  const auto model = nn::load_model(a.model);
  std::vector<fs::path> paths = a.images;
  std::optional<fs::path> images_dir = a.images_dir;
  if (a.annotations) {
    if (!images_dir) images_dir = a.annotations->parent_path();
    for (const auto& r : load_annotations(*a.annotations)) paths.push_back(resolve_image(*images_dir, r));
  }
  if (paths.empty()) throw UsageError("no input images (use --images or --annotations)");
  fs::create_directories(a.out_dir);

  std::vector<AnnotationRecord> quads(paths.size());
  std::vector<std::string> empty_error(paths.size());
  parallel_for(paths.size(), workers, [&](std::size_t i) {
    const auto key = image_key(paths[i], images_dir);
    Image img;
    try {
      img = read_image(paths[i]);
    } catch (const FormatError&) {
      throw MissingImage(paths[i].string());
    }
    const auto input = preprocess_image(img, a.input_size);
    if (a.emit == "probmap") {
      write_artifact(artifact_path(a.out_dir, key, ".prob.pgm"),
                     probability_to_image(nn::predict(model, input).front()));
      return;
    }
    const auto pred = nn::predict_sample(model, input, img.height, img.width);
    if (pred.empty && a.on_empty == "error") {
      empty_error[i] = key;
      return;
    }
    if (a.emit == "mask") {
      write_artifact(artifact_path(a.out_dir, key, ".mask.png"), mask_to_image(pred.cleaned));
      return;
    }
    quads[i] = AnnotationRecord{key, img.width, img.height, pred.quad, std::nullopt};
  });
  for (const auto& key : empty_error) {
    if (!key.empty()) throw DataError("no page region found in " + key);
  }
  if (a.emit == "quad") {
    write_file_atomic(a.out_dir / "quads.tsv", format_annotations(quads));
    std::cout << "wrote " << quads.size() << " quads to " << (a.out_dir / "quads.tsv").string() << "\n";
  } else {
    std::cout << "wrote " << paths.size() << " " << a.emit << " file(s) to " << a.out_dir.string() << "\n";
  }
  return kOk;
}

// ---------------------------------------------------------------- baseline

int run_baseline_full(const fs::path& annotations, const fs::path& out) {
  std::vector<AnnotationRecord> preds;
  for (const auto& r : load_annotations(annotations)) {
    preds.push_back({r.image_path, r.width, r.height, predict_full_image(r.width, r.height), std::nullopt});
  }
  save_annotations(out, preds);
  std::cout << "wrote " << preds.size() << " full-image quads\n";
  return kOk;
}

int run_mean_fit(const fs::path& annotations, const fs::path& out_model) {
  const auto model = fit_mean_quad(load_annotations(annotations));
  save_mean_quad(out_model, model);
  std::cout << format_mean_quad(model);
  return kOk;
}

int run_mean_predict(const fs::path& model_path, const fs::path& annotations, const fs::path& out) {
  const auto model = load_mean_quad(model_path);
  std::vector<AnnotationRecord> preds;
  for (const auto& r : load_annotations(annotations)) {
    preds.push_back({r.image_path, r.width, r.height, predict_mean_quad(model, r.width, r.height), std::nullopt});
  }
  save_annotations(out, preds);
  std::cout << "wrote " << preds.size() << " mean quads\n";
  return kOk;
}

// ---------------------------------------------------------------- eval

struct EvalArgs {
  std::optional<fs::path> pred_quads;
  std::optional<fs::path> pred_masks;
  fs::path gt;
  std::optional<fs::path> report_out;
  std::string system;
};

int run_eval(const EvalArgs& a) {
  const auto gt = load_annotations(a.gt);
  EvalReport rep;
  if (a.pred_quads) {
    rep = evaluate_quads(quads_by_image(load_annotations(*a.pred_quads)), quads_by_image(gt),
                         a.system.empty() ? a.pred_quads->filename().string() : a.system);
  } else {
    std::map<std::string, BinaryMask> masks;
    std::map<std::string, AnnotationRecord> gts;
    std::vector<std::string> missing;
    for (const auto& r : gt) {
      gts[r.image_path] = r;
      const auto path = artifact_path(*a.pred_masks, r.image_path, ".mask.png");
      if (fs::exists(path)) {
        masks[r.image_path] = read_mask(path);
      } else {
        missing.push_back(r.image_path);
      }
    }
    if (!missing.empty()) throw MissingPrediction(std::move(missing));
    rep = evaluate_pixels(masks, gts, a.system.empty() ? "masks" : a.system);
  }
  if (a.report_out) {
    const bool json = detail::lower_extension(*a.report_out) == ".json";
    write_file_atomic(*a.report_out, json ? report_to_json(rep).dump(2) + "\n" : format_report_text(rep));
  }
  std::cout << "mIoU " << format_number(rep.miou) << " over " << rep.count << " images (" << to_string(rep.mode)
            << ")\n";
  return kOk;
}

// ---------------------------------------------------------------- synth

struct SynthArgs {
  std::optional<fs::path> spec;
  std::size_t n = 100;
  std::optional<std::uint64_t> seed;
  std::optional<int> image_size;
  fs::path out_dir;
};

int run_synth(const SynthArgs& a, int workers) {
  SyntheticSpec spec;
  if (a.spec) {
    try {
      spec = synthetic_spec_from_json(nlohmann::json::parse(read_file(*a.spec)));
    } catch (const nlohmann::json::exception& e) {
      throw FormatError(a.spec->string() + ": " + e.what());
    }
  }
  if (a.seed) spec.seed = *a.seed;
  if (a.image_size) spec.image_size = *a.image_size;
  try {
    spec.validate();
  } catch (const std::invalid_argument& e) {
    throw UsageError(e.what());
  }
  std::error_code ec;
  fs::create_directories(a.out_dir, ec);
  if (ec || !fs::is_directory(a.out_dir)) throw DataError("cannot create output directory " + a.out_dir.string());
  const auto samples = generate_synthetic(spec, a.n);
  parallel_for(samples.size(), workers,
               [&](std::size_t i) { write_image(a.out_dir / samples[i].record.image_path, samples[i].image); });
  std::vector<AnnotationRecord> records;
  for (const auto& s : samples) records.push_back(s.record);
  save_annotations(a.out_dir / "annotations.tsv", records);
  write_file_atomic(a.out_dir / "spec.json", to_json(spec).dump(2) + "\n");
  std::cout << "wrote " << samples.size() << " images and annotations.tsv to " << a.out_dir.string() << "\n";
  return kOk;
}

// ---------------------------------------------------------------- annotate

AnnotationServer* g_server = nullptr;

void stop_server(int) {
  if (g_server) g_server->stop();
}

int run_annotate(AnnotationServerOptions opts, const std::string& listen) {
  const auto colon = listen.rfind(':');
  if (colon == std::string::npos) throw UsageError("--listen expects address:port");
  const std::string host = listen.substr(0, colon);
  int port = 0;
  try {
    port = std::stoi(listen.substr(colon + 1));
  } catch (const std::exception&) {
    throw UsageError("invalid port in --listen '" + listen + "'");
  }
  if (port < 0 || port > 65535) throw UsageError("port out of range");
  AnnotationServer server(std::move(opts));
  if (!server.bind(host, port)) throw DataError("cannot listen on " + listen + " (address in use?)");
  g_server = &server;
  std::signal(SIGINT, stop_server);
  std::signal(SIGTERM, stop_server);
  std::cout << "serving " << server.entries().size() << " images on http://" << host << ":" << server.port()
            << "/" << std::endl;
  server.listen_after_bind();
  g_server = nullptr;
  return kOk;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Page boundary extraction: training, inference, baselines, evaluation and annotation."};
  app.require_subcommand(1);
  app.fallthrough();  // --workers may follow the subcommand
  int workers = default_workers();
  app.add_option("--workers", workers, "Worker threads (default: PAGENET_WORKERS or processor count)")
      ->check(CLI::PositiveNumber);

  TrainArgs train;
  auto* train_cmd = app.add_subcommand("train", "Train the segmentation network");
  train_cmd->add_option("--annotations", train.annotations, "Training annotation file")->required();
  train_cmd->add_option("--images-dir", train.images_dir, "Image directory (default: annotation file's directory)");
  train_cmd->add_option("--val-annotations", train.val_annotations,
                        "Validation annotation file (default: seeded 10% split of --annotations)");
  train_cmd->add_option("--out-model", train.out_model, "Output weight file")->required();
  train_cmd->add_option("--log", train.log, "Training log (default: <out-model>.log)");
  train_cmd->add_option("--updates", train.cfg.total_updates, "Weight updates per restart")
      ->capture_default_str()
      ->check(CLI::NonNegativeNumber);
  train_cmd->add_option("--batch", train.cfg.batch_size, "Images per minibatch")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--lr", train.cfg.lr_initial, "Initial learning rate (divided by 10 at --lr-drop-at)")
      ->capture_default_str();
  train_cmd->add_option("--lr-drop-at", train.lr_drop_at, "Update index of the learning-rate drop (default 2/3 of --updates)");
  train_cmd->add_option("--momentum", train.cfg.momentum, "Momentum")->capture_default_str();
  train_cmd->add_option("--weight-decay", train.cfg.weight_decay, "L2 weight decay")->capture_default_str();
  train_cmd->add_option("--clip", train.cfg.grad_clip_norm, "Global gradient-norm clip")->capture_default_str();
  train_cmd->add_option("--seed", train.cfg.seed, "Random seed")->capture_default_str();
  train_cmd->add_option("--restarts", train.cfg.num_restarts, "Independent restarts")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--base-channels", train.cfg.base_channels, "Channels per convolution")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);
  train_cmd->add_option("--input-size", train.input_size, "Network input side (multiple of 8)")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  InferArgs infer;
  auto* infer_cmd = app.add_subcommand("infer", "Run a trained network on images");
  infer_cmd->add_option("--model", infer.model, "Weight file")->required();
  infer_cmd->add_option("--images", infer.images, "Image files");
  infer_cmd->add_option("--annotations", infer.annotations, "Also process every image listed in this file");
  infer_cmd->add_option("--images-dir", infer.images_dir, "Directory image keys are relative to");
  infer_cmd->add_option("--out-dir", infer.out_dir, "Output directory")->required();
  infer_cmd->add_option("--emit", infer.emit, "probmap | mask | quad")
      ->capture_default_str()
      ->check(CLI::IsMember({"probmap", "mask", "quad"}));
  infer_cmd->add_option("--on-empty", infer.on_empty, "error | full-image")
      ->capture_default_str()
      ->check(CLI::IsMember({"error", "full-image"}));
  infer_cmd->add_option("--input-size", infer.input_size, "Network input side used in training")
      ->capture_default_str()
      ->check(CLI::PositiveNumber);

  auto* baseline_cmd = app.add_subcommand("baseline", "Non-learned reference systems");
  baseline_cmd->require_subcommand(1);
  fs::path bl_annotations, bl_out, bl_model;
  auto* full_cmd = baseline_cmd->add_subcommand("full-image", "Predict the full image frame");
  full_cmd->add_option("--annotations", bl_annotations, "Records to predict for")->required();
  full_cmd->add_option("--out", bl_out, "Output quad file")->required();
  auto* fit_cmd = baseline_cmd->add_subcommand("mean-quad-fit", "Fit the mean normalized quad");
  fit_cmd->add_option("--annotations", bl_annotations, "Training annotations")->required();
  fit_cmd->add_option("--out-model", bl_model, "Output model file")->required();
  auto* mpredict_cmd = baseline_cmd->add_subcommand("mean-quad-predict", "Predict the mean quad");
  mpredict_cmd->add_option("--model", bl_model, "Mean-quad model file")->required();
  mpredict_cmd->add_option("--annotations", bl_annotations, "Records to predict for")->required();
  mpredict_cmd->add_option("--out", bl_out, "Output quad file")->required();

  EvalArgs eval;
  auto* eval_cmd = app.add_subcommand("eval", "Score predictions against ground truth");
  auto* pq = eval_cmd->add_option("--pred-quads", eval.pred_quads, "Predicted quads (annotation format)");
  auto* pm = eval_cmd->add_option("--pred-masks", eval.pred_masks, "Directory of <image>.mask.png files");
  pq->excludes(pm);
  eval_cmd->add_option("--gt", eval.gt, "Ground-truth annotations")->required();
  eval_cmd->add_option("--report-out", eval.report_out, "Report file (.json for JSON, text otherwise)");
  eval_cmd->add_option("--system", eval.system, "System name recorded in the report");

  SynthArgs synth;
  auto* synth_cmd = app.add_subcommand("synth", "Generate a synthetic annotated dataset");
  synth_cmd->add_option("--spec", synth.spec, "Generator spec (JSON)");
  synth_cmd->add_option("--n", synth.n, "Number of images")->capture_default_str()->check(CLI::PositiveNumber);
  synth_cmd->add_option("--seed", synth.seed, "Seed (overrides the spec)");
  synth_cmd->add_option("--image-size", synth.image_size, "Image side (overrides the spec)");
  synth_cmd->add_option("--out-dir", synth.out_dir, "Output directory")->required();

  AnnotationServerOptions server_opts;
  std::string listen = "127.0.0.1:8080";
  auto* annotate_cmd = app.add_subcommand("annotate", "Serve the annotation HTTP API and UI");
  annotate_cmd->add_option("--annotations", server_opts.annotations, "Annotation file (created on first save)")
      ->required();
  annotate_cmd->add_option("--images-dir", server_opts.images_dir, "Image directory")->required();
  annotate_cmd->add_option("--listen", listen, "address:port (port 0 picks a free port)")->capture_default_str();
  annotate_cmd->add_option("--ui-dir", server_opts.ui_dir, "Static UI files served at /");
  annotate_cmd->add_option("--model", server_opts.model, "Network weights for prediction overlays");
  annotate_cmd->add_option("--mean-quad", server_opts.mean_quad, "Mean-quad model for prediction overlays");
  annotate_cmd->add_option("--input-size", server_opts.input_size, "Network input side")->capture_default_str();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    return app.exit(e) == 0 ? kOk : kUsage;
  }

  try {
    if (*train_cmd) return run_train(train, workers);
    if (*infer_cmd) return run_infer(infer, workers);
    if (*full_cmd) return run_baseline_full(bl_annotations, bl_out);
    if (*fit_cmd) return run_mean_fit(bl_annotations, bl_model);
    if (*mpredict_cmd) return run_mean_predict(bl_model, bl_annotations, bl_out);
    if (*eval_cmd) {
      if (!eval.pred_quads && !eval.pred_masks) throw UsageError("eval needs --pred-quads or --pred-masks");
      return run_eval(eval);
    }
    if (*synth_cmd) return run_synth(synth, workers);
    if (*annotate_cmd) return run_annotate(server_opts, listen);
  } catch (const UsageError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kUsage;
  } catch (const DataError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kData;
  } catch (const std::exception& e) {
    std::cerr << "internal error: " << e.what() << "\n";
    return kInternal;
  }
  return kInternal;
}
