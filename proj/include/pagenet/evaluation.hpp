#pragma once

#include <cstddef>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "json.hpp"
#include "pagenet/dataset.hpp"
#include "pagenet/errors.hpp"
#include "pagenet/geometry.hpp"
#include "pagenet/raster.hpp"

namespace pagenet {

enum class IouMode { geometric, raster };

inline const char* to_string(IouMode m) { return m == IouMode::geometric ? "geometric" : "raster"; }

inline IouMode parse_iou_mode(const std::string& s) {
  if (s == "geometric") return IouMode::geometric;
  if (s == "raster") return IouMode::raster;
  throw FormatError("unknown IoU mode '" + s + "'");
}

struct EvalEntry {
  std::string image_id;
  double iou = 0.0;
  IouMode mode = IouMode::geometric;

  bool operator==(const EvalEntry&) const = default;
};

struct EvalReport {
  static constexpr int kVersion = 1;

  std::string system;
  IouMode mode = IouMode::geometric;
  std::vector<EvalEntry> entries;
  double miou = 0.0;
  std::size_t count = 0;

  bool operator==(const EvalReport&) const = default;
};

namespace detail {

inline EvalReport finish_report(std::string system, IouMode mode, std::vector<EvalEntry> entries) {
  EvalReport rep;
  rep.system = std::move(system);
  rep.mode = mode;
  rep.entries = std::move(entries);
  rep.count = rep.entries.size();
  double sum = 0.0;
  for (const auto& e : rep.entries) sum += e.iou;
  rep.miou = rep.count == 0 ? 0.0 : sum / static_cast<double>(rep.count);
  return rep;
}

template <typename Pred, typename Gt>
void require_predictions(const std::map<std::string, Pred>& preds, const std::map<std::string, Gt>& gts) {
  std::vector<std::string> missing;
  for (const auto& [id, gt] : gts) {
    if (!preds.contains(id)) missing.push_back(id);
  }
  if (!missing.empty()) throw MissingPrediction(std::move(missing));
}

}  // namespace detail

/// Geometric quad IoU per ground-truth image, in image-id order. Every ground
/// truth image needs a prediction; extra predictions are ignored.
inline EvalReport evaluate_quads(const std::map<std::string, Quad>& preds,
                                 const std::map<std::string, Quad>& gts, std::string system = "quads") {
  detail::require_predictions(preds, gts);
  std::vector<EvalEntry> entries;
  for (const auto& [id, gt] : gts) {
    entries.push_back({id, quad_iou(preds.at(id), gt), IouMode::geometric});
  }
  return detail::finish_report(std::move(system), IouMode::geometric, std::move(entries));
}

/// Raster IoU of predicted masks against ground-truth quads rasterized at each
/// mask's resolution (the record's quad is scaled from its image frame).
inline EvalReport evaluate_pixels(const std::map<std::string, BinaryMask>& preds,
                                  const std::map<std::string, AnnotationRecord>& gts,
                                  std::string system = "pixels") {
  detail::require_predictions(preds, gts);
  std::vector<EvalEntry> entries;
  for (const auto& [id, gt] : gts) {
    const auto& mask = preds.at(id);
    if (gt.width <= 0 || gt.height <= 0) throw ShapeMismatch("ground truth for " + id + " has no size");
    const Quad scaled = upscale_quad(gt.quad, gt.height, gt.width, mask.height, mask.width);
    entries.push_back({id, mask_iou(mask, rasterize_quad(scaled, mask.height, mask.width)), IouMode::raster});
  }
  return detail::finish_report(std::move(system), IouMode::raster, std::move(entries));
}

// Mask-versus-mask variant; dimensions must agree.
inline EvalReport evaluate_pixels(const std::map<std::string, BinaryMask>& preds,
                                  const std::map<std::string, BinaryMask>& gts,
                                  std::string system = "pixels") {
  detail::require_predictions(preds, gts);
  std::vector<EvalEntry> entries;
  for (const auto& [id, gt] : gts) entries.push_back({id, mask_iou(preds.at(id), gt), IouMode::raster});
  return detail::finish_report(std::move(system), IouMode::raster, std::move(entries));
}

inline std::map<std::string, Quad> quads_by_image(const std::vector<AnnotationRecord>& records) {
  std::map<std::string, Quad> out;
  for (const auto& r : records) out[r.image_path] = r.quad;
  return out;
}

/// Scores the second annotation set as if it were a system's output, using the
/// first set as ground truth.
inline EvalReport human_agreement(const std::vector<AnnotationRecord>& set_a,
                                  const std::vector<AnnotationRecord>& set_b) {
  return evaluate_quads(quads_by_image(set_b), quads_by_image(set_a), "human-agreement");
}

// Line-oriented form: a version header, one `image` line per entry and a
// trailing `summary` line.
inline std::string format_report_text(const EvalReport& rep) {
  std::string out = "# pagenet-eval-report v" + std::to_string(EvalReport::kVersion) + "\n";
  for (const auto& e : rep.entries) {
    out += "image\t" + e.image_id + '\t' + format_number(e.iou) + '\t' + to_string(e.mode) + '\n';
  }
  out += "summary\t" + rep.system + '\t' + format_number(rep.miou) + '\t' + std::to_string(rep.count) +
         '\t' + to_string(rep.mode) + '\n';
  return out;
}

inline EvalReport parse_report_text(const std::string& text) {
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  EvalReport rep;
  bool header = false;
  bool summary = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (line.empty()) continue;
    if (!header) {
      if (line != "# pagenet-eval-report v" + std::to_string(EvalReport::kVersion)) {
        throw ParseError(line_no, "not a version " + std::to_string(EvalReport::kVersion) + " report");
      }
      header = true;
      continue;
    }
    const auto f = split_tabs(line);
    if (f[0] == "image" && f.size() == 4) {
      const auto iou = parse_number(f[2]);
      if (!iou) throw ParseError(line_no, "bad IoU value");
      rep.entries.push_back({std::string(f[1]), *iou, parse_iou_mode(std::string(f[3]))});
    } else if (f[0] == "summary" && f.size() == 5) {
      rep.system = std::string(f[1]);
      const auto miou = parse_number(f[2]);
      if (!miou) throw ParseError(line_no, "bad mIoU value");
      rep.miou = *miou;
      rep.count = std::stoul(std::string(f[3]));
      rep.mode = parse_iou_mode(std::string(f[4]));
      summary = true;
    } else {
      throw ParseError(line_no, "unrecognized report line");
    }
  }
  if (!summary) throw ParseError(line_no, "report has no summary line");
  return rep;
}

inline nlohmann::json report_to_json(const EvalReport& rep) {
  nlohmann::json images = nlohmann::json::array();
  for (const auto& e : rep.entries) {
    images.push_back({{"id", e.image_id}, {"iou", e.iou}, {"mode", to_string(e.mode)}});
  }
  return {{"format", "pagenet-eval-report"}, {"version", EvalReport::kVersion},
          {"system", rep.system},            {"mode", to_string(rep.mode)},
          {"miou", rep.miou},                {"count", rep.count},
          {"images", images}};
}

inline EvalReport report_from_json(const nlohmann::json& j) {
  if (j.value("format", "") != "pagenet-eval-report" || j.value("version", 0) != EvalReport::kVersion) {
    throw FormatError("not a version " + std::to_string(EvalReport::kVersion) + " evaluation report");
  }
  EvalReport rep;
  rep.system = j.at("system").get<std::string>();
  rep.mode = parse_iou_mode(j.at("mode").get<std::string>());
  rep.miou = j.at("miou").get<double>();
  rep.count = j.at("count").get<std::size_t>();
  for (const auto& e : j.at("images")) {
    rep.entries.push_back(
        {e.at("id").get<std::string>(), e.at("iou").get<double>(), parse_iou_mode(e.at("mode").get<std::string>())});
  }
  return rep;
}

}  // namespace pagenet
