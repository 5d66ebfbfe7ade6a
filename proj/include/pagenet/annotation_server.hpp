#pragma once

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <map>
#include <mutex>
#include <optional>
#include <shared_mutex>
#include <string>
#include <vector>

#include "httplib.h"
#include "json.hpp"
#include "pagenet/baselines.hpp"
#include "pagenet/dataset.hpp"
#include "pagenet/geometry.hpp"
#include "pagenet/io.hpp"
#include "pagenet/nn/model_io.hpp"
#include "pagenet/nn/train.hpp"

namespace pagenet {

// JSON form of a record uses the annotation grammar's field names.
inline nlohmann::json record_to_json(const AnnotationRecord& r) {
  nlohmann::json corners = nlohmann::json::array();
  for (const auto& p : r.quad.corners) corners.push_back({p.x, p.y});
  nlohmann::json j = {{"image_path", r.image_path}, {"width", r.width}, {"height", r.height}, {"corners", corners}};
  if (r.annotator_id) j["annotator_id"] = *r.annotator_id;
  return j;
}

inline nlohmann::json quad_to_json(const Quad& q) {
  nlohmann::json corners = nlohmann::json::array();
  for (const auto& p : q.corners) corners.push_back({p.x, p.y});
  return corners;
}

/// Validates and canonicalizes a record sent by a client. Throws ParseError
/// (line 0) with a diagnostic on malformed input.
inline AnnotationRecord record_from_json(const nlohmann::json& j) {
  auto fail = [](const std::string& msg) -> AnnotationRecord { throw ParseError(0, msg); };
  if (!j.is_object()) return fail("record must be a JSON object");
  if (!j.contains("corners") || !j["corners"].is_array()) return fail("record needs a 'corners' array");
  const auto& cs = j["corners"];
  if (cs.size() != 4) return fail("expected 4 corners, got " + std::to_string(cs.size()));
  std::array<Point, 4> pts{};
  for (std::size_t i = 0; i < 4; ++i) {
    if (!cs[i].is_array() || cs[i].size() != 2 || !cs[i][0].is_number() || !cs[i][1].is_number()) {
      return fail("corner " + std::to_string(i + 1) + " must be [x, y]");
    }
    pts[i] = {cs[i][0].get<double>(), cs[i][1].get<double>()};
    if (!is_finite(pts[i])) return fail("corner " + std::to_string(i + 1) + " is not finite");
  }
  AnnotationRecord r;
  if (j.contains("image_path")) r.image_path = j["image_path"].get<std::string>();
  if (j.contains("width")) r.width = j["width"].get<int>();
  if (j.contains("height")) r.height = j["height"].get<int>();
  if (j.contains("annotator_id") && j["annotator_id"].is_string() && !j["annotator_id"].get<std::string>().empty()) {
    r.annotator_id = j["annotator_id"].get<std::string>();
  }
  r.quad = canonicalize(pts);
  if (!is_convex(r.quad)) return fail("quadrilateral is not convex");
  return r;
}

struct AnnotationServerOptions {
  std::filesystem::path annotations;
  std::filesystem::path images_dir;
  std::optional<std::filesystem::path> model;
  std::optional<std::filesystem::path> mean_quad;
  std::optional<std::filesystem::path> ui_dir;
  int input_size = kDefaultInputSize;
};

/// HTTP API for the annotation UI. Endpoints:
///   GET /api/images                       list with status
///   GET /api/images/{i}/file              image bytes
///   GET /api/annotations/{i}              stored record (404 if none)
///   PUT /api/annotations/{i}              store a record (canonicalized)
///   GET /api/predictions/{i}?system=...   model | mean-quad | full-image
/// Writes are serialized and persisted atomically; conflicting writes are
/// last-writer-wins, flagged with a Warning header.
class AnnotationServer {
 public:
  struct Entry {
    std::string image_path;
    int width = 0;
    int height = 0;
    std::optional<AnnotationRecord> record;
    std::uint64_t revision = 0;
  };

  explicit AnnotationServer(AnnotationServerOptions opts) : opts_(std::move(opts)) {
    load_dataset();
    if (opts_.model) model_ = nn::load_model(*opts_.model);
    if (opts_.mean_quad) mean_quad_ = load_mean_quad(*opts_.mean_quad);
    // No SO_REUSEPORT: a second server on a taken port must fail to bind.
    server_.set_socket_options([](socket_t sock) {
      int yes = 1;
      ::setsockopt(sock, SOL_SOCKET, SO_REUSEADDR, reinterpret_cast<const char*>(&yes), sizeof yes);
    });
    routes();
  }

  bool bind(const std::string& host, int port) {
    if (port == 0) {
      port_ = server_.bind_to_any_port(host);
      return port_ > 0;
    }
    if (!server_.bind_to_port(host, port)) return false;
    port_ = port;
    return true;
  }
  bool listen_after_bind() { return server_.listen_after_bind(); }
  void stop() { server_.stop(); }
  void wait_until_ready() { server_.wait_until_ready(); }
  int port() const { return port_; }

  std::vector<Entry> entries() const {
    std::shared_lock lock(mutex_);
    return entries_;
  }

 private:
  void load_dataset() {
    std::vector<AnnotationRecord> records;
    if (std::filesystem::exists(opts_.annotations)) records = load_annotations(opts_.annotations);
    std::map<std::string, AnnotationRecord> by_path;
    for (auto& r : records) by_path.emplace(r.image_path, r);

    std::vector<std::string> names;
    if (!opts_.images_dir.empty() && std::filesystem::is_directory(opts_.images_dir)) {
      for (const auto& e : std::filesystem::directory_iterator(opts_.images_dir)) {
        const auto ext = detail::lower_extension(e.path());
        if (e.is_regular_file() && (ext == ".png" || ext == ".pgm" || ext == ".ppm")) {
          names.push_back(e.path().filename().string());
        }
      }
    }
    for (const auto& r : records) names.push_back(r.image_path);
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());

    for (const auto& name : names) {
      Entry e;
      e.image_path = name;
      if (auto it = by_path.find(name); it != by_path.end()) {
        e.record = it->second;
        e.width = it->second.width;
        e.height = it->second.height;
      } else {
        const auto img = read_image(resolve_image(opts_.images_dir, AnnotationRecord{name, 0, 0, {}, {}}));
        e.width = img.width;
        e.height = img.height;
      }
      entries_.push_back(std::move(e));
    }
  }

  // Caller holds the write lock.
  void persist() {
    std::vector<AnnotationRecord> records;
    for (const auto& e : entries_) {
      if (e.record) records.push_back(*e.record);
    }
    save_annotations(opts_.annotations, records);
  }

  static void send_json(httplib::Response& res, int status, const nlohmann::json& body) {
    res.status = status;
    res.set_content(body.dump(), "application/json");
  }

  static void send_error(httplib::Response& res, int status, const std::string& msg) {
    send_json(res, status, {{"error", msg}});
  }

  std::optional<std::size_t> index_of(const httplib::Request& req, httplib::Response& res) const {
    const auto idx = std::stoull(req.matches[1].str());
    if (idx >= entries_.size()) {
      send_error(res, 404, "no image with index " + req.matches[1].str());
      return std::nullopt;
    }
    return static_cast<std::size_t>(idx);
  }

  void routes() {
    server_.Get("/api/images", [this](const httplib::Request&, httplib::Response& res) {
      std::shared_lock lock(mutex_);
      nlohmann::json list = nlohmann::json::array();
      for (std::size_t i = 0; i < entries_.size(); ++i) {
        const auto& e = entries_[i];
        list.push_back({{"index", i},
                        {"image_path", e.image_path},
                        {"width", e.width},
                        {"height", e.height},
                        {"status", e.record ? "annotated" : "unannotated"},
                        {"revision", e.revision}});
      }
      send_json(res, 200, {{"images", list}});
    });

    server_.Get(R"(/api/images/(\d+)/file)", [this](const httplib::Request& req, httplib::Response& res) {
      std::filesystem::path path;
      {
        std::shared_lock lock(mutex_);
        const auto idx = index_of(req, res);
        if (!idx) return;
        path = resolve_image(opts_.images_dir, AnnotationRecord{entries_[*idx].image_path, 0, 0, {}, {}});
      }
      try {
        const auto bytes = read_file(path);
        const auto ext = detail::lower_extension(path);
        res.set_content(bytes, ext == ".png" ? "image/png" : "image/x-portable-anymap");
      } catch (const DataError& e) {
        send_error(res, 404, e.what());
      }
    });

    server_.Get(R"(/api/annotations/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      std::shared_lock lock(mutex_);
      const auto idx = index_of(req, res);
      if (!idx) return;
      const auto& e = entries_[*idx];
      if (!e.record) return send_error(res, 404, "image is not annotated");
      auto body = record_to_json(*e.record);
      body["revision"] = e.revision;
      send_json(res, 200, body);
    });

    server_.Put(R"(/api/annotations/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      AnnotationRecord rec;
      nlohmann::json body;
      try {
        body = nlohmann::json::parse(req.body);
        rec = record_from_json(body);
      } catch (const nlohmann::json::exception& e) {
        return send_error(res, 400, std::string("invalid JSON: ") + e.what());
      } catch (const ParseError& e) {
        return send_error(res, 400, e.what());
      }
      std::unique_lock lock(mutex_);
      const auto idx = index_of(req, res);
      if (!idx) return;
      auto& e = entries_[*idx];
      if (!rec.image_path.empty() && rec.image_path != e.image_path) {
        return send_error(res, 422, "record is for '" + rec.image_path + "', not '" + e.image_path + "'");
      }
      if ((rec.width != 0 && rec.width != e.width) || (rec.height != 0 && rec.height != e.height)) {
        return send_error(res, 422, "record dimensions do not match the image");
      }
      rec.image_path = e.image_path;
      rec.width = e.width;
      rec.height = e.height;
      if (body.contains("base_revision") && body["base_revision"].is_number_unsigned() &&
          body["base_revision"].get<std::uint64_t>() != e.revision) {
        res.set_header("Warning", "299 pagenet \"overwrote a concurrent change\"");
      }
      const auto previous = e.record;
      e.record = rec;
      try {
        persist();
      } catch (const DataError& err) {
        e.record = previous;
        return send_error(res, 500, err.what());
      }
      ++e.revision;
      auto out = record_to_json(rec);
      out["revision"] = e.revision;
      send_json(res, 200, out);
    });

    server_.Get(R"(/api/predictions/(\d+))", [this](const httplib::Request& req, httplib::Response& res) {
      Entry entry;
      {
        std::shared_lock lock(mutex_);
        const auto idx = index_of(req, res);
        if (!idx) return;
        entry = entries_[*idx];
      }
      const std::string system = req.has_param("system") ? req.get_param_value("system") : "full-image";
      Quad q;
      if (system == "full-image") {
        q = predict_full_image(entry.width, entry.height);
      } else if (system == "mean-quad") {
        if (!mean_quad_) return send_error(res, 404, "server started without a mean-quad model");
        q = predict_mean_quad(*mean_quad_, entry.width, entry.height);
      } else if (system == "model") {
        if (!model_) return send_error(res, 404, "server started without a network model");
        try {
          const auto img = load_record_image(opts_.images_dir, AnnotationRecord{entry.image_path, entry.width,
                                                                               entry.height, {}, {}});
          q = nn::predict_sample(*model_, preprocess_image(img, opts_.input_size), entry.height, entry.width).quad;
        } catch (const DataError& e) {
          return send_error(res, 404, e.what());
        }
      } else {
        return send_error(res, 400, "unknown system '" + system + "'");
      }
      nlohmann::json out = {{"system", system}, {"corners", quad_to_json(q)}};
      if (entry.record) out["iou"] = quad_iou(q, entry.record->quad);
      send_json(res, 200, out);
    });

    if (opts_.ui_dir) {
      server_.set_mount_point("/", opts_.ui_dir->string());
    } else {
      server_.Get("/", [](const httplib::Request&, httplib::Response& res) {
        res.set_content("pagenet annotation API; start with --ui-dir to serve the browser client\n", "text/plain");
      });
    }
  }

  AnnotationServerOptions opts_;
  httplib::Server server_;
  mutable std::shared_mutex mutex_;
  std::vector<Entry> entries_;
  std::optional<nn::FcnModel> model_;
  std::optional<MeanQuadModel> mean_quad_;
  int port_ = 0;
};

}  // namespace pagenet
