#include "skelpose/annot_service.hpp"

#include <httplib.h>

#include <charconv>
#include <cmath>
#include <mutex>

#include "skelpose/dataio.hpp"
#include "skelpose/error.hpp"
#include "skelpose/renderer.hpp"
#include "skelpose/skeleton.hpp"

namespace skelpose {

using nlohmann::json;

namespace {

ApiResponse json_response(int status, const json& body) {
  return {status, "application/json", body.dump()};
}

ApiResponse error_response(int status, const std::string& message) {
  return json_response(status, {{"error", message}});
}

ApiResponse invalid(const std::string& field, const std::string& message) {
  return json_response(422, {{"error", message}, {"field", field}});
}

double parse_double(const std::string& text, double fallback, const char* name) {
  if (text.empty()) return fallback;
  double v = 0.0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw DomainError(std::string(name) + ": not a number: '" + text + "'");
  }
  return v;
}

int parse_int(const std::string& text, int fallback, const char* name) {
  if (text.empty()) return fallback;
  int v = 0;
  const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
  if (ec != std::errc() || end != text.data() + text.size()) {
    throw DomainError(std::string(name) + ": not an integer: '" + text + "'");
  }
  return v;
}

}  // namespace

struct AnnotationService::Impl {
  AnnotationConfig config;
  Dataset dataset;
  mutable std::mutex mutex;
  httplib::Server server;
};

AnnotationService::AnnotationService(AnnotationConfig config) : impl_(std::make_unique<Impl>()) {
  impl_->dataset = load_dataset(config.dataset_path);
  validate(impl_->dataset);
  impl_->config = std::move(config);
}

AnnotationService::~AnnotationService() { stop(); }

ApiResponse AnnotationService::get_skeleton() const {
  return json_response(200, skeleton_to_json(standard_model()));
}

ApiResponse AnnotationService::list_samples() const {
  std::lock_guard lock(impl_->mutex);
  json out = json::array();
  for (const auto& s : impl_->dataset.samples) {
    out.push_back({{"id", s.id}, {"pseudo_gt", s.pseudo_gt}, {"revision", s.revision}});
  }
  return json_response(200, out);
}

ApiResponse AnnotationService::get_sample(const std::string& id) const {
  std::lock_guard lock(impl_->mutex);
  const Sample* s = impl_->dataset.find(id);
  if (!s) return error_response(404, "unknown sample '" + id + "'");
  return json_response(200, sample_to_json(*s));
}

ApiResponse AnnotationService::render(const std::string& id, const std::string& c,
                                      const std::string& l, const std::string& canvas,
                                      const std::string& which) const {
  Sample sample;
  {
    std::lock_guard lock(impl_->mutex);
    const Sample* s = impl_->dataset.find(id);
    if (!s) return error_response(404, "unknown sample '" + id + "'");
    sample = *s;
  }
  if (!sample.joints3d) return error_response(409, "sample '" + id + "' has no joints3d");
  MapConfig config;
  try {
    config.crop_scale = parse_double(c, 1.0, "c");
    config.stick_width = parse_int(l, 10, "l");
    config.canvas_size = parse_int(canvas, 56, "canvas");
    validate(config);
  } catch (const Error& e) {
    return error_response(400, e.what());
  }
  if (!which.empty() && which != "fore" && which != "back") {
    return error_response(400, "which: expected 'fore' or 'back'");
  }
  const auto pair = render_sample(sample, config);
  if (which == "fore") return {200, "image/png", encode_map_png(pair, MapLayer::kFore)};
  if (which == "back") return {200, "image/png", encode_map_png(pair, MapLayer::kBack)};
  return json_response(200, {{"id", id},
                             {"config", config_to_json(config)},
                             {"fore_png", httplib::detail::base64_encode(
                                              encode_map_png(pair, MapLayer::kFore))},
                             {"back_png", httplib::detail::base64_encode(
                                              encode_map_png(pair, MapLayer::kBack))}});
}

ApiResponse AnnotationService::put_pose(const std::string& id, const std::string& body) {
  json req;
  try {
    req = json::parse(body);
  } catch (const json::exception& e) {
    return error_response(400, std::string("malformed JSON: ") + e.what());
  }
  if (!req.is_object()) return error_response(400, "request body must be a JSON object");
  if (!req.contains("revision") || !req["revision"].is_number_integer()) {
    return invalid("revision", "revision: expected an integer");
  }
  if (!req.contains("joints3d")) return invalid("joints3d", "joints3d: missing");
  Pose3D pose;
  try {
    pose = pose3d_from_json(req["joints3d"], "joints3d");
  } catch (const Error& e) {
    return invalid("joints3d", e.what());
  }
  std::optional<double> tol;
  if (req.contains("residual_tol")) {
    const auto& t = req["residual_tol"];
    if (!t.is_number() || !std::isfinite(t.get<double>()) || t.get<double>() < 0.0) {
      return invalid("residual_tol", "residual_tol: expected a non-negative number");
    }
    tol = t.get<double>();
  }

  std::lock_guard lock(impl_->mutex);
  Sample* s = impl_->dataset.find(id);
  if (!s) return error_response(404, "unknown sample '" + id + "'");
  const int revision = req["revision"].get<int>();
  if (revision != s->revision) {
    return json_response(409, {{"error", "stale revision " + std::to_string(revision)},
                               {"current_revision", s->revision}});
  }
  Sample updated = *s;
  updated.joints3d = pose;
  if (tol) updated.residual_tol = *tol;
  updated.pseudo_gt = true;
  updated.revision = s->revision + 1;
  try {
    validate(updated);
  } catch (const Error& e) {
    return invalid("joints3d", e.what());
  }
  const Sample previous = *s;
  *s = updated;
  try {
    save_dataset(impl_->dataset, impl_->config.dataset_path);
  } catch (const std::exception& e) {
    *s = previous;
    return error_response(500, std::string("persist failed: ") + e.what());
  }
  return json_response(200, {{"id", id}, {"revision", updated.revision}, {"pseudo_gt", true}});
}

int AnnotationService::bind(const std::string& host, int port) {
  auto& srv = impl_->server;
  const auto send = [](httplib::Response& res, const ApiResponse& r) {
    res.status = r.status;
    res.set_content(r.body, r.content_type);
  };
  srv.Get("/api/skeleton", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, get_skeleton());
  });
  srv.Get("/api/samples", [this, send](const httplib::Request&, httplib::Response& res) {
    send(res, list_samples());
  });
  srv.Get(R"(/api/samples/([^/]+))", [this, send](const httplib::Request& req, httplib::Response& res) {
    send(res, get_sample(req.matches[1]));
  });
  srv.Get(R"(/api/samples/([^/]+)/render)",
          [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, render(req.matches[1], req.get_param_value("c"), req.get_param_value("l"),
                             req.get_param_value("canvas"), req.get_param_value("which")));
          });
  srv.Put(R"(/api/samples/([^/]+)/pose3d)",
          [this, send](const httplib::Request& req, httplib::Response& res) {
            send(res, put_pose(req.matches[1], req.body));
          });
  srv.set_exception_handler([](const httplib::Request&, httplib::Response& res, std::exception_ptr ep) {
    std::string msg = "internal error";
    try {
      std::rethrow_exception(ep);
    } catch (const std::exception& e) {
      msg = e.what();
    } catch (...) {
    }
    res.status = 500;
    res.set_content(json{{"error", msg}}.dump(), "application/json");
  });
  if (!impl_->config.ui_dir.empty() && !srv.set_mount_point("/", impl_->config.ui_dir.string())) {
    throw PreconditionError("ui directory not found: " + impl_->config.ui_dir.string());
  }
  if (port == 0) {
    const int bound = srv.bind_to_any_port(host);
    if (bound < 0) throw Error("cannot bind " + host);
    return bound;
  }
  if (!srv.bind_to_port(host, port)) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return port;
}

void AnnotationService::run() { impl_->server.listen_after_bind(); }

void AnnotationService::stop() {
  if (impl_ && impl_->server.is_running()) impl_->server.stop();
}

}  // namespace skelpose
