#pragma once

#include <filesystem>
#include <memory>
#include <string>

#include <nlohmann/json.hpp>

namespace skelpose {

struct AnnotationConfig {
  std::filesystem::path dataset_path;
  // Static UI bundle served at `/`; empty disables it.
  std::filesystem::path ui_dir;
};

struct ApiResponse {
  int status = 200;
  std::string content_type = "application/json";
  std::string body;
};

// HTTP backend for pseudo-3D ground-truth annotation. The dataset is loaded
// once; every accepted write bumps the sample revision and is persisted
// atomically before the response is sent.
class AnnotationService {
 public:
  explicit AnnotationService(AnnotationConfig config);
  ~AnnotationService();
  AnnotationService(const AnnotationService&) = delete;
  AnnotationService& operator=(const AnnotationService&) = delete;

  // Transport-free request handling, used by the HTTP layer and by tests.
  ApiResponse get_skeleton() const;
  ApiResponse list_samples() const;
  ApiResponse get_sample(const std::string& id) const;
  // `which` is "fore", "back" (PNG) or empty (JSON with both PNGs base64).
  ApiResponse render(const std::string& id, const std::string& c, const std::string& l,
                     const std::string& canvas, const std::string& which) const;
  ApiResponse put_pose(const std::string& id, const std::string& body);

  // Binds to host:port (0 picks a free port) and returns the bound port.
  int bind(const std::string& host, int port);
  // Blocks serving requests until stop().
  void run();
  void stop();

 private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace skelpose
