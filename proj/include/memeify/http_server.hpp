#pragma once

#include <cstdint>
#include <memory>
#include <span>
#include <string>

#include <json.hpp>

#include "memeify/service.hpp"

namespace memeify::service {

/// "data:image/png;base64,..." for inline images in JSON responses.
std::string png_data_url(std::span<const std::uint8_t> png);

nlohmann::json to_json(const MemeResult& result);
nlohmann::json to_json(const CustomResult& result);

/// HTTP/1.1 front end for a MemeService.
///
///   GET  /api/health
///   GET  /api/themes
///   POST /api/generate   {theme?, class?}
///   POST /api/custom     multipart field "image"
///   GET  /api/images/<class>
///
/// Every response body is JSON except class images and static assets.
/// Errors are {code, message}.
class HttpServer {
public:
  explicit HttpServer(MemeService& service);
  ~HttpServer();

  HttpServer(const HttpServer&) = delete;
  HttpServer& operator=(const HttpServer&) = delete;

  /// Binds the listening socket; port 0 picks a free port. Returns the
  /// bound port.
  int bind(const std::string& host, int port);

  /// Serves on the bound socket until stop(). Blocks.
  void run();

  /// run() on a background thread; returns once the server accepts.
  void start();
  void stop();

  int port() const noexcept;

private:
  struct Impl;
  std::unique_ptr<Impl> impl_;
};

}  // namespace memeify::service
