#include "memeify/http_server.hpp"

#include <atomic>
#include <thread>

#include <httplib.h>

namespace memeify::service {

using nlohmann::json;

std::string png_data_url(std::span<const std::uint8_t> png) {
  static constexpr char kAlphabet[] = "ABCDEFGHIJKLMNOPQRSTUVWXYZabcdefghijklmnopqrstuvwxyz0123456789+/";
  std::string out = "data:image/png;base64,";
  out.reserve(out.size() + (png.size() + 2) / 3 * 4);
  std::size_t i = 0;
  for (; i + 3 <= png.size(); i += 3) {
    const std::uint32_t v = (png[i] << 16) | (png[i + 1] << 8) | png[i + 2];
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += kAlphabet[(v >> 6) & 63];
    out += kAlphabet[v & 63];
  }
  if (const std::size_t rest = png.size() - i; rest > 0) {
    std::uint32_t v = png[i] << 16;
    if (rest == 2) v |= png[i + 1] << 8;
    out += kAlphabet[(v >> 18) & 63];
    out += kAlphabet[(v >> 12) & 63];
    out += rest == 2 ? kAlphabet[(v >> 6) & 63] : '=';
    out += '=';
  }
  return out;
}

json to_json(const MemeResult& result) {
  return {{"class", result.class_name},
          {"theme", result.theme},
          {"caption", {{"top", result.caption.top}, {"bottom", result.caption.bottom}}},
          {"digest", result.caption.digest()},
          {"cached", result.cached},
          {"image", result.png ? json(png_data_url(*result.png)) : json(nullptr)}};
}

json to_json(const CustomResult& result) {
  json out = to_json(result.meme);
  out["matched_class"] = out["class"];
  out.erase("class");
  out["similarity"] = result.similarity;
  out["fallback"] = result.fallback;
  return out;
}

namespace {

void send_json(httplib::Response& res, int status, const json& body) {
  res.status = status;
  res.set_content(body.dump(), "application/json");
}

void send_error(httplib::Response& res, int status, const std::string& code, const std::string& message) {
  send_json(res, status, {{"code", code}, {"message", message}});
}

std::optional<std::string> cookie_value(const httplib::Request& req, const std::string& name) {
  const auto count = req.get_header_value_count("Cookie");
  for (std::size_t n = 0; n < count; ++n) {
    const std::string header = req.get_header_value("Cookie", n);
    std::size_t pos = 0;
    while (pos < header.size()) {
      std::size_t end = header.find(';', pos);
      if (end == std::string::npos) end = header.size();
      std::string_view part(header.data() + pos, end - pos);
      while (!part.empty() && part.front() == ' ') part.remove_prefix(1);
      if (part.size() > name.size() && part.substr(0, name.size()) == name && part[name.size()] == '=') {
        return std::string(part.substr(name.size() + 1));
      }
      pos = end + 1;
    }
  }
  return std::nullopt;
}

}  // namespace

struct HttpServer::Impl {
  MemeService& service;
  httplib::Server server;
  std::thread thread;
  int port = -1;
  std::atomic<std::uint64_t> requests{0};

  explicit Impl(MemeService& s) : service(s) {}

  std::shared_ptr<SessionState> session(const httplib::Request& req, httplib::Response& res) {
    if (requests.fetch_add(1) % 64 == 0) service.sessions().evict_idle();
    auto [state, created] = service.sessions().acquire(cookie_value(req, kSessionCookie));
    if (created) {
      res.set_header("Set-Cookie", std::string(kSessionCookie) + "=" + state->id + "; Path=/; HttpOnly; SameSite=Lax");
    }
    return state;
  }

  // Runs `body`, mapping ApiError and anything else to JSON errors.
  template <typename F>
  void guarded(httplib::Response& res, F&& body) {
    try {
      body();
    } catch (const ApiError& e) {
      send_error(res, e.status(), e.code(), e.what());
    } catch (const std::exception& e) {
      send_error(res, 500, "internal", e.what());
    }
  }

  void routes() {
    const std::size_t limit = service.config().upload_limit;
    // Leave headroom above the limit so oversized uploads reach the handler
    // and get a JSON 400 instead of a bare 413.
    server.set_payload_max_length(limit + limit / 2 + (1 << 20));

    server.Get("/api/health", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, service.health()); });
    });

    server.Get("/api/themes", [this](const httplib::Request&, httplib::Response& res) {
      guarded(res, [&] { send_json(res, 200, service.themes()); });
    });

    server.Post("/api/generate", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        GenerateRequest request;
        if (!req.body.empty()) {
          json body = json::parse(req.body, nullptr, false);
          if (body.is_discarded() || !body.is_object()) {
            throw ApiError(400, "bad_request", "request body must be a JSON object");
          }
          for (const auto& [key, field] : {std::pair{"theme", &request.theme}, std::pair{"class", &request.class_name}}) {
            if (!body.contains(key) || body[key].is_null()) continue;
            if (!body[key].is_string()) throw ApiError(400, "bad_request", std::string(key) + " must be a string");
            *field = body[key].get<std::string>();
          }
        }
        auto state = session(req, res);
        send_json(res, 200, to_json(service.generate(*state, request)));
      });
    });

    server.Post("/api/custom", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        std::string bytes;
        if (req.is_multipart_form_data()) {
          if (!req.has_file("image")) throw ApiError(400, "missing_image", "multipart field 'image' is required");
          bytes = req.get_file_value("image").content;
        } else {
          bytes = req.body;
        }
        if (bytes.empty()) throw ApiError(400, "missing_image", "no image was uploaded");
        auto state = session(req, res);
        const auto* data = reinterpret_cast<const std::uint8_t*>(bytes.data());
        send_json(res, 200, to_json(service.custom(*state, {data, bytes.size()})));
      });
    });

    server.Get(R"(/api/images/([A-Za-z0-9_\-]+))", [this](const httplib::Request& req, httplib::Response& res) {
      guarded(res, [&] {
        const auto images = service.artifacts().class_images;
        const std::string name = req.matches[1];
        if (!images) throw ApiError(503, "images_unavailable", "class images are not loaded");
        auto it = images->find(name);
        if (it == images->end()) throw ApiError(404, "unknown_class", "no image for class '" + name + "'");
        const auto png = encode_png(it->second);
        res.set_content(std::string(png.begin(), png.end()), "image/png");
      });
    });

    if (const auto& dir = service.config().static_dir; !dir.empty()) server.set_mount_point("/", dir);

    server.set_error_handler([](const httplib::Request&, httplib::Response& res) {
      if (!res.body.empty()) return;
      if (res.status == 413) {
        send_error(res, 400, "upload_too_large", "request body exceeds the upload limit");
      } else if (res.status == 404) {
        send_error(res, 404, "not_found", "no such endpoint");
      } else {
        send_error(res, res.status, "http_error", "request failed with status " + std::to_string(res.status));
      }
    });
  }
};

HttpServer::HttpServer(MemeService& service) : impl_(std::make_unique<Impl>(service)) { impl_->routes(); }

HttpServer::~HttpServer() { stop(); }

int HttpServer::bind(const std::string& host, int port) {
  if (port == 0) {
    impl_->port = impl_->server.bind_to_any_port(host);
  } else if (impl_->server.bind_to_port(host, port)) {
    impl_->port = port;
  } else {
    impl_->port = -1;
  }
  if (impl_->port < 0) throw Error("cannot bind " + host + ":" + std::to_string(port));
  return impl_->port;
}

void HttpServer::run() {
  if (impl_->port < 0) throw Error("server is not bound");
  impl_->server.listen_after_bind();
}

void HttpServer::start() {
  if (impl_->port < 0) throw Error("server is not bound");
  impl_->thread = std::thread([this] { impl_->server.listen_after_bind(); });
  impl_->server.wait_until_ready();
}

void HttpServer::stop() {
  impl_->server.stop();
  if (impl_->thread.joinable()) impl_->thread.join();
}

int HttpServer::port() const noexcept { return impl_->port; }

}  // namespace memeify::service
