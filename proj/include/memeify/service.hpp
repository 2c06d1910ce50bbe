#pragma once

#include <atomic>
#include <chrono>
#include <condition_variable>
#include <cstddef>
#include <cstdint>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <thread>
#include <vector>

#include <json.hpp>

#include "memeify/cache.hpp"
#include "memeify/captiongen.hpp"
#include "memeify/image.hpp"
#include "memeify/imageindex.hpp"
#include "memeify/random.hpp"
#include "memeify/session.hpp"
#include "memeify/themes.hpp"

namespace memeify::service {

/// `key = value` configuration for `memeify serve`.
struct ServiceConfig {
  std::string listen_address = "127.0.0.1";
  int port = 8080;
  std::string theme_model;
  std::string language_model;
  std::string lsh_index;
  std::string class_images;  // directory of <class>.png / <class>.jpg
  std::string static_dir;    // optional web UI assets
  std::size_t cache_capacity = 32;
  std::chrono::milliseconds cache_ttl = std::chrono::minutes(10);
  std::chrono::milliseconds session_idle = std::chrono::minutes(30);
  std::size_t upload_limit = 5 * 1024 * 1024;
  std::uint64_t seed = 0;
  bool background_refill = true;
  std::chrono::milliseconds refill_interval{200};
  std::size_t fresh_attempts = 32;
  double temperature = 1.0;
  bool warm_on_start = false;
};

/// Unknown keys and malformed values raise ParseError.
ServiceConfig parse_service_config(std::istream& in);
ServiceConfig load_service_config(const std::string& path);

/// Immutable model state shared by all requests. Any member may be null;
/// endpoints that need a missing piece answer 503.
struct Artifacts {
  std::shared_ptr<const themes::ThemeModel> themes;
  std::shared_ptr<const captiongen::ClassConditionedLM> language_model;
  std::shared_ptr<const imageindex::LshIndex> index;
  std::shared_ptr<const std::map<std::string, Image>> class_images;
};

/// Loads every artifact whose path is set in the config.
Artifacts load_artifacts(const ServiceConfig& config);

/// Reads <dir>/<class>.{png,jpg,jpeg}; the class is the normalized stem.
std::map<std::string, Image> load_class_images(const std::string& directory);

/// An error with an HTTP status and a machine-readable code.
class ApiError : public Error {
public:
  ApiError(int status, std::string code, const std::string& message)
      : Error(message), status_(status), code_(std::move(code)) {}
  int status() const noexcept { return status_; }
  const std::string& code() const noexcept { return code_; }

private:
  int status_;
  std::string code_;
};

struct GenerateRequest {
  std::optional<std::string> theme;
  std::optional<std::string> class_name;
};

struct MemeResult {
  std::string class_name;
  std::string theme;
  captiongen::GeneratedCaption caption;
  bool cached = false;
  std::optional<std::vector<std::uint8_t>> png;  // rendered meme, when a base image exists
};

struct CustomResult {
  MemeResult meme;
  double similarity = 0.0;
  bool fallback = false;
};

struct ServiceCounters {
  std::uint64_t request_generations = 0;     // language model calls on the request path
  std::uint64_t background_generations = 0;  // calls made by the refill worker
  CacheStats cache;
  std::size_t sessions = 0;
};

/// Transport-independent core of the HTTP API.
///
/// Randomization picks a theme uniformly, then a class uniformly within
/// it. Captions come from the cache when one unseen by the session is
/// buffered; otherwise up to `fresh_attempts` fresh generations are tried
/// on the request path. A background worker keeps buffers full without
/// holding any lock that reads need.
class MemeService {
public:
  MemeService(ServiceConfig config, Artifacts artifacts, ClockFn clock = Clock::now,
              std::unique_ptr<CaptionCache> cache = nullptr);
  ~MemeService();

  MemeService(const MemeService&) = delete;
  MemeService& operator=(const MemeService&) = delete;

  const ServiceConfig& config() const noexcept { return config_; }
  SessionStore& sessions() noexcept { return sessions_; }
  CaptionCache& cache() noexcept { return *cache_; }

  /// [{theme, classes[]}] for every theme with at least one class.
  nlohmann::json themes() const;
  nlohmann::json health() const;

  MemeResult generate(SessionState& session, const GenerateRequest& request);
  CustomResult custom(SessionState& session, std::span<const std::uint8_t> upload);

  /// Fills every class buffer synchronously (counts as background work).
  void warm_up();

  /// Atomically replaces the model state seen by new requests.
  void swap_artifacts(Artifacts artifacts);
  Artifacts artifacts() const;

  ServiceCounters counters() const;

private:
  std::string resolve_class(const themes::ThemeModel& model, const captiongen::ClassConditionedLM& lm,
                            const GenerateRequest& request, std::string& theme);
  MemeResult serve_class(SessionState& session, const Artifacts& artifacts, const std::string& class_name,
                         const std::string& theme, const Image* base);
  captiongen::GeneratedCaption fresh(const captiongen::ClassConditionedLM& lm, const std::string& class_name);
  void refill_class(const captiongen::ClassConditionedLM& lm, const std::string& class_name);
  void request_refill(const std::string& class_name);
  void refill_loop();

  ServiceConfig config_;
  ClockFn clock_;
  std::unique_ptr<CaptionCache> cache_;
  SessionStore sessions_;

  mutable std::mutex artifacts_mutex_;
  Artifacts artifacts_;

  std::mutex rng_mutex_;
  Rng picker_;
  std::atomic<std::uint64_t> seed_counter_{0};
  std::atomic<std::uint64_t> request_generations_{0};
  std::atomic<std::uint64_t> background_generations_{0};

  std::mutex refill_mutex_;
  std::condition_variable refill_cv_;
  std::set<std::string> refill_queue_;
  bool stopping_ = false;
  std::thread refill_thread_;
};

}  // namespace memeify::service
