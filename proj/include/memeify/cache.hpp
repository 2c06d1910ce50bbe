#pragma once

#include <chrono>
#include <cstddef>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <mutex>
#include <optional>
#include <set>
#include <string>

#include "memeify/captiongen.hpp"

namespace memeify::service {

using Clock = std::chrono::steady_clock;
using ClockFn = std::function<Clock::time_point()>;

struct CacheStats {
  std::uint64_t hits = 0;
  std::uint64_t misses = 0;
  std::uint64_t expired = 0;
  std::uint64_t inserted = 0;
};

/// Storage contract for pre-generated captions, keyed by class. The
/// in-process MemeCache implements it; an external store can too.
class CaptionCache {
public:
  virtual ~CaptionCache() = default;

  /// Oldest live caption for `class_name` whose digest is not in `seen`.
  /// Counts a hit or a miss.
  virtual std::optional<captiongen::GeneratedCaption> find_unseen(const std::string& class_name,
                                                                  const std::set<std::string>& seen) = 0;

  /// Adds a caption to its class buffer, dropping the oldest entry when
  /// full. Returns false if an equal caption is already buffered.
  virtual bool put(const captiongen::GeneratedCaption& caption) = 0;

  /// Number of unexpired captions buffered for `class_name`.
  virtual std::size_t live_count(const std::string& class_name) = 0;

  virtual std::size_t capacity() const = 0;
  virtual CacheStats stats() const = 0;
};

/// Per-class ring buffers with a time-to-live. Expired entries are purged
/// before every read and never served. Internally synchronized.
class MemeCache final : public CaptionCache {
public:
  explicit MemeCache(std::size_t capacity = 32, std::chrono::milliseconds ttl = std::chrono::minutes(10),
                     ClockFn clock = Clock::now);

  std::optional<captiongen::GeneratedCaption> find_unseen(const std::string& class_name,
                                                          const std::set<std::string>& seen) override;
  bool put(const captiongen::GeneratedCaption& caption) override;
  std::size_t live_count(const std::string& class_name) override;
  std::size_t capacity() const override { return capacity_; }
  CacheStats stats() const override;

private:
  struct Entry {
    captiongen::GeneratedCaption caption;
    std::string digest;
    Clock::time_point expires;
  };

  void purge(std::deque<Entry>& buffer, Clock::time_point now);

  std::size_t capacity_;
  std::chrono::milliseconds ttl_;
  ClockFn clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::deque<Entry>> buffers_;
  CacheStats stats_;
};

}  // namespace memeify::service
