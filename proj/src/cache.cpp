#include "memeify/cache.hpp"

#include <algorithm>

namespace memeify::service {

MemeCache::MemeCache(std::size_t capacity, std::chrono::milliseconds ttl, ClockFn clock)
    : capacity_(capacity), ttl_(ttl), clock_(std::move(clock)) {
  if (capacity_ == 0) throw Error("cache capacity must be positive");
}

void MemeCache::purge(std::deque<Entry>& buffer, Clock::time_point now) {
  const auto before = buffer.size();
  buffer.erase(std::remove_if(buffer.begin(), buffer.end(), [&](const Entry& e) { return e.expires <= now; }),
               buffer.end());
  stats_.expired += before - buffer.size();
}

std::optional<captiongen::GeneratedCaption> MemeCache::find_unseen(const std::string& class_name,
                                                                   const std::set<std::string>& seen) {
  std::lock_guard lock(mutex_);
  auto it = buffers_.find(class_name);
  if (it != buffers_.end()) {
    purge(it->second, clock_());
    for (const auto& entry : it->second) {
      if (!seen.contains(entry.digest)) {
        ++stats_.hits;
        return entry.caption;
      }
    }
  }
  ++stats_.misses;
  return std::nullopt;
}

bool MemeCache::put(const captiongen::GeneratedCaption& caption) {
  std::string digest = caption.digest();
  std::lock_guard lock(mutex_);
  auto& buffer = buffers_[caption.class_name];
  const auto now = clock_();
  purge(buffer, now);
  if (std::any_of(buffer.begin(), buffer.end(), [&](const Entry& e) { return e.digest == digest; })) return false;
  if (buffer.size() >= capacity_) buffer.pop_front();
  buffer.push_back({caption, std::move(digest), now + ttl_});
  ++stats_.inserted;
  return true;
}

std::size_t MemeCache::live_count(const std::string& class_name) {
  std::lock_guard lock(mutex_);
  auto it = buffers_.find(class_name);
  if (it == buffers_.end()) return 0;
  purge(it->second, clock_());
  return it->second.size();
}

CacheStats MemeCache::stats() const {
  std::lock_guard lock(mutex_);
  return stats_;
}

}  // namespace memeify::service
