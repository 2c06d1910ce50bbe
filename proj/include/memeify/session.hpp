#pragma once

#include <chrono>
#include <cstddef>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <set>
#include <string>
#include <utility>

#include "memeify/cache.hpp"

namespace memeify::service {

inline constexpr const char* kSessionCookie = "memeify_session";

/// Per-user history. Lock `mutex` while reading or updating `seen`; the
/// service holds it for the whole pick-and-mark step of a request.
struct SessionState {
  std::string id;
  std::map<std::string, std::set<std::string>> seen;  // class -> caption digests served
  Clock::time_point created_at;
  Clock::time_point last_seen;
  std::mutex mutex;
};

/// Sessions idle longer than the timeout are evicted, which forgets their
/// history. Internally synchronized.
class SessionStore {
public:
  explicit SessionStore(std::chrono::milliseconds idle_timeout = std::chrono::minutes(30),
                        ClockFn clock = Clock::now);

  /// The live session for `token`, or a fresh one when the token is
  /// absent, unknown or expired. `second` is true for a fresh session.
  std::pair<std::shared_ptr<SessionState>, bool> acquire(const std::optional<std::string>& token);

  /// Drops idle sessions; returns how many were removed.
  std::size_t evict_idle();

  std::size_t size() const;

private:
  std::string new_token();

  std::chrono::milliseconds idle_timeout_;
  ClockFn clock_;
  mutable std::mutex mutex_;
  std::map<std::string, std::shared_ptr<SessionState>> sessions_;
  std::uint64_t token_state_;
};

}  // namespace memeify::service
