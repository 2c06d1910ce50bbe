#include "memeify/session.hpp"

#include <random>

#include "memeify/random.hpp"

namespace memeify::service {

SessionStore::SessionStore(std::chrono::milliseconds idle_timeout, ClockFn clock)
    : idle_timeout_(idle_timeout), clock_(std::move(clock)) {
  std::random_device device;
  token_state_ = (static_cast<std::uint64_t>(device()) << 32) ^ device();
}

std::string SessionStore::new_token() {
  std::random_device device;
  token_state_ ^= (static_cast<std::uint64_t>(device()) << 32) ^ device();
  char a[17], b[17];
  std::string token(to_hex(splitmix64(token_state_), a));
  token += to_hex(splitmix64(token_state_), b);
  return token;
}

std::pair<std::shared_ptr<SessionState>, bool> SessionStore::acquire(const std::optional<std::string>& token) {
  const auto now = clock_();
  std::lock_guard lock(mutex_);
  if (token) {
    auto it = sessions_.find(*token);
    if (it != sessions_.end()) {
      if (now - it->second->last_seen <= idle_timeout_) {
        it->second->last_seen = now;
        return {it->second, false};
      }
      sessions_.erase(it);
    }
  }
  auto session = std::make_shared<SessionState>();
  do {
    session->id = new_token();
  } while (sessions_.contains(session->id));
  session->created_at = session->last_seen = now;
  sessions_.emplace(session->id, session);
  return {session, true};
}

std::size_t SessionStore::evict_idle() {
  const auto now = clock_();
  std::lock_guard lock(mutex_);
  return std::erase_if(sessions_, [&](const auto& entry) { return now - entry.second->last_seen > idle_timeout_; });
}

std::size_t SessionStore::size() const {
  std::lock_guard lock(mutex_);
  return sessions_.size();
}

}  // namespace memeify::service
