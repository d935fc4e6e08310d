// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/ratelimit.hpp"

#include <chrono>
#include <thread>

namespace dnsverdict {

std::int64_t SystemClock::now_micros() {
  return std::chrono::duration_cast<std::chrono::microseconds>(
             std::chrono::steady_clock::now().time_since_epoch())
      .count();
}

void SystemClock::sleep_micros(std::int64_t micros) {
  if (micros > 0) std::this_thread::sleep_for(std::chrono::microseconds(micros));
}

std::int64_t SystemClock::now_unix() {
  return std::chrono::duration_cast<std::chrono::seconds>(
             std::chrono::system_clock::now().time_since_epoch())
      .count();
}

void RateLimiter::acquire(const IpAddr& ip) {
  if (rate_ <= 0) return;  // unlimited
  const auto interval = static_cast<std::int64_t>(1000000.0 / rate_);
  std::int64_t wait;
  {
    std::lock_guard<std::mutex> lock(mu_);
    const std::int64_t now = clock_.now_micros();
    auto it = next_slot_micros_.find(ip);
    const std::int64_t slot = it == next_slot_micros_.end() ? now : std::max(it->second, now);
    next_slot_micros_[ip] = slot + interval;
    wait = slot - now;
  }
  clock_.sleep_micros(wait);
}

}  // namespace dnsverdict
