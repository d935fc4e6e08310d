// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <map>
#include <mutex>

#include "dnsverdict/ip.hpp"

namespace dnsverdict {

// Injected clock so throttling is testable without real sleeps.
class Clock {
 public:
  virtual ~Clock() = default;
  virtual std::int64_t now_micros() = 0;
  virtual void sleep_micros(std::int64_t micros) = 0;
  virtual std::int64_t now_unix() = 0;
};

class SystemClock : public Clock {
 public:
  std::int64_t now_micros() override;
  void sleep_micros(std::int64_t micros) override;
  std::int64_t now_unix() override;
};

class FakeClock : public Clock {
 public:
  explicit FakeClock(std::int64_t wall_base_unix = 0) : wall_base_(wall_base_unix) {}
  std::int64_t now_micros() override { return micros_; }
  void sleep_micros(std::int64_t micros) override {
    if (micros > 0) micros_ += micros;
  }
  std::int64_t now_unix() override { return wall_base_ + micros_ / 1000000; }

 private:
  std::int64_t micros_ = 0;
  std::int64_t wall_base_;
};

// Per-IP token schedule: the n-th request against one IP is delayed to
// n/rate seconds after the first. acquire() is safe from multiple workers.
class RateLimiter {
 public:
  RateLimiter(Clock& clock, double per_ip_per_sec) : clock_(clock), rate_(per_ip_per_sec) {}

  void acquire(const IpAddr& ip);

 private:
  Clock& clock_;
  double rate_;
  std::mutex mu_;
  std::map<IpAddr, std::int64_t> next_slot_micros_;
};

}  // namespace dnsverdict
