// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include "dnsverdict/probe.hpp"
#include "dnsverdict/ratelimit.hpp"

namespace dnsverdict::probe {

// Real sockets. Stable error vocabulary so archives replay identically:
//   private-address-skipped, timeout, connection-refused, connection-reset,
//   io-error, tls-handshake-failed, malformed-response.
class LiveTransport : public Transport {
 public:
  // per_ip_rate <= 0 disables throttling.
  LiveTransport(Clock& clock, double per_ip_rate);

  HttpOutcome get_http(const ProbeRequest& req) override;
  TlsOutcome get_https(const ProbeRequest& req) override;

 private:
  Clock& clock_;
  RateLimiter limiter_;
};

}  // namespace dnsverdict::probe
