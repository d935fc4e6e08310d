// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/ip.hpp"

#include <arpa/inet.h>

#include <cstring>

#include "dnsverdict/common.hpp"

namespace dnsverdict {

std::optional<IpAddr> IpAddr::parse(std::string_view text) {
  if (text.empty() || text.size() >= INET6_ADDRSTRLEN) return std::nullopt;
  char buf[INET6_ADDRSTRLEN];
  std::memcpy(buf, text.data(), text.size());
  buf[text.size()] = '\0';

  IpAddr out;
  in_addr v4{};
  if (inet_pton(AF_INET, buf, &v4) == 1) {
    out.family_ = 4;
    std::memcpy(out.bytes_.data(), &v4, 4);
    return out;
  }
  in6_addr v6{};
  if (inet_pton(AF_INET6, buf, &v6) == 1) {
    out.family_ = 6;
    std::memcpy(out.bytes_.data(), &v6, 16);
    return out;
  }
  return std::nullopt;
}

IpAddr IpAddr::must_parse(std::string_view text) {
  auto ip = parse(text);
  if (!ip) throw SchemaError("not an IP address: '" + std::string(text) + "'");
  return *ip;
}

std::string IpAddr::to_string() const {
  char buf[INET6_ADDRSTRLEN] = {0};
  if (family_ == 4) {
    in_addr v4{};
    std::memcpy(&v4, bytes_.data(), 4);
    inet_ntop(AF_INET, &v4, buf, sizeof(buf));
  } else if (family_ == 6) {
    in6_addr v6{};
    std::memcpy(&v6, bytes_.data(), 16);
    inet_ntop(AF_INET6, &v6, buf, sizeof(buf));
  } else {
    return "<unset>";
  }
  return buf;
}

bool IpAddr::is_private() const {
  if (family_ == 4) {
    const std::uint8_t a = bytes_[0], b = bytes_[1];
    if (a == 10) return true;                            // 10/8
    if (a == 172 && b >= 16 && b <= 31) return true;     // 172.16/12
    if (a == 192 && b == 168) return true;               // 192.168/16
    if (a == 127) return true;                           // loopback
    if (a == 169 && b == 254) return true;               // link-local
    if (a == 100 && b >= 64 && b <= 127) return true;    // CGNAT 100.64/10
    if (a == 0) return true;                             // 0/8
    return false;
  }
  if (family_ == 6) {
    static const std::array<std::uint8_t, 16> loopback = {0, 0, 0, 0, 0, 0, 0, 0,
                                                          0, 0, 0, 0, 0, 0, 0, 1};
    if (bytes_ == loopback) return true;
    if ((bytes_[0] & 0xfe) == 0xfc) return true;                       // fc00::/7
    if (bytes_[0] == 0xfe && (bytes_[1] & 0xc0) == 0x80) return true;  // fe80::/10
    return false;
  }
  return false;
}

}  // namespace dnsverdict
