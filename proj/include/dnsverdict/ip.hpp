// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <array>
#include <compare>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>

namespace dnsverdict {

// An IPv4 or IPv6 address, value-comparable so it can key maps and sets.
class IpAddr {
 public:
  IpAddr() = default;

  static std::optional<IpAddr> parse(std::string_view text);

  // Like parse, but throws SchemaError naming the offending text.
  static IpAddr must_parse(std::string_view text);

  std::string to_string() const;

  bool is_v4() const { return family_ == 4; }
  bool is_v6() const { return family_ == 6; }

  // True for addresses no public resolver should hand out: RFC 1918,
  // loopback, link-local, CGNAT 100.64/10, 0.0.0.0/8; for v6: ::1,
  // fc00::/7, fe80::/10.
  bool is_private() const;

  auto operator<=>(const IpAddr&) const = default;

 private:
  std::uint8_t family_ = 0;                 // 4 or 6
  std::array<std::uint8_t, 16> bytes_{};    // v4 uses first 4 bytes
};

}  // namespace dnsverdict
