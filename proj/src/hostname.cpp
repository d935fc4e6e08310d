// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include <string>
#include <string_view>
#include <vector>

#include "dnsverdict/certval.hpp"
#include "dnsverdict/common.hpp"

namespace dnsverdict::certval {

namespace {

bool all_labels_nonempty(const std::vector<std::string>& labels) {
  for (const auto& l : labels)
    if (l.empty()) return false;
  return true;
}

}  // namespace

bool hostname_matches_pattern(std::string_view pattern, std::string_view domain) {
  std::string p = ascii_lower(trim(pattern));
  std::string d = ascii_lower(trim(domain));
  if (p.empty() || d.empty()) return false;

  size_t star = p.find('*');
  if (star == std::string::npos) return p == d;

  // Wildcard accepted only as the complete leftmost label.
  if (star != 0 || p.size() < 2 || p[1] != '.') return false;
  if (p.find('*', 1) != std::string::npos) return false;

  std::vector<std::string> p_labels = split(p, '.');
  std::vector<std::string> d_labels = split(d, '.');
  // "*.tld" is too broad; the pattern needs two labels after the wildcard.
  if (p_labels.size() < 3) return false;
  if (!all_labels_nonempty(d_labels)) return false;
  // The wildcard consumes exactly one label.
  if (d_labels.size() != p_labels.size()) return false;
  for (size_t i = 1; i < p_labels.size(); ++i) {
    if (p_labels[i].empty() || p_labels[i] != d_labels[i]) return false;
  }
  return true;
}

bool match_hostname(const ParsedCert& leaf, std::string_view domain) {
  if (!leaf.sans.empty()) {
    for (const auto& san : leaf.sans) {
      if (hostname_matches_pattern(san, domain)) return true;
    }
    return false;
  }
  if (leaf.subject_cn) return hostname_matches_pattern(*leaf.subject_cn, domain);
  return false;
}

}  // namespace dnsverdict::certval
