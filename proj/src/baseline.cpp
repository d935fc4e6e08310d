// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/baseline.hpp"

#include <algorithm>
#include <sstream>

#include "dnsverdict/common.hpp"

namespace dnsverdict::baseline {

using verdict::ControlMatch;
using verdict::Label;

ConsistencyVerdict consistency_check(const ResolutionPair& pair, const corpus::ControlSet& control,
                                     const IpMetadataTable& metadata) {
  ConsistencyVerdict out;
  out.pair = pair;

  auto find_set = [&](const std::map<std::string, std::set<std::string>>& m)
      -> const std::set<std::string>* {
    auto it = m.find(pair.domain);
    return it == m.end() ? nullptr : &it->second;
  };

  auto ips_it = control.control_ips.find(pair.domain);
  if (ips_it != control.control_ips.end() && ips_it->second.count(pair.ip) > 0) {
    out.matched.insert(ControlMatch::IP);
  }

  const IpMetadata* row = metadata.lookup(pair.ip);
  auto match_meta = [&](const std::optional<std::string>& field,
                        const std::map<std::string, std::set<std::string>>& control_field,
                        ControlMatch kind) {
    if (!field) return;  // missing metadata never matches
    const auto* set = find_set(control_field);
    if (set && set->count(*field) > 0) out.matched.insert(kind);
  };
  if (row) {
    match_meta(row->http_hash, control.control_http_hashes, ControlMatch::HTTP_HASH);
    match_meta(row->cert_hash, control.control_cert_hashes, ControlMatch::CERT_HASH);
    match_meta(row->as_name, control.control_as_names, ControlMatch::AS_NAME);
    match_meta(row->cdn, control.control_cdns, ControlMatch::CDN);
    if (row->asn) {
      auto it = control.control_asns.find(pair.domain);
      if (it != control.control_asns.end() && it->second.count(*row->asn) > 0) {
        out.matched.insert(ControlMatch::ASN);
      }
    }
  }

  out.flagged_manipulated = out.matched.empty();
  return out;
}

std::set<std::string> as_threshold(const std::map<std::string, DomainResolutions>& domain_resolutions,
                                   const ThresholdConfig& config) {
  if (config.theta < 1) throw ContractViolation("as_threshold: theta must be >= 1");

  // Count how many input domains each test IP serves.
  std::map<IpAddr, size_t> ip_domains;
  for (const auto& [domain, res] : domain_resolutions) {
    (void)domain;
    for (const auto& ip : res.test_ips) ip_domains[ip] += 1;
  }

  std::set<std::string> flagged;
  for (const auto& [domain, res] : domain_resolutions) {
    bool shared = std::any_of(res.test_ips.begin(), res.test_ips.end(),
                              [&](const IpAddr& ip) { return ip_domains[ip] >= 2; });
    if (shared && res.control_as_count > static_cast<size_t>(config.theta)) flagged.insert(domain);
  }
  return flagged;
}

ComparisonReport compare(std::span<const ConsistencyVerdict> consistency,
                         std::span<const verdict::Verdict> verdicts) {
  std::map<ResolutionPair, const ConsistencyVerdict*> by_pair;
  for (const auto& cv : consistency) by_pair[cv.pair] = &cv;

  std::map<ResolutionPair, const verdict::Verdict*> verdict_by_pair;
  for (const auto& v : verdicts) {
    if (!v.ip) throw ContractViolation("compare: verdict without an ip for " + v.domain);
    verdict_by_pair[ResolutionPair{v.domain, *v.ip}] = &v;
  }

  // The two sides must describe the same population.
  std::vector<std::string> missing;
  for (const auto& [pair, cv] : by_pair) {
    (void)cv;
    if (verdict_by_pair.find(pair) == verdict_by_pair.end()) {
      missing.push_back(pair.domain + "/" + pair.ip.to_string() + " (no verdict)");
    }
  }
  for (const auto& [pair, v] : verdict_by_pair) {
    (void)v;
    if (by_pair.find(pair) == by_pair.end()) {
      missing.push_back(pair.domain + "/" + pair.ip.to_string() + " (no consistency check)");
    }
  }
  if (!missing.empty()) {
    std::ostringstream oss;
    oss << "compare: mismatched pair coverage:";
    for (const auto& m : missing) oss << " " << m << ";";
    throw ContractViolation(oss.str());
  }

  ComparisonReport report;
  report.total = by_pair.size();

  for (const auto& [pair, cv] : by_pair) {
    const verdict::Verdict& v = *verdict_by_pair.at(pair);
    bool flagged = cv->flagged_manipulated;

    switch (v.label) {
      case Label::UNMANIPULATED_VALID_CERT:
        if (flagged) {
          report.false_positive_count += 1;
          report.flagged_count += 1;
        } else {
          report.agreement_count += 1;
        }
        break;
      case Label::MANIPULATED_PRIVATE_IP:
      case Label::MANIPULATED_BLOCKPAGE:
      case Label::MANIPULATED_INVALID_CERT:
      case Label::MANIPULATED_RCODE:
        report.manipulated_count += 1;
        if (flagged) {
          report.flagged_count += 1;
          report.agreement_count += 1;
        } else {
          report.false_negative_count += 1;
          for (ControlMatch m : cv->matched) report.fn_heuristic_breakdown[m] += 1;
        }
        break;
      case Label::UNMANIPULATED_CONTROL_IP:
        // By construction the heuristic matched on IP; record agreement.
        report.agreement_count += 1;
        break;
      default:
        // Malformed-domain pool hits and UNKNOWN_* carry no definitive truth.
        report.unconfirmed_count += 1;
        break;
    }
  }

  if (report.flagged_count > 0) {
    report.fp_rate =
        static_cast<double>(report.false_positive_count) / static_cast<double>(report.flagged_count);
  }
  if (report.manipulated_count > 0) {
    report.fn_rate = static_cast<double>(report.false_negative_count) /
                     static_cast<double>(report.manipulated_count);
  }
  return report;
}

}  // namespace dnsverdict::baseline
