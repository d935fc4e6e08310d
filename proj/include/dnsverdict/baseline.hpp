// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <map>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dnsverdict/corpus.hpp"
#include "dnsverdict/record.hpp"
#include "dnsverdict/verdict.hpp"

namespace dnsverdict::baseline {

// The prior-generation method: a resolution is manipulated iff nothing about
// it matches the control data.
struct ConsistencyVerdict {
  ResolutionPair pair;
  std::set<verdict::ControlMatch> matched;
  bool flagged_manipulated = false;  // always equals matched.empty()

  bool operator==(const ConsistencyVerdict&) const = default;
};

ConsistencyVerdict consistency_check(const ResolutionPair& pair, const corpus::ControlSet& control,
                                     const IpMetadataTable& metadata);

struct ThresholdConfig {
  int theta = 3;
};

struct DomainResolutions {
  std::set<IpAddr> test_ips;
  size_t control_as_count = 0;
};

// Flags a domain when one of its test IPs also serves another input domain
// and the domain's control answers span more than theta ASes.
std::set<std::string> as_threshold(const std::map<std::string, DomainResolutions>& domain_resolutions,
                                   const ThresholdConfig& config);

struct ComparisonReport {
  size_t total = 0;          // pairs compared
  size_t agreement_count = 0;
  size_t false_positive_count = 0;  // flagged but the certificate method proved it fine
  size_t false_negative_count = 0;  // unflagged but manipulated
  size_t unconfirmed_count = 0;     // no definitive verdict to compare against
  size_t flagged_count = 0;         // flagged within the definitive population
  size_t manipulated_count = 0;     // MANIPULATED_* within the definitive population
  double fp_rate = 0.0;             // FP / flagged
  double fn_rate = 0.0;             // FN / manipulated
  std::map<verdict::ControlMatch, size_t> fn_heuristic_breakdown;
};

// Both lists must cover identical (domain, ip) pairs; verdicts are
// pair-level. Pairs without a definitive outcome (HTTP-only, connection
// error, pool-matched malformed domains) count as unconfirmed.
ComparisonReport compare(std::span<const ConsistencyVerdict> consistency,
                         std::span<const verdict::Verdict> verdicts);

}  // namespace dnsverdict::baseline
