// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "dnsverdict/baseline.hpp"
#include "dnsverdict/blockpage.hpp"
#include "dnsverdict/certval.hpp"
#include "dnsverdict/corpus.hpp"
#include "dnsverdict/probe.hpp"
#include "dnsverdict/record.hpp"
#include "dnsverdict/verdict.hpp"

namespace dnsverdict::pipeline {

enum class Mode { LIVE, REPLAY, SIMULATED };

struct PolicyOverrides {
  std::optional<std::int64_t> expiry_tolerance_secs;
  std::optional<bool> deprecated_root_tolerance;
  // Pins one assessment time for every chain; default is each fetch's own
  // fetched_at.
  std::optional<std::int64_t> reference_time;
};

struct ClassifyInputs {
  std::vector<DnsResponse> responses;
  IpMetadataTable metadata;
  std::vector<blockpage::Fingerprint> fingerprints;
  std::vector<certval::ParsedCert> roots;
  std::vector<verdict::ActorPool> pools;
  probe::Transport* transport = nullptr;  // required for LIVE and SIMULATED
  std::map<ResolutionPair, probe::FetchResult> archive;  // required for REPLAY
  Mode mode = Mode::REPLAY;
  probe::FetchLimits limits;
  PolicyOverrides overrides;
  std::string snapshot_id;  // derived from the snapshot bytes when empty
  std::int64_t now = 0;     // fetch timestamp in LIVE/SIMULATED
};

struct ClassifyOutput {
  std::string snapshot_id;
  std::vector<corpus::ExclusionRecord> exclusions;
  std::vector<DnsResponse> kept;              // surviving responses, input order
  std::vector<ResolutionPair> pairs;          // deduped fetch set, first-seen order
  std::vector<probe::FetchResult> fetches;    // parallel to pairs
  std::vector<verdict::Verdict> pair_verdicts;       // parallel to pairs
  std::vector<baseline::ConsistencyVerdict> consistency;  // parallel to pairs
  std::vector<verdict::Verdict> response_verdicts;   // kept test responses, in order
  corpus::ControlSet control;
  std::vector<std::string> uncovered_domains;
};

// Stages: filter noisy resolvers, dedup pairs, fetch (live transport,
// scripted transport, or archive replay), build the control set, assess
// chains, classify pairs, attribute actors, classify responses.
ClassifyOutput run_classify(const ClassifyInputs& inputs);

struct SummaryReport {
  size_t responses_classified = 0;
  size_t pairs_classified = 0;
  std::map<std::string, size_t> by_label;              // response verdicts
  std::map<std::string, size_t> manipulated_by_country;
  std::map<std::string, size_t> manipulated_by_actor;  // actor name, or UNKNOWN
  std::map<std::string, size_t> fingerprint_hits;      // response verdicts citing the id
  std::map<std::string, size_t> exclusions_by_reason;
};

SummaryReport summarize(const ClassifyOutput& out);
std::string summary_to_json(const SummaryReport& report);
std::string summary_to_text(const SummaryReport& report);

}  // namespace dnsverdict::pipeline
