// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/pipeline.hpp"

#include <sstream>
#include <tuple>

#include "dnsverdict/common.hpp"
#include "json.hpp"

namespace dnsverdict::pipeline {

namespace {

std::string snapshot_hash(const std::vector<DnsResponse>& responses) {
  std::ostringstream oss;
  corpus::write_snapshot(oss, responses);
  return sha256_hex(oss.str());
}

const blockpage::Fingerprint* find_fingerprint(const std::vector<blockpage::Fingerprint>& db,
                                               const std::optional<std::string>& id) {
  if (!id) return nullptr;
  for (const auto& f : db) {
    if (f.id == *id) return &f;
  }
  return nullptr;
}

}  // namespace

ClassifyOutput run_classify(const ClassifyInputs& inputs) {
  ClassifyOutput out;
  out.snapshot_id =
      inputs.snapshot_id.empty() ? snapshot_hash(inputs.responses) : inputs.snapshot_id;

  corpus::FilterResult filtered = corpus::filter_resolvers(inputs.responses);
  out.kept = std::move(filtered.kept);
  out.exclusions = std::move(filtered.excluded);

  out.pairs = corpus::dedup_pairs(out.kept);

  switch (inputs.mode) {
    case Mode::LIVE:
    case Mode::SIMULATED: {
      if (!inputs.transport)
        throw ContractViolation("run_classify: LIVE/SIMULATED mode needs a transport");
      out.fetches = probe::fetch_all(out.pairs, *inputs.transport, inputs.limits, inputs.now);
      break;
    }
    case Mode::REPLAY: {
      out.fetches.reserve(out.pairs.size());
      for (const auto& pair : out.pairs) {
        auto it = inputs.archive.find(pair);
        if (it != inputs.archive.end()) {
          out.fetches.push_back(it->second);
          continue;
        }
        probe::FetchResult miss;
        miss.pair = pair;
        miss.http_error = "not-in-archive";
        miss.https_error = "not-in-archive";
        miss.fetched_at = inputs.now;
        out.fetches.push_back(std::move(miss));
      }
      break;
    }
  }

  certval::CertPolicy policy;
  policy.root_store = inputs.roots;
  if (inputs.overrides.expiry_tolerance_secs)
    policy.expiry_tolerance_secs = *inputs.overrides.expiry_tolerance_secs;
  if (inputs.overrides.deprecated_root_tolerance)
    policy.deprecated_root_tolerance = *inputs.overrides.deprecated_root_tolerance;
  policy.reference_time = inputs.overrides.reference_time.value_or(0);

  corpus::ControlBuildResult control_build =
      corpus::build_control_set(out.kept, inputs.metadata, out.fetches, policy);
  out.control = std::move(control_build.control);
  out.uncovered_domains = std::move(control_build.uncovered_domains);

  // Pair assessment and classification. Identical (domain, chain, time)
  // combinations are assessed once.
  std::map<std::tuple<std::string, std::string, std::int64_t>, certval::CertAssessment> assessed;
  out.pair_verdicts.reserve(out.pairs.size());
  out.consistency.reserve(out.pairs.size());
  for (size_t k = 0; k < out.pairs.size(); ++k) {
    const ResolutionPair& pair = out.pairs[k];
    const probe::FetchResult& fetch = out.fetches[k];

    std::optional<certval::CertAssessment> assessment;
    std::vector<certval::ParsedCert> chain;
    if (fetch.chain) {
      certval::CertPolicy pair_policy = policy;
      if (pair_policy.reference_time == 0) pair_policy.reference_time = fetch.fetched_at;
      std::string chain_key;
      for (const auto& der : *fetch.chain) chain_key += sha256_hex(der);
      auto key = std::make_tuple(pair.domain, std::move(chain_key), pair_policy.reference_time);
      chain = certval::parse_chain(*fetch.chain);
      auto it = assessed.find(key);
      if (it != assessed.end()) {
        assessment = it->second;
      } else {
        assessment = certval::assess_parsed(chain, pair.domain, pair_policy);
        assessed.emplace(std::move(key), *assessment);
      }
    }

    verdict::Verdict v =
        verdict::classify_pair(pair, fetch, assessment, out.control, inputs.fingerprints);
    const certval::ParsedCert* leaf = chain.empty() ? nullptr : &chain[0];
    const blockpage::Fingerprint* fp =
        find_fingerprint(inputs.fingerprints, v.evidence.fingerprint_id);
    v.actor = verdict::attribute(v, leaf, fp, inputs.pools);
    out.pair_verdicts.push_back(std::move(v));

    out.consistency.push_back(baseline::consistency_check(pair, out.control, inputs.metadata));
  }

  // Response-level classification over the per-domain pair verdicts.
  std::map<std::string, std::map<IpAddr, verdict::Verdict>> by_domain;
  for (const auto& v : out.pair_verdicts) {
    if (v.ip) by_domain[v.domain][*v.ip] = v;
  }
  static const std::map<IpAddr, verdict::Verdict> kNoPairs;
  for (const auto& resp : out.kept) {
    if (resp.is_control) continue;
    auto it = by_domain.find(resp.domain);
    verdict::Verdict v =
        verdict::classify_response(resp, it == by_domain.end() ? kNoPairs : it->second, out.control);
    if (verdict::is_manipulated(v.label)) {
      if (!v.actor) v.actor = verdict::Actor{};
      if (!v.actor->country) v.actor->country = resp.resolver_country;
    }
    out.response_verdicts.push_back(std::move(v));
  }

  return out;
}

SummaryReport summarize(const ClassifyOutput& out) {
  SummaryReport report;
  report.responses_classified = out.response_verdicts.size();
  report.pairs_classified = out.pair_verdicts.size();
  for (const auto& e : out.exclusions) report.exclusions_by_reason[corpus::to_string(e.reason)] += 1;

  size_t vi = 0;
  for (const auto& resp : out.kept) {
    if (resp.is_control) continue;
    const verdict::Verdict& v = out.response_verdicts.at(vi++);
    report.by_label[verdict::to_string(v.label)] += 1;
    if (v.evidence.fingerprint_id) report.fingerprint_hits[*v.evidence.fingerprint_id] += 1;
    if (verdict::is_manipulated(v.label)) {
      report.manipulated_by_country[resp.resolver_country] += 1;
      report.manipulated_by_actor[v.actor && v.actor->name ? *v.actor->name : "UNKNOWN"] += 1;
    }
  }
  return report;
}

namespace {

nlohmann::json counts_to_json(const std::map<std::string, size_t>& counts) {
  nlohmann::json j = nlohmann::json::object();
  for (const auto& [k, v] : counts) j[k] = v;
  return j;
}

void counts_to_text(std::ostream& os, const std::string& heading,
                    const std::map<std::string, size_t>& counts) {
  os << heading << "\n";
  for (const auto& [k, v] : counts) os << "  " << k << ": " << v << "\n";
}

}  // namespace

std::string summary_to_json(const SummaryReport& report) {
  nlohmann::json j;
  j["responses_classified"] = report.responses_classified;
  j["pairs_classified"] = report.pairs_classified;
  j["by_label"] = counts_to_json(report.by_label);
  j["manipulated_by_country"] = counts_to_json(report.manipulated_by_country);
  j["manipulated_by_actor"] = counts_to_json(report.manipulated_by_actor);
  j["fingerprint_hits"] = counts_to_json(report.fingerprint_hits);
  j["exclusions_by_reason"] = counts_to_json(report.exclusions_by_reason);
  return j.dump(2) + "\n";
}

std::string summary_to_text(const SummaryReport& report) {
  std::ostringstream os;
  os << "responses classified: " << report.responses_classified << "\n";
  os << "pairs classified: " << report.pairs_classified << "\n";
  counts_to_text(os, "verdicts by label:", report.by_label);
  counts_to_text(os, "manipulated by country:", report.manipulated_by_country);
  counts_to_text(os, "manipulated by actor:", report.manipulated_by_actor);
  counts_to_text(os, "fingerprint hits:", report.fingerprint_hits);
  counts_to_text(os, "exclusions by reason:", report.exclusions_by_reason);
  return os.str();
}

}  // namespace dnsverdict::pipeline
