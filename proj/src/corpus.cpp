// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/corpus.hpp"

#include <algorithm>
#include <istream>
#include <ostream>
#include <tuple>

#include "dnsverdict/common.hpp"
#include "json.hpp"

namespace dnsverdict::corpus {

namespace {

std::string normalize_domain(std::string domain) {
  domain = ascii_lower(domain);
  while (!domain.empty() && domain.back() == '.') domain.pop_back();
  return domain;
}

std::optional<DnsResponse> response_from_line(const std::string& line) {
  nlohmann::json j = nlohmann::json::parse(line, nullptr, false);
  if (j.is_discarded() || !j.is_object()) return std::nullopt;

  DnsResponse r;
  try {
    auto ip = IpAddr::parse(j.at("resolver_ip").get<std::string>());
    if (!ip) return std::nullopt;
    r.resolver_ip = *ip;
    r.resolver_country = j.at("resolver_country").get<std::string>();
    r.domain = normalize_domain(j.at("domain").get<std::string>());
    r.rcode = j.at("rcode").get<int>();
    for (const auto& a : j.at("answers")) {
      auto answer = IpAddr::parse(a.get<std::string>());
      if (!answer) return std::nullopt;
      if (std::find(r.answers.begin(), r.answers.end(), *answer) == r.answers.end())
        r.answers.push_back(*answer);
    }
    if (!j.at("error").is_null()) r.error = j["error"].get<std::string>();
    r.timestamp = j.at("timestamp").get<std::int64_t>();
    r.is_control = j.at("is_control").get<bool>();
  } catch (const nlohmann::json::exception&) {
    return std::nullopt;
  }

  if (r.domain.empty() || r.domain.find('.') == std::string::npos) return std::nullopt;
  if (r.rcode < -1 || r.rcode > 23) return std::nullopt;
  if (r.rcode == -1 && (!r.answers.empty() || !r.error)) return std::nullopt;
  if (r.resolver_country.size() != 2) return std::nullopt;
  return r;
}

}  // namespace

std::vector<DnsResponse> parse_snapshot(std::istream& in, ParseStats* stats) {
  std::vector<DnsResponse> out;
  ParseStats local;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    ++local.total_lines;
    auto r = response_from_line(line);
    if (r) {
      ++local.parsed;
      out.push_back(std::move(*r));
    } else {
      ++local.malformed;
      if (local.first_malformed_line == 0) local.first_malformed_line = lineno;
    }
  }
  if (in.bad()) throw std::runtime_error("snapshot stream read failure");
  if (local.total_lines > 0 && local.malformed * 10 > local.total_lines) {
    throw SchemaError("snapshot has >10% malformed lines; first bad line " +
                      std::to_string(local.first_malformed_line));
  }
  if (stats) *stats = local;
  return out;
}

void write_snapshot(std::ostream& out, std::span<const DnsResponse> responses) {
  for (const auto& r : responses) {
    nlohmann::json j;
    j["resolver_ip"] = r.resolver_ip.to_string();
    j["resolver_country"] = r.resolver_country;
    j["domain"] = r.domain;
    j["rcode"] = r.rcode;
    nlohmann::json answers = nlohmann::json::array();
    for (const auto& a : r.answers) answers.push_back(a.to_string());
    j["answers"] = answers;
    j["error"] = r.error ? nlohmann::json(*r.error) : nlohmann::json(nullptr);
    j["timestamp"] = r.timestamp;
    j["is_control"] = r.is_control;
    out << j.dump() << '\n';
  }
}

FilterResult filter_resolvers(const std::vector<DnsResponse>& responses) {
  // Group test responses per resolver, keeping first-appearance order.
  std::vector<IpAddr> order;
  std::map<IpAddr, std::vector<const DnsResponse*>> by_resolver;
  std::set<IpAddr> control_resolvers;
  for (const auto& r : responses) {
    if (r.is_control) {
      control_resolvers.insert(r.resolver_ip);
      continue;
    }
    auto [it, inserted] = by_resolver.try_emplace(r.resolver_ip);
    if (inserted) order.push_back(r.resolver_ip);
    it->second.push_back(&r);
  }

  auto rule_for = [](const std::vector<const DnsResponse*>& rs) -> std::optional<ExclusionReason> {
    bool all_timeout = true, all_nonzero = true, all_empty = true;
    bool all_private = true, any_answer = false;
    for (const auto* r : rs) {
      if (r->rcode != -1) all_timeout = false;
      if (r->rcode == 0) all_nonzero = false;
      if (!r->answers.empty()) all_empty = false;
      for (const auto& a : r->answers) {
        any_answer = true;
        if (!a.is_private()) all_private = false;
      }
    }
    if (all_timeout) return ExclusionReason::ALL_TIMEOUT;
    if (all_nonzero) return ExclusionReason::ALL_NONZERO_RCODE;
    if (all_empty) return ExclusionReason::ALL_EMPTY;
    if (any_answer && all_private) return ExclusionReason::ALL_PRIVATE;

    // Identical non-empty answer set for >= 2 distinct domains.
    std::set<std::string> domains;
    std::optional<std::set<IpAddr>> common;
    bool same_set = true;
    for (const auto* r : rs) {
      domains.insert(r->domain);
      std::set<IpAddr> answers(r->answers.begin(), r->answers.end());
      if (!common)
        common = std::move(answers);
      else if (*common != answers)
        same_set = false;
    }
    if (same_set && domains.size() >= 2 && common && !common->empty())
      return ExclusionReason::SAME_IP_SET;
    return std::nullopt;
  };

  FilterResult out;
  std::set<IpAddr> excluded;
  for (const auto& ip : order) {
    if (control_resolvers.contains(ip)) continue;
    if (auto reason = rule_for(by_resolver[ip])) {
      out.excluded.push_back({ip, *reason});
      excluded.insert(ip);
    }
  }
  out.kept.reserve(responses.size());
  for (const auto& r : responses) {
    if (!excluded.contains(r.resolver_ip)) out.kept.push_back(r);
  }
  return out;
}

std::vector<ResolutionPair> dedup_pairs(const std::vector<DnsResponse>& responses) {
  std::vector<ResolutionPair> out;
  std::set<ResolutionPair> seen;
  for (const auto& r : responses) {
    for (const auto& a : r.answers) {
      ResolutionPair p{r.domain, a};
      if (seen.insert(p).second) out.push_back(std::move(p));
    }
  }
  return out;
}

ControlBuildResult build_control_set(const std::vector<DnsResponse>& responses,
                                     const IpMetadataTable& metadata,
                                     const std::vector<probe::FetchResult>& control_fetches,
                                     const certval::CertPolicy& policy) {
  ControlBuildResult out;
  ControlSet& cs = out.control;

  std::set<std::string> all_domains;
  for (const auto& r : responses) {
    all_domains.insert(r.domain);
    if (!r.is_control) continue;
    // Ensure every control-covered domain has all its keys, even when the
    // control answer list is empty.
    cs.control_ips.try_emplace(r.domain);
    cs.control_http_hashes.try_emplace(r.domain);
    cs.control_cert_hashes.try_emplace(r.domain);
    cs.control_asns.try_emplace(r.domain);
    cs.control_as_names.try_emplace(r.domain);
    cs.control_cdns.try_emplace(r.domain);
    cs.invalid_control_certs.try_emplace(r.domain);
    for (const auto& a : r.answers) {
      cs.control_ips[r.domain].insert(a);
      if (const IpMetadata* meta = metadata.lookup(a)) {
        if (meta->asn) cs.control_asns[r.domain].insert(*meta->asn);
        if (meta->as_name) cs.control_as_names[r.domain].insert(*meta->as_name);
        if (meta->cdn) cs.control_cdns[r.domain].insert(*meta->cdn);
        if (meta->http_hash) cs.control_http_hashes[r.domain].insert(*meta->http_hash);
        if (meta->cert_hash) cs.control_cert_hashes[r.domain].insert(*meta->cert_hash);
      }
    }
  }

  for (const auto& d : all_domains) {
    if (!cs.covers(d)) out.uncovered_domains.push_back(d);
  }

  // Identical (domain, chain, reference time) fetches produce the same
  // signature, so assess each combination once.
  std::set<std::tuple<std::string, std::string, std::int64_t>> assessed;
  for (const auto& f : control_fetches) {
    auto it = cs.control_ips.find(f.pair.domain);
    if (it == cs.control_ips.end() || !it->second.contains(f.pair.ip)) continue;
    if (!f.chain) continue;
    certval::CertPolicy fetch_policy = policy;
    if (fetch_policy.reference_time == 0) fetch_policy.reference_time = f.fetched_at;
    std::string chain_key;
    for (const auto& der : *f.chain) chain_key += sha256_hex(der);
    if (!assessed.insert({f.pair.domain, std::move(chain_key), fetch_policy.reference_time}).second)
      continue;
    std::vector<certval::ParsedCert> chain = certval::parse_chain(*f.chain);
    certval::CertAssessment a = certval::assess_parsed(chain, f.pair.domain, fetch_policy);
    if (a.cert_case == certval::CertCase::VALID) continue;
    if (chain.empty()) continue;
    cs.invalid_control_certs[f.pair.domain].insert(certval::signature_of(a, chain[0]));
  }
  return out;
}

std::string to_string(ExclusionReason r) {
  switch (r) {
    case ExclusionReason::ALL_TIMEOUT: return "ALL_TIMEOUT";
    case ExclusionReason::ALL_NONZERO_RCODE: return "ALL_NONZERO_RCODE";
    case ExclusionReason::ALL_EMPTY: return "ALL_EMPTY";
    case ExclusionReason::ALL_PRIVATE: return "ALL_PRIVATE";
    case ExclusionReason::SAME_IP_SET: return "SAME_IP_SET";
  }
  return "?";
}

std::optional<ExclusionReason> exclusion_reason_from_string(std::string_view s) {
  for (ExclusionReason r : {ExclusionReason::ALL_TIMEOUT, ExclusionReason::ALL_NONZERO_RCODE,
                            ExclusionReason::ALL_EMPTY, ExclusionReason::ALL_PRIVATE,
                            ExclusionReason::SAME_IP_SET})
    if (to_string(r) == s) return r;
  return std::nullopt;
}

}  // namespace dnsverdict::corpus
