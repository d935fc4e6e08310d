// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <cstdint>
#include <iosfwd>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "dnsverdict/blockpage.hpp"
#include "dnsverdict/certval.hpp"
#include "dnsverdict/corpus.hpp"
#include "dnsverdict/probe.hpp"
#include "dnsverdict/record.hpp"
#include "dnsverdict/verdict.hpp"

namespace dnsverdict::simnet {

// Resolver behaviors. Manipulating behaviors act only on the blocked domain
// subset and answer honestly elsewhere; the two CLEAN variants and
// MISCONFIGURED_DOMAIN never manipulate anything.
enum class Behavior {
  CLEAN,
  LOCALIZED_CLEAN,          // legit regional IPs in ASes the control never sees
  SELF_SIGNED_BLOCKPAGE,    // untrusted cert for a blockpage hostname + fingerprinted body
  TRUSTED_ISP_BLOCKPAGE,    // trusted cert for the blockpage hostname itself
  BIG_CDN_INJECTION,        // trusted cert for an unrelated CDN hostname + 403
  NXDOMAIN_CENSOR,          // rcode 3 for blocked domains
  CAPTIVE_PORTAL,           // one portal IP pair for every domain
  PRIVATE_IP_CENSOR,        // private-space answers for blocked domains
  MISCONFIGURED_DOMAIN,     // resolves misconfigured domains to their non-control replica
  GEOBLOCKING_CDN,          // valid cert, 403 body, IP inside the home provider
  CDN_HOSTED_BLOCKPAGE,     // blockpage IP inside the control's own CDN provider
};

inline constexpr Behavior kAllBehaviors[] = {
    Behavior::CLEAN,           Behavior::LOCALIZED_CLEAN,    Behavior::SELF_SIGNED_BLOCKPAGE,
    Behavior::TRUSTED_ISP_BLOCKPAGE, Behavior::BIG_CDN_INJECTION, Behavior::NXDOMAIN_CENSOR,
    Behavior::CAPTIVE_PORTAL,  Behavior::PRIVATE_IP_CENSOR,  Behavior::MISCONFIGURED_DOMAIN,
    Behavior::GEOBLOCKING_CDN, Behavior::CDN_HOSTED_BLOCKPAGE,
};

struct ScenarioSpec {
  std::uint64_t seed = 1;
  int domains = 100;
  int resolvers = 50;  // test resolvers; controls are extra
  int control_resolvers = 3;
  std::vector<std::pair<Behavior, double>> behaviors = {{Behavior::CLEAN, 1.0}};
  double mixed_fraction = 0.0;  // chance a manipulated answer list also carries one honest IP
  int blocked_domains = 47;
  int misconfigured_domains = 3;
  std::int64_t time_base = 1668470400;

  bool operator==(const ScenarioSpec&) const = default;
};

// Throws SchemaError when counts or weights are unusable.
void validate(const ScenarioSpec& spec);

// key=value spec file; behaviors=NAME:weight,NAME:weight. Validates.
ScenarioSpec parse_spec(std::istream& in);
void write_spec(std::ostream& out, const ScenarioSpec& spec);

struct TruthEntry {
  // Exactly one of label/excluded is set.
  std::optional<verdict::Label> label;
  std::optional<corpus::ExclusionReason> excluded;
  std::optional<verdict::Actor> actor;

  bool operator==(const TruthEntry&) const = default;
};

struct GroundTruth {
  // Keyed by (resolver_ip, domain); covers every test response emitted.
  std::map<std::pair<IpAddr, std::string>, TruthEntry> entries;

  bool operator==(const GroundTruth&) const = default;
};

void save_truth(std::ostream& out, const GroundTruth& truth);
GroundTruth load_truth(std::istream& in);

// In-memory transport; serves scripted endpoints keyed by (ip, host), with
// an (ip, "*") wildcard, and logs every request so tests can check that
// probes carry the right Host and SNI values.
class SimTransport : public probe::Transport {
 public:
  struct Endpoint {
    std::optional<probe::HttpPage> http_page;
    std::optional<std::string> http_error;
    std::optional<probe::HttpPage> https_page;
    std::optional<std::string> https_error;
    std::vector<std::vector<std::uint8_t>> chain;  // empty: handshake never completes
  };

  void add(const IpAddr& ip, const std::string& host, Endpoint ep);

  probe::HttpOutcome get_http(const probe::ProbeRequest& req) override;
  probe::TlsOutcome get_https(const probe::ProbeRequest& req) override;

  struct RequestLogEntry {
    IpAddr ip;
    int port = 0;
    std::string host;
    std::string sni;
  };
  std::vector<RequestLogEntry> request_log() const;

 private:
  const Endpoint* find(const IpAddr& ip, const std::string& host) const;

  std::map<std::pair<IpAddr, std::string>, Endpoint> endpoints_;
  mutable std::mutex mu_;
  std::vector<RequestLogEntry> log_;
};

struct Scenario {
  ScenarioSpec spec;
  std::vector<DnsResponse> snapshot;
  std::shared_ptr<SimTransport> transport;
  IpMetadataTable metadata;
  GroundTruth truth;
  std::vector<certval::ParsedCert> roots;  // the per-seed synthetic root
  std::string roots_pem;
  std::vector<blockpage::Fingerprint> fingerprints;
};

// Everything below is a pure function of the spec; generating twice yields
// identical serialized artifacts.
Scenario generate(const ScenarioSpec& spec);

// The fingerprint subset scenarios rely on; entries must stay byte-identical
// to the shipped database rows with the same ids.
std::vector<blockpage::Fingerprint> scenario_fingerprints();

struct FixtureManifest {
  std::map<std::string, std::string> file_hashes;  // filename -> sha256(content)
};

// Writes snapshot.jsonl, metadata.jsonl, fingerprints.jsonl, roots.pem,
// truth.jsonl and manifest.json into out_dir.
FixtureManifest emit_fixture(const ScenarioSpec& spec, const std::string& out_dir);

std::string to_string(Behavior b);
std::optional<Behavior> behavior_from_string(std::string_view s);

}  // namespace dnsverdict::simnet
