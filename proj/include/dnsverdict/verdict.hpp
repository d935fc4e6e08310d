// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <iosfwd>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <string>
#include <vector>

#include "dnsverdict/blockpage.hpp"
#include "dnsverdict/certval.hpp"
#include "dnsverdict/corpus.hpp"
#include "dnsverdict/probe.hpp"
#include "dnsverdict/record.hpp"

namespace dnsverdict::verdict {

enum class Label {
  UNMANIPULATED_CONTROL_IP,
  UNMANIPULATED_VALID_CERT,
  UNMANIPULATED_MALFORMED_DOMAIN,
  UNMANIPULATED_MIXED,
  MANIPULATED_BLOCKPAGE,
  MANIPULATED_INVALID_CERT,
  MANIPULATED_PRIVATE_IP,
  MANIPULATED_RCODE,
  UNKNOWN_HTTP_ONLY,
  UNKNOWN_CONNECTION_ERROR,
  UNKNOWN_NO_ANSWER,
};

bool is_manipulated(Label l);
bool is_unmanipulated(Label l);
bool is_unknown(Label l);

enum class ControlMatch { IP, HTTP_HASH, CERT_HASH, ASN, AS_NAME, CDN };

enum class ActorKind { VENDOR, ISP, NATIONAL, CORPORATION, UNKNOWN };
enum class ActorBasis { FINGERPRINT, CERT_ISSUER, CERT_CN, IP_POOL };

struct Actor {
  ActorKind kind = ActorKind::UNKNOWN;
  std::optional<std::string> name;    // required when kind != UNKNOWN
  std::optional<ActorBasis> basis;    // absent for the country-only fallback
  std::optional<std::string> detail;  // e.g. a pool IP's per-address tag
  std::optional<std::string> country;

  bool operator==(const Actor&) const = default;
};

struct Evidence {
  std::optional<certval::CertCase> cert_case;
  std::optional<std::string> fingerprint_id;
  std::set<certval::Tolerance> tolerances;
  std::set<ControlMatch> matched_control;
  std::optional<std::string> note;

  bool operator==(const Evidence&) const = default;
};

struct Verdict {
  IpAddr resolver_ip;  // unset on intermediate pair-level verdicts
  std::string domain;
  std::optional<IpAddr> ip;
  Label label = Label::UNKNOWN_NO_ANSWER;
  Evidence evidence;
  std::optional<Actor> actor;

  bool operator==(const Verdict&) const = default;
};

// Pair-level decision. First matching rule wins:
//   1 control IP, 2 private IP, 3 valid cert, 4 invalid cert matching the
//   invalid-control pool, 5 fingerprinted page, 6 invalid cert, 7 page but
//   no chain evidence, 8 nothing reachable.
Verdict classify_pair(const ResolutionPair& pair, const probe::FetchResult& fetch,
                      const std::optional<certval::CertAssessment>& assessment,
                      const corpus::ControlSet& control,
                      std::span<const blockpage::Fingerprint> db);

// Response-level decision over the answers' pair verdicts.
Verdict classify_response(const DnsResponse& response,
                          const std::map<IpAddr, Verdict>& pair_verdicts,
                          const corpus::ControlSet& control);

struct ActorPool {
  Actor actor;
  // Pool member IPs, each optionally tagged (e.g. which list the address
  // enforces).
  std::map<IpAddr, std::optional<std::string>> ips;
};

// Attribution priority: fingerprint actor, then IP pools, then CN/issuer
// keywords, then issuer organization for UNTRUSTED_MATCHED, else an
// UNKNOWN actor (country filled by the caller). Returns nullopt for verdicts
// that are not MANIPULATED_*.
std::optional<Actor> attribute(const Verdict& verdict, const certval::ParsedCert* leaf,
                               const blockpage::Fingerprint* fingerprint,
                               std::span<const ActorPool> pools);

std::vector<ActorPool> load_pools(std::istream& in);
void save_pools(std::ostream& out, std::span<const ActorPool> pools);

// JSON object text for embedding actors in other record files.
std::string actor_to_json_text(const Actor& a);
Actor actor_from_json_text(const std::string& text);

std::string to_string(Label l);
std::string to_string(ControlMatch m);
std::string to_string(ActorKind k);
std::string to_string(ActorBasis b);
std::optional<Label> label_from_string(std::string_view s);
std::optional<ControlMatch> control_match_from_string(std::string_view s);
std::optional<ActorKind> actor_kind_from_string(std::string_view s);
std::optional<ActorBasis> actor_basis_from_string(std::string_view s);

// Verdict record file: one JSON record per line.
void write_verdicts(std::ostream& out, std::span<const Verdict> verdicts,
                    const std::string& snapshot_id);
std::vector<Verdict> read_verdicts(std::istream& in, std::string* snapshot_id = nullptr);

}  // namespace dnsverdict::verdict
