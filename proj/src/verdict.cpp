// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/verdict.hpp"

#include <algorithm>
#include <istream>
#include <ostream>

#include "dnsverdict/common.hpp"
#include "json.hpp"

namespace dnsverdict::verdict {

bool is_manipulated(Label l) {
  return l == Label::MANIPULATED_BLOCKPAGE || l == Label::MANIPULATED_INVALID_CERT ||
         l == Label::MANIPULATED_PRIVATE_IP || l == Label::MANIPULATED_RCODE;
}

bool is_unmanipulated(Label l) {
  return l == Label::UNMANIPULATED_CONTROL_IP || l == Label::UNMANIPULATED_VALID_CERT ||
         l == Label::UNMANIPULATED_MALFORMED_DOMAIN || l == Label::UNMANIPULATED_MIXED;
}

bool is_unknown(Label l) {
  return l == Label::UNKNOWN_HTTP_ONLY || l == Label::UNKNOWN_CONNECTION_ERROR ||
         l == Label::UNKNOWN_NO_ANSWER;
}

namespace {

bool is_invalid_cert_case(certval::CertCase c) {
  return c == certval::CertCase::UNTRUSTED_MATCHED || c == certval::CertCase::TRUSTED_MISMATCHED ||
         c == certval::CertCase::UNTRUSTED_MISMATCHED;
}

std::optional<blockpage::MatchResult> match_any_page(const probe::FetchResult& fetch,
                                                     std::span<const blockpage::Fingerprint> db) {
  if (fetch.http) {
    if (auto m = blockpage::match_page(*fetch.http, db)) return m;
  }
  if (fetch.https_page) {
    if (auto m = blockpage::match_page(*fetch.https_page, db)) return m;
  }
  return std::nullopt;
}

}  // namespace

Verdict classify_pair(const ResolutionPair& pair, const probe::FetchResult& fetch,
                      const std::optional<certval::CertAssessment>& assessment,
                      const corpus::ControlSet& control,
                      std::span<const blockpage::Fingerprint> db) {
  Verdict v;
  v.domain = pair.domain;
  v.ip = pair.ip;
  if (assessment) {
    v.evidence.cert_case = assessment->cert_case;
    v.evidence.tolerances = assessment->tolerances_applied;
  }

  // 1: the control saw this IP too.
  if (auto it = control.control_ips.find(pair.domain);
      it != control.control_ips.end() && it->second.contains(pair.ip)) {
    v.label = Label::UNMANIPULATED_CONTROL_IP;
    v.evidence.matched_control.insert(ControlMatch::IP);
    return v;
  }

  // 2: no public resolver should answer private space.
  if (pair.ip.is_private()) {
    v.label = Label::MANIPULATED_PRIVATE_IP;
    v.evidence.note = "private address " + pair.ip.to_string();
    return v;
  }

  // 3: a valid certificate settles it, whatever the page says.
  if (assessment && assessment->cert_case == certval::CertCase::VALID) {
    v.label = Label::UNMANIPULATED_VALID_CERT;
    return v;
  }

  // 4: invalid certificate the control also saw for this domain.
  if (assessment && is_invalid_cert_case(assessment->cert_case) && fetch.chain &&
      !fetch.chain->empty()) {
    certval::ParsedCert leaf = certval::parse_cert((*fetch.chain)[0]);
    certval::CertSignature sig = certval::signature_of(*assessment, leaf);
    if (auto it = control.invalid_control_certs.find(pair.domain);
        it != control.invalid_control_certs.end() && it->second.contains(sig)) {
      v.label = Label::UNMANIPULATED_MALFORMED_DOMAIN;
      v.evidence.note = "invalid-control pool: " + certval::to_string(sig.invalid_reason);
      return v;
    }
  }

  // 5: a page matched a known blockpage.
  if (auto m = match_any_page(fetch, db)) {
    v.label = Label::MANIPULATED_BLOCKPAGE;
    v.evidence.fingerprint_id = m->fingerprint.id;
    v.evidence.note = "matched: " + m->matched_excerpt;
    return v;
  }

  // 6: invalid certificate with no better explanation.
  if (assessment && is_invalid_cert_case(assessment->cert_case)) {
    v.label = Label::MANIPULATED_INVALID_CERT;
    return v;
  }

  // 7: some page came back (HTTP, or HTTPS whose chain never parsed).
  if (fetch.http || fetch.https_page) {
    v.label = Label::UNKNOWN_HTTP_ONLY;
    return v;
  }

  // 8: nothing reachable on either port.
  v.label = Label::UNKNOWN_CONNECTION_ERROR;
  std::string note;
  if (fetch.http_error) note += "http: " + *fetch.http_error;
  if (fetch.https_error) {
    if (!note.empty()) note += "; ";
    note += "https: " + *fetch.https_error;
  }
  if (!note.empty()) v.evidence.note = note;
  return v;
}

Verdict classify_response(const DnsResponse& response,
                          const std::map<IpAddr, Verdict>& pair_verdicts,
                          const corpus::ControlSet& control) {
  Verdict v;
  v.resolver_ip = response.resolver_ip;
  v.domain = response.domain;

  // A censor RCODE needs a control that actually resolved the domain;
  // rcode -1 is a timeout, which is absence of an answer, not a forged
  // status, so it never counts as manipulation.
  if (response.rcode >= 1) {
    auto it = control.control_ips.find(response.domain);
    if (it != control.control_ips.end() && !it->second.empty()) {
      v.label = Label::MANIPULATED_RCODE;
      v.evidence.note = "rcode " + std::to_string(response.rcode) + " with resolving control";
      return v;
    }
  }
  if (response.rcode != 0 || response.answers.empty()) {
    v.label = Label::UNKNOWN_NO_ANSWER;
    return v;
  }

  std::vector<const Verdict*> answer_verdicts;
  answer_verdicts.reserve(response.answers.size());
  for (const auto& ip : response.answers) {
    auto it = pair_verdicts.find(ip);
    if (it == pair_verdicts.end())
      throw ContractViolation("no pair verdict for answer IP " + ip.to_string());
    answer_verdicts.push_back(&it->second);
  }

  bool any_unmanip = std::any_of(answer_verdicts.begin(), answer_verdicts.end(),
                                 [](const Verdict* a) { return is_unmanipulated(a->label); });
  bool any_manip = std::any_of(answer_verdicts.begin(), answer_verdicts.end(),
                               [](const Verdict* a) { return is_manipulated(a->label); });
  if (any_unmanip && any_manip) {
    // A client trying answers in order still reaches the real site.
    v.label = Label::UNMANIPULATED_MIXED;
    for (const Verdict* a : answer_verdicts) {
      if (is_unmanipulated(a->label)) {
        v.ip = a->ip;
        v.evidence = a->evidence;
        break;
      }
    }
    return v;
  }

  auto severity = [](Label l) { return is_manipulated(l) ? 2 : is_unknown(l) ? 1 : 0; };
  const Verdict* best = answer_verdicts[0];
  for (const Verdict* a : answer_verdicts) {
    if (severity(a->label) > severity(best->label)) best = a;  // first answer wins ties
  }
  v.label = best->label;
  v.ip = best->ip;
  v.evidence = best->evidence;
  v.actor = best->actor;
  return v;
}

std::optional<Actor> attribute(const Verdict& verdict, const certval::ParsedCert* leaf,
                               const blockpage::Fingerprint* fingerprint,
                               std::span<const ActorPool> pools) {
  if (!is_manipulated(verdict.label)) return std::nullopt;

  if (fingerprint && fingerprint->actor) {
    Actor a;
    switch (fingerprint->category) {
      case blockpage::Category::PRODUCT: a.kind = ActorKind::VENDOR; break;
      case blockpage::Category::NATIONAL: a.kind = ActorKind::NATIONAL; break;
      case blockpage::Category::ISP: a.kind = ActorKind::ISP; break;
      case blockpage::Category::CORPORATION: a.kind = ActorKind::CORPORATION; break;
      default: a.kind = ActorKind::UNKNOWN; break;
    }
    a.name = fingerprint->actor;
    a.basis = ActorBasis::FINGERPRINT;
    a.country = fingerprint->country;
    return a;
  }

  if (verdict.ip) {
    for (const auto& pool : pools) {
      auto it = pool.ips.find(*verdict.ip);
      if (it == pool.ips.end()) continue;
      Actor a = pool.actor;
      a.basis = ActorBasis::IP_POOL;
      a.detail = it->second;
      return a;
    }
  }

  static const char* kKeywords[] = {"blockpage", "allownet", "illegal", "forbidden", "block"};
  if (leaf) {
    auto keyword_in = [](const std::string& text) -> std::optional<std::string> {
      for (const char* kw : kKeywords) {
        if (text.find(kw) != std::string::npos) return std::string(kw);
      }
      return std::nullopt;
    };
    if (leaf->subject_cn) {
      std::string cn = ascii_lower(*leaf->subject_cn);
      if (auto kw = keyword_in(cn)) {
        Actor a;
        a.kind = ActorKind::ISP;
        // "forbidden.citytelecom.ru" names its operator after the keyword
        // label; keep the CN itself otherwise.
        std::string name = cn;
        if (cn.starts_with(*kw + ".") && cn.size() > kw->size() + 1)
          name = cn.substr(kw->size() + 1);
        a.name = name;
        a.basis = ActorBasis::CERT_CN;
        a.detail = "keyword: " + *kw;
        return a;
      }
    }
    std::string issuer = ascii_lower(leaf->issuer);
    if (auto kw = keyword_in(issuer)) {
      Actor a;
      a.kind = ActorKind::ISP;
      a.name = leaf->issuer;
      a.basis = ActorBasis::CERT_ISSUER;
      a.detail = "keyword: " + *kw;
      return a;
    }

    if (verdict.evidence.cert_case == certval::CertCase::UNTRUSTED_MATCHED) {
      // Self-signed filtering boxes tend to put the vendor in the issuer O=.
      size_t pos = leaf->issuer.find("O=");
      if (pos != std::string::npos) {
        size_t end = leaf->issuer.find(',', pos);
        std::string org = leaf->issuer.substr(pos + 2, end == std::string::npos ? std::string::npos
                                                                                : end - pos - 2);
        if (!org.empty()) {
          Actor a;
          a.kind = ActorKind::VENDOR;
          a.name = org;
          a.basis = ActorBasis::CERT_ISSUER;
          return a;
        }
      }
    }
  }

  Actor a;
  a.kind = ActorKind::UNKNOWN;
  return a;
}

std::vector<ActorPool> load_pools(std::istream& in) {
  std::vector<ActorPool> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      ActorPool pool;
      pool.actor.name = j.at("name").get<std::string>();
      auto kind = actor_kind_from_string(j.at("kind").get<std::string>());
      if (!kind) throw SchemaError("bad actor kind");
      pool.actor.kind = *kind;
      for (const auto& [ip_text, tag] : j.at("ips").items()) {
        IpAddr ip = IpAddr::must_parse(ip_text);
        pool.ips[ip] = tag.is_null() ? std::nullopt : std::make_optional(tag.get<std::string>());
      }
      out.push_back(std::move(pool));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("actor pool line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

void save_pools(std::ostream& out, std::span<const ActorPool> pools) {
  for (const auto& pool : pools) {
    nlohmann::json j;
    j["name"] = pool.actor.name.value_or("");
    j["kind"] = to_string(pool.actor.kind);
    nlohmann::json ips = nlohmann::json::object();
    for (const auto& [ip, tag] : pool.ips) {
      ips[ip.to_string()] = tag ? nlohmann::json(*tag) : nlohmann::json(nullptr);
    }
    j["ips"] = ips;
    out << j.dump() << '\n';
  }
}

namespace {

nlohmann::json actor_to_json(const Actor& a) {
  nlohmann::json j;
  j["kind"] = to_string(a.kind);
  j["name"] = a.name ? nlohmann::json(*a.name) : nlohmann::json(nullptr);
  j["basis"] = a.basis ? nlohmann::json(to_string(*a.basis)) : nlohmann::json(nullptr);
  j["detail"] = a.detail ? nlohmann::json(*a.detail) : nlohmann::json(nullptr);
  j["country"] = a.country ? nlohmann::json(*a.country) : nlohmann::json(nullptr);
  return j;
}

Actor actor_from_json(const nlohmann::json& j) {
  Actor a;
  auto kind = actor_kind_from_string(j.at("kind").get<std::string>());
  if (!kind) throw SchemaError("bad actor kind");
  a.kind = *kind;
  if (!j.at("name").is_null()) a.name = j["name"].get<std::string>();
  if (!j.at("basis").is_null()) {
    auto basis = actor_basis_from_string(j["basis"].get<std::string>());
    if (!basis) throw SchemaError("bad actor basis");
    a.basis = *basis;
  }
  if (!j.at("detail").is_null()) a.detail = j["detail"].get<std::string>();
  if (!j.at("country").is_null()) a.country = j["country"].get<std::string>();
  return a;
}

}  // namespace

std::string actor_to_json_text(const Actor& a) { return actor_to_json(a).dump(); }

Actor actor_from_json_text(const std::string& text) {
  try {
    return actor_from_json(nlohmann::json::parse(text));
  } catch (const nlohmann::json::exception& e) {
    throw SchemaError(std::string("bad actor json: ") + e.what());
  }
}

void write_verdicts(std::ostream& out, std::span<const Verdict> verdicts,
                    const std::string& snapshot_id) {
  for (const auto& v : verdicts) {
    nlohmann::json j;
    j["resolver_ip"] = v.resolver_ip.to_string();
    j["domain"] = v.domain;
    j["ip"] = v.ip ? nlohmann::json(v.ip->to_string()) : nlohmann::json(nullptr);
    j["label"] = to_string(v.label);
    nlohmann::json e;
    e["cert_case"] = v.evidence.cert_case ? nlohmann::json(certval::to_string(*v.evidence.cert_case))
                                          : nlohmann::json(nullptr);
    e["fingerprint_id"] =
        v.evidence.fingerprint_id ? nlohmann::json(*v.evidence.fingerprint_id) : nlohmann::json(nullptr);
    nlohmann::json tolerances = nlohmann::json::array();
    for (auto t : v.evidence.tolerances) tolerances.push_back(certval::to_string(t));
    e["tolerances"] = tolerances;
    nlohmann::json matched = nlohmann::json::array();
    for (auto m : v.evidence.matched_control) matched.push_back(to_string(m));
    e["matched_control"] = matched;
    e["note"] = v.evidence.note ? nlohmann::json(*v.evidence.note) : nlohmann::json(nullptr);
    j["evidence"] = e;
    j["actor"] = v.actor ? actor_to_json(*v.actor) : nlohmann::json(nullptr);
    j["snapshot_id"] = snapshot_id;
    out << j.dump() << '\n';
  }
}

std::vector<Verdict> read_verdicts(std::istream& in, std::string* snapshot_id) {
  std::vector<Verdict> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      Verdict v;
      // Pair-level records carry no resolver; to_string renders that as
      // "<unset>".
      auto resolver = j.at("resolver_ip").get<std::string>();
      if (resolver != "<unset>") v.resolver_ip = IpAddr::must_parse(resolver);
      v.domain = j.at("domain").get<std::string>();
      if (!j.at("ip").is_null()) v.ip = IpAddr::must_parse(j["ip"].get<std::string>());
      auto label = label_from_string(j.at("label").get<std::string>());
      if (!label) throw SchemaError("bad verdict label");
      v.label = *label;
      const auto& e = j.at("evidence");
      if (!e.at("cert_case").is_null()) {
        auto c = certval::cert_case_from_string(e["cert_case"].get<std::string>());
        if (!c) throw SchemaError("bad cert case");
        v.evidence.cert_case = *c;
      }
      if (!e.at("fingerprint_id").is_null())
        v.evidence.fingerprint_id = e["fingerprint_id"].get<std::string>();
      for (const auto& t : e.at("tolerances")) {
        auto tol = certval::tolerance_from_string(t.get<std::string>());
        if (!tol) throw SchemaError("bad tolerance");
        v.evidence.tolerances.insert(*tol);
      }
      for (const auto& m : e.at("matched_control")) {
        auto cm = control_match_from_string(m.get<std::string>());
        if (!cm) throw SchemaError("bad control match");
        v.evidence.matched_control.insert(*cm);
      }
      if (!e.at("note").is_null()) v.evidence.note = e["note"].get<std::string>();
      if (!j.at("actor").is_null()) v.actor = actor_from_json(j["actor"]);
      if (snapshot_id) *snapshot_id = j.value("snapshot_id", std::string{});
      out.push_back(std::move(v));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("verdict line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

std::string to_string(Label l) {
  switch (l) {
    case Label::UNMANIPULATED_CONTROL_IP: return "UNMANIPULATED_CONTROL_IP";
    case Label::UNMANIPULATED_VALID_CERT: return "UNMANIPULATED_VALID_CERT";
    case Label::UNMANIPULATED_MALFORMED_DOMAIN: return "UNMANIPULATED_MALFORMED_DOMAIN";
    case Label::UNMANIPULATED_MIXED: return "UNMANIPULATED_MIXED";
    case Label::MANIPULATED_BLOCKPAGE: return "MANIPULATED_BLOCKPAGE";
    case Label::MANIPULATED_INVALID_CERT: return "MANIPULATED_INVALID_CERT";
    case Label::MANIPULATED_PRIVATE_IP: return "MANIPULATED_PRIVATE_IP";
    case Label::MANIPULATED_RCODE: return "MANIPULATED_RCODE";
    case Label::UNKNOWN_HTTP_ONLY: return "UNKNOWN_HTTP_ONLY";
    case Label::UNKNOWN_CONNECTION_ERROR: return "UNKNOWN_CONNECTION_ERROR";
    case Label::UNKNOWN_NO_ANSWER: return "UNKNOWN_NO_ANSWER";
  }
  return "?";
}

std::string to_string(ControlMatch m) {
  switch (m) {
    case ControlMatch::IP: return "IP";
    case ControlMatch::HTTP_HASH: return "HTTP_HASH";
    case ControlMatch::CERT_HASH: return "CERT_HASH";
    case ControlMatch::ASN: return "ASN";
    case ControlMatch::AS_NAME: return "AS_NAME";
    case ControlMatch::CDN: return "CDN";
  }
  return "?";
}

std::string to_string(ActorKind k) {
  switch (k) {
    case ActorKind::VENDOR: return "VENDOR";
    case ActorKind::ISP: return "ISP";
    case ActorKind::NATIONAL: return "NATIONAL";
    case ActorKind::CORPORATION: return "CORPORATION";
    case ActorKind::UNKNOWN: return "UNKNOWN";
  }
  return "?";
}

std::string to_string(ActorBasis b) {
  switch (b) {
    case ActorBasis::FINGERPRINT: return "FINGERPRINT";
    case ActorBasis::CERT_ISSUER: return "CERT_ISSUER";
    case ActorBasis::CERT_CN: return "CERT_CN";
    case ActorBasis::IP_POOL: return "IP_POOL";
  }
  return "?";
}

std::optional<Label> label_from_string(std::string_view s) {
  for (Label l : {Label::UNMANIPULATED_CONTROL_IP, Label::UNMANIPULATED_VALID_CERT,
                  Label::UNMANIPULATED_MALFORMED_DOMAIN, Label::UNMANIPULATED_MIXED,
                  Label::MANIPULATED_BLOCKPAGE, Label::MANIPULATED_INVALID_CERT,
                  Label::MANIPULATED_PRIVATE_IP, Label::MANIPULATED_RCODE, Label::UNKNOWN_HTTP_ONLY,
                  Label::UNKNOWN_CONNECTION_ERROR, Label::UNKNOWN_NO_ANSWER})
    if (to_string(l) == s) return l;
  return std::nullopt;
}

std::optional<ControlMatch> control_match_from_string(std::string_view s) {
  for (ControlMatch m : {ControlMatch::IP, ControlMatch::HTTP_HASH, ControlMatch::CERT_HASH,
                         ControlMatch::ASN, ControlMatch::AS_NAME, ControlMatch::CDN})
    if (to_string(m) == s) return m;
  return std::nullopt;
}

std::optional<ActorKind> actor_kind_from_string(std::string_view s) {
  for (ActorKind k : {ActorKind::VENDOR, ActorKind::ISP, ActorKind::NATIONAL,
                      ActorKind::CORPORATION, ActorKind::UNKNOWN})
    if (to_string(k) == s) return k;
  return std::nullopt;
}

std::optional<ActorBasis> actor_basis_from_string(std::string_view s) {
  for (ActorBasis b : {ActorBasis::FINGERPRINT, ActorBasis::CERT_ISSUER, ActorBasis::CERT_CN,
                       ActorBasis::IP_POOL})
    if (to_string(b) == s) return b;
  return std::nullopt;
}

}  // namespace dnsverdict::verdict
