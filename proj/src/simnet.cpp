// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/simnet.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <istream>
#include <ostream>
#include <set>
#include <sstream>

#include "dnsverdict/certgen.hpp"
#include "dnsverdict/common.hpp"
#include "json.hpp"

namespace dnsverdict::simnet {

namespace {

constexpr std::int64_t kYear = 31536000;
constexpr std::int64_t kDay = 86400;

// Provider registry. Indexes 0..7 are home hosting ASes for domains (0..2
// are CDNs), 8..11 are regional ASes no control answer comes from, and the
// high indexes belong to manipulation infrastructure.
constexpr int kHomeProviders = 8;
constexpr int kRegionalProviders = 4;
constexpr int kFilterAs = 16;
constexpr int kIspAs = 17;
constexpr int kPortalAs = 18;

struct AsInfo {
  std::int64_t asn;
  std::string name;
  std::optional<std::string> cdn;
};

AsInfo as_info(int j) {
  AsInfo info;
  info.asn = 64500 + j;
  if (j < 3) {
    info.name = std::string("SIMCDN-") + static_cast<char>('A' + j);
    info.cdn = std::string("simcdn-") + static_cast<char>('a' + j);
  } else if (j < kHomeProviders) {
    info.name = std::string("SIMHOST-") + static_cast<char>('A' + j - 3);
  } else if (j < kHomeProviders + kRegionalProviders) {
    info.name = std::string("SIMREGIONAL-") + static_cast<char>('A' + j - kHomeProviders);
  } else if (j == kFilterAs) {
    info.name = "SIMNET-FILTER";
  } else if (j == kIspAs) {
    info.name = "CITYTELECOM-BACKBONE";
  } else if (j == kPortalAs) {
    info.name = "SIMPORTAL";
  } else {
    info.name = "SIMNET-AS" + std::to_string(j);
  }
  return info;
}

// Sequential public addresses per provider; first octets 20..38 stay clear
// of every reserved range the classifier treats as private.
class IpAlloc {
 public:
  IpAddr next(int j) {
    std::uint32_t c = counters_[j]++;
    std::uint32_t b = c / 62500, rem = c % 62500;
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%u.%u.%u.%u", 20 + static_cast<unsigned>(j), b, rem / 250,
                  1 + rem % 250);
    return IpAddr::must_parse(buf);
  }

 private:
  std::map<int, std::uint32_t> counters_;
};

std::string domain_name(int i) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "d%04d.web.example", i);
  return buf;
}

std::string std_body(const std::string& d) {
  return "<html><head><title>" + d + "</title></head><body><h1>" + d +
         "</h1><p>Reference content served by " + d + ".</p></body></html>";
}

std::string localized_body(const std::string& d) {
  return "<html><head><title>" + d + " regional</title></head><body><h1>" + d +
         "</h1><p>Regional mirror content for " + d + ".</p></body></html>";
}

std::string deny_body() {
  return "<html><head><title>Access Denied</title></head><body><h1>403 Forbidden</h1>"
         "<p>This content is not available in your region.</p></body></html>";
}

std::string positif_body() {
  return "<html><head><title>Internet Positif</title></head><body><h1>Internet Positif</h1>"
         "<p>Situs yang anda kunjungi tidak dapat diakses.</p></body></html>";
}

std::string isp_block_body() {
  return "<html><head><title>Restricted</title></head><body>"
         "<p>Access to the requested resource is restricted by your provider.</p></body></html>";
}

std::string securly_body() {
  return "<html><head><title>Site Blocked</title></head><body>"
         "<p>This site is blocked by your network administrator.</p></body></html>";
}

std::string portal_body() {
  return "<html><head><title>Network Sign-In</title></head><body>"
         "<form action=\"/login\">Sign in to continue.</form></body></html>";
}

probe::HttpPage make_page(int status, const std::string& body) {
  probe::HttpPage p;
  p.status = status;
  p.headers = {{"Content-Type", "text/html"}, {"Server", "simhttpd/1.0"}};
  p.body.assign(body.begin(), body.end());
  return p;
}

std::string behavior_country(Behavior b, int resolver_index) {
  switch (b) {
    case Behavior::CLEAN: {
      static const char* kRotation[] = {"US", "DE", "JP"};
      return kRotation[resolver_index % 3];
    }
    case Behavior::LOCALIZED_CLEAN: return "IN";
    case Behavior::SELF_SIGNED_BLOCKPAGE: return "ID";
    case Behavior::TRUSTED_ISP_BLOCKPAGE: return "RU";
    case Behavior::BIG_CDN_INJECTION: return "CN";
    case Behavior::NXDOMAIN_CENSOR: return "GB";
    case Behavior::CAPTIVE_PORTAL: return "US";
    case Behavior::PRIVATE_IP_CENSOR: return "IR";
    case Behavior::MISCONFIGURED_DOMAIN: return "US";
    case Behavior::GEOBLOCKING_CDN: return "UA";
    case Behavior::CDN_HOSTED_BLOCKPAGE: return "US";
  }
  return "US";
}

double unit_draw(Rng& rng) { return static_cast<double>(rng.next() >> 11) * 0x1.0p-53; }

verdict::Actor unknown_actor(const std::string& country) {
  verdict::Actor a;
  a.kind = verdict::ActorKind::UNKNOWN;
  a.country = country;
  return a;
}

verdict::Actor positif_actor() {
  verdict::Actor a;
  a.kind = verdict::ActorKind::NATIONAL;
  a.name = "Internet Positif";
  a.basis = verdict::ActorBasis::FINGERPRINT;
  a.country = "ID";
  return a;
}

verdict::Actor citytelecom_actor() {
  verdict::Actor a;
  a.kind = verdict::ActorKind::ISP;
  a.name = "citytelecom.ru";
  a.basis = verdict::ActorBasis::CERT_CN;
  a.detail = "keyword: forbidden";
  a.country = "RU";
  return a;
}

verdict::Actor securly_actor() {
  verdict::Actor a;
  a.kind = verdict::ActorKind::VENDOR;
  a.name = "Securly";
  a.basis = verdict::ActorBasis::FINGERPRINT;
  a.country = "US";
  return a;
}

std::string format_double(double v) {
  char buf[64];
  auto [end, ec] = std::to_chars(buf, buf + sizeof(buf), v);
  if (ec != std::errc{}) return std::to_string(v);
  return std::string(buf, end);
}

}  // namespace

void validate(const ScenarioSpec& spec) {
  if (spec.domains < 1) throw SchemaError("scenario: domains must be >= 1");
  if (spec.resolvers < 1) throw SchemaError("scenario: resolvers must be >= 1");
  if (spec.control_resolvers < 1) throw SchemaError("scenario: control_resolvers must be >= 1");
  if (spec.behaviors.empty()) throw SchemaError("scenario: behaviors must not be empty");
  double sum = 0.0;
  for (const auto& [b, w] : spec.behaviors) {
    (void)b;
    if (w < 0.0) throw SchemaError("scenario: behavior weights must be >= 0");
    sum += w;
  }
  if (std::abs(sum - 1.0) > 1e-9) throw SchemaError("scenario: behavior weights must sum to 1");
  if (static_cast<size_t>(spec.resolvers) < spec.behaviors.size())
    throw SchemaError("scenario: need at least one resolver per listed behavior");
  if (spec.mixed_fraction < 0.0 || spec.mixed_fraction > 1.0)
    throw SchemaError("scenario: mixed_fraction must be in [0,1]");
  if (spec.blocked_domains < 0 || spec.misconfigured_domains < 0)
    throw SchemaError("scenario: domain subset counts must be >= 0");
  if (spec.blocked_domains + spec.misconfigured_domains >= spec.domains)
    throw SchemaError("scenario: blocked + misconfigured must leave at least one plain domain");
  for (const auto& [b, w] : spec.behaviors) {
    (void)w;
    if (b == Behavior::CAPTIVE_PORTAL && spec.domains < 2)
      throw SchemaError("scenario: CAPTIVE_PORTAL needs at least two domains");
  }
}

Scenario generate(const ScenarioSpec& spec) {
  validate(spec);

  Scenario sc;
  sc.spec = spec;
  sc.transport = std::make_shared<SimTransport>();
  sc.fingerprints = scenario_fingerprints();

  Rng key_rng = Rng(spec.seed).fork(0x6b6579);
  Rng assign_rng = Rng(spec.seed).fork(0x61736e);
  Rng subset_rng = Rng(spec.seed).fork(0x737562);
  Rng mixed_rng = Rng(spec.seed).fork(0x6d6978);

  std::set<Behavior> listed;
  for (const auto& [b, w] : spec.behaviors) {
    (void)w;
    listed.insert(b);
  }

  const std::int64_t tb = spec.time_base;
  const int n = spec.domains;
  const int mis_start = n - spec.misconfigured_domains;
  auto is_mis = [&](int i) { return i >= mis_start; };
  auto is_blocked = [&](int i) { return i < spec.blocked_domains; };
  auto provider_of = [&](int i) { return i % kHomeProviders; };

  // Certificate hierarchy. Issuance order is fixed so the key stream, and
  // with it every certificate byte, depends only on the spec.
  certgen::CertSpec root_spec;
  root_spec.subject_cn = "Sim Policy Root CA";
  root_spec.subject_org = "Sim Policy";
  root_spec.not_before = tb - 10 * kYear;
  root_spec.not_after = tb + 10 * kYear;
  root_spec.is_ca = true;
  root_spec.serial = 1;
  certgen::IssuedCert root = certgen::issue(root_spec, nullptr, certgen::make_key(key_rng));

  certgen::CertSpec int_spec;
  int_spec.subject_cn = "Sim Issuing CA";
  int_spec.subject_org = "Sim Policy";
  int_spec.not_before = tb - 5 * kYear;
  int_spec.not_after = tb + 5 * kYear;
  int_spec.is_ca = true;
  int_spec.serial = 2;
  certgen::IssuedCert intermediate = certgen::issue(int_spec, &root, certgen::make_key(key_rng));

  auto leaf_spec = [&](const std::string& cn, std::uint64_t serial) {
    certgen::CertSpec s;
    s.subject_cn = cn;
    s.dns_sans = {cn};
    s.not_before = tb - 30 * kDay;
    s.not_after = tb + 365 * kDay;
    s.serial = serial;
    return s;
  };

  certgen::IssuedCert ss_leaf =
      certgen::issue(leaf_spec("internet-positif.simnet.example", 3), nullptr,
                     certgen::make_key(key_rng));
  certgen::IssuedCert isp_leaf = certgen::issue(leaf_spec("forbidden.citytelecom.ru", 4),
                                                &intermediate, certgen::make_key(key_rng));
  certgen::IssuedCert cdninj_leaf = certgen::issue(leaf_spec("cdn-frontend.simcdn-a.example", 5),
                                                   &intermediate, certgen::make_key(key_rng));

  std::vector<certgen::IssuedCert> leaves;
  leaves.reserve(static_cast<size_t>(n));
  std::vector<std::string> names(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    names[static_cast<size_t>(i)] = domain_name(i);
    const std::string& d = names[static_cast<size_t>(i)];
    if (is_mis(i)) {
      // The domain's own deployment is broken: self-signed everywhere.
      leaves.push_back(
          certgen::issue(leaf_spec(d, 30000 + static_cast<std::uint64_t>(i)), nullptr,
                         certgen::make_key(key_rng)));
    } else {
      leaves.push_back(certgen::issue(leaf_spec(d, 1000 + static_cast<std::uint64_t>(i)),
                                      &intermediate, certgen::make_key(key_rng)));
    }
  }

  std::vector<certgen::IssuedCert> loc_leaves;
  if (listed.contains(Behavior::LOCALIZED_CLEAN)) {
    loc_leaves.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      // Same hierarchy, different key and serial: a genuinely distinct but
      // valid regional certificate.
      loc_leaves.push_back(is_mis(i) ? certgen::IssuedCert{}
                                     : certgen::issue(leaf_spec(names[static_cast<size_t>(i)],
                                                                100000 + static_cast<std::uint64_t>(i)),
                                                      &intermediate, certgen::make_key(key_rng)));
    }
  }

  sc.roots = {certval::parse_cert(root.der)};
  sc.roots_pem = certval::to_pem(root.der);

  // Address plan.
  IpAlloc alloc;
  const IpAddr bp_ss = alloc.next(kFilterAs);
  const IpAddr bp_isp = alloc.next(kIspAs);
  const IpAddr bp_cdninj = alloc.next(0);
  const IpAddr bp_cdn[3] = {alloc.next(0), alloc.next(1), alloc.next(2)};
  const IpAddr portal1 = alloc.next(kPortalAs);
  const IpAddr portal2 = alloc.next(kPortalAs);
  const IpAddr private_censor = IpAddr::must_parse("10.66.6.6");

  std::vector<IpAddr> home1(static_cast<size_t>(n)), home2(static_cast<size_t>(n));
  for (int i = 0; i < n; ++i) {
    home1[static_cast<size_t>(i)] = alloc.next(provider_of(i));
    home2[static_cast<size_t>(i)] = alloc.next(provider_of(i));
  }
  std::vector<IpAddr> loc_ip;
  if (listed.contains(Behavior::LOCALIZED_CLEAN)) {
    loc_ip.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (!is_mis(i)) loc_ip[static_cast<size_t>(i)] = alloc.next(kHomeProviders + i % kRegionalProviders);
    }
  }
  std::vector<IpAddr> geo_ip;
  if (listed.contains(Behavior::GEOBLOCKING_CDN)) {
    geo_ip.resize(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i) {
      if (is_blocked(i)) geo_ip[static_cast<size_t>(i)] = alloc.next(provider_of(i));
    }
  }

  // Transport endpoints and metadata rows.
  auto meta_row = [&](int as_index, const std::string& body,
                      const std::optional<std::string>& cert_fp,
                      const std::optional<std::string>& ptr) {
    AsInfo as = as_info(as_index);
    IpMetadata m;
    m.asn = as.asn;
    m.as_name = as.name;
    m.cdn = as.cdn;
    m.http_hash = sha256_hex(body);
    m.cert_hash = cert_fp;
    m.ptr = ptr;
    return m;
  };

  for (int i = 0; i < n; ++i) {
    const std::string& d = names[static_cast<size_t>(i)];
    const certgen::IssuedCert& leaf = leaves[static_cast<size_t>(i)];
    std::string body = std_body(d);
    SimTransport::Endpoint ep;
    ep.http_page = make_page(200, body);
    ep.https_page = make_page(200, body);
    ep.chain = is_mis(i) ? std::vector<std::vector<std::uint8_t>>{leaf.der}
                         : std::vector<std::vector<std::uint8_t>>{leaf.der, intermediate.der};
    sc.transport->add(home1[static_cast<size_t>(i)], d, ep);
    sc.transport->add(home2[static_cast<size_t>(i)], d, ep);
    std::string fp = sha256_hex(leaf.der);
    sc.metadata.put(home1[static_cast<size_t>(i)],
                    meta_row(provider_of(i), body, fp, "srv1." + d));
    sc.metadata.put(home2[static_cast<size_t>(i)],
                    meta_row(provider_of(i), body, fp, "srv2." + d));
  }

  if (listed.contains(Behavior::LOCALIZED_CLEAN)) {
    for (int i = 0; i < n; ++i) {
      if (is_mis(i)) continue;
      const std::string& d = names[static_cast<size_t>(i)];
      std::string body = localized_body(d);
      SimTransport::Endpoint ep;
      ep.http_page = make_page(200, body);
      ep.https_page = make_page(200, body);
      ep.chain = {loc_leaves[static_cast<size_t>(i)].der, intermediate.der};
      sc.transport->add(loc_ip[static_cast<size_t>(i)], d, ep);
      sc.metadata.put(loc_ip[static_cast<size_t>(i)],
                      meta_row(kHomeProviders + i % kRegionalProviders, body,
                               sha256_hex(loc_leaves[static_cast<size_t>(i)].der), std::nullopt));
    }
  }

  if (listed.contains(Behavior::GEOBLOCKING_CDN)) {
    for (int i = 0; i < n; ++i) {
      if (!is_blocked(i)) continue;
      const std::string& d = names[static_cast<size_t>(i)];
      SimTransport::Endpoint ep;
      ep.http_page = make_page(403, deny_body());
      ep.https_page = make_page(403, deny_body());
      ep.chain = {leaves[static_cast<size_t>(i)].der, intermediate.der};
      sc.transport->add(geo_ip[static_cast<size_t>(i)], d, ep);
      sc.metadata.put(geo_ip[static_cast<size_t>(i)],
                      meta_row(provider_of(i), deny_body(),
                               sha256_hex(leaves[static_cast<size_t>(i)].der), std::nullopt));
    }
  }

  {
    SimTransport::Endpoint ep;
    ep.http_page = make_page(200, positif_body());
    ep.https_page = make_page(200, positif_body());
    ep.chain = {ss_leaf.der};
    sc.transport->add(bp_ss, "*", ep);
    sc.metadata.put(bp_ss, meta_row(kFilterAs, positif_body(), sha256_hex(ss_leaf.der), std::nullopt));
  }
  {
    SimTransport::Endpoint ep;
    ep.http_page = make_page(200, isp_block_body());
    ep.https_page = make_page(200, isp_block_body());
    ep.chain = {isp_leaf.der, intermediate.der};
    sc.transport->add(bp_isp, "*", ep);
    sc.metadata.put(bp_isp,
                    meta_row(kIspAs, isp_block_body(), sha256_hex(isp_leaf.der), std::nullopt));
  }
  {
    SimTransport::Endpoint ep;
    ep.http_page = make_page(403, deny_body());
    ep.https_page = make_page(403, deny_body());
    ep.chain = {cdninj_leaf.der, intermediate.der};
    sc.transport->add(bp_cdninj, "*", ep);
    sc.metadata.put(bp_cdninj, meta_row(0, deny_body(), sha256_hex(cdninj_leaf.der), std::nullopt));
  }
  for (int p = 0; p < 3; ++p) {
    // Blockpage host living inside the control's own CDN provider: plain
    // HTTP only, TLS refused, so only the fingerprint gives it away.
    SimTransport::Endpoint ep;
    ep.http_page = make_page(200, securly_body());
    ep.https_error = "connection-refused";
    sc.transport->add(bp_cdn[p], "*", ep);
    sc.metadata.put(bp_cdn[p], meta_row(p, securly_body(), std::nullopt, std::nullopt));
  }
  for (const IpAddr& pip : {portal1, portal2}) {
    SimTransport::Endpoint ep;
    ep.http_page = make_page(200, portal_body());
    ep.https_error = "connection-refused";
    sc.transport->add(pip, "*", ep);
  }

  // Resolvers. Controls answer every honest address; tests follow their
  // assigned behavior.
  auto control_ip_of = [](int c) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "198.51.100.%d", c + 1);
    return IpAddr::must_parse(buf);
  };
  auto test_ip_of = [](int r) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "198.18.%d.%d", r / 200, 1 + r % 200);
    return IpAddr::must_parse(buf);
  };

  auto honest_set = [&](int i) {
    return is_mis(i) ? std::vector<IpAddr>{home1[static_cast<size_t>(i)]}
                     : std::vector<IpAddr>{home1[static_cast<size_t>(i)],
                                           home2[static_cast<size_t>(i)]};
  };

  for (int c = 0; c < spec.control_resolvers; ++c) {
    for (int i = 0; i < n; ++i) {
      DnsResponse r;
      r.resolver_ip = control_ip_of(c);
      r.resolver_country = "US";
      r.domain = names[static_cast<size_t>(i)];
      r.rcode = 0;
      r.answers = honest_set(i);
      r.timestamp = tb;
      r.is_control = true;
      sc.snapshot.push_back(std::move(r));
    }
  }

  auto draw_behavior = [&]() {
    double u = unit_draw(assign_rng);
    double cum = 0.0;
    for (const auto& [b, w] : spec.behaviors) {
      cum += w;
      if (u < cum) return b;
    }
    return spec.behaviors.back().first;
  };

  for (int r = 0; r < spec.resolvers; ++r) {
    Behavior b = r < static_cast<int>(spec.behaviors.size())
                     ? spec.behaviors[static_cast<size_t>(r)].first
                     : draw_behavior();
    IpAddr rip = test_ip_of(r);
    std::string country = behavior_country(b, r);

    for (int i = 0; i < n; ++i) {
      const std::string& d = names[static_cast<size_t>(i)];
      DnsResponse resp;
      resp.resolver_ip = rip;
      resp.resolver_country = country;
      resp.domain = d;
      resp.rcode = 0;
      resp.timestamp = tb;

      TruthEntry truth;

      auto honest = [&]() {
        if (is_mis(i)) {
          resp.answers = {home1[static_cast<size_t>(i)]};
        } else {
          switch (subset_rng.next_below(3)) {
            case 0: resp.answers = {home1[static_cast<size_t>(i)]}; break;
            case 1: resp.answers = {home2[static_cast<size_t>(i)]}; break;
            default:
              resp.answers = {home1[static_cast<size_t>(i)], home2[static_cast<size_t>(i)]};
              break;
          }
        }
        truth.label = verdict::Label::UNMANIPULATED_CONTROL_IP;
      };

      // Manipulated answer, with the configurable chance of an honest IP
      // riding along (which must flip the response to MIXED).
      auto manipulated = [&](const IpAddr& ip, verdict::Label label,
                             std::optional<verdict::Actor> actor) {
        resp.answers = {ip};
        truth.label = label;
        truth.actor = std::move(actor);
        if (unit_draw(mixed_rng) < spec.mixed_fraction) {
          resp.answers.push_back(home1[static_cast<size_t>(i)]);
          truth.label = verdict::Label::UNMANIPULATED_MIXED;
          truth.actor.reset();
        }
      };

      switch (b) {
        case Behavior::CLEAN: honest(); break;
        case Behavior::MISCONFIGURED_DOMAIN:
          if (is_mis(i)) {
            // The replica the control never lists, serving the same broken
            // certificate.
            resp.answers = {home2[static_cast<size_t>(i)]};
            truth.label = verdict::Label::UNMANIPULATED_MALFORMED_DOMAIN;
          } else {
            honest();
          }
          break;
        case Behavior::LOCALIZED_CLEAN:
          if (is_mis(i)) {
            honest();
          } else {
            resp.answers = {loc_ip[static_cast<size_t>(i)]};
            truth.label = verdict::Label::UNMANIPULATED_VALID_CERT;
          }
          break;
        case Behavior::GEOBLOCKING_CDN:
          if (is_blocked(i)) {
            resp.answers = {geo_ip[static_cast<size_t>(i)]};
            truth.label = verdict::Label::UNMANIPULATED_VALID_CERT;
          } else {
            honest();
          }
          break;
        case Behavior::SELF_SIGNED_BLOCKPAGE:
          if (is_blocked(i)) {
            manipulated(bp_ss, verdict::Label::MANIPULATED_BLOCKPAGE, positif_actor());
          } else {
            honest();
          }
          break;
        case Behavior::TRUSTED_ISP_BLOCKPAGE:
          if (is_blocked(i)) {
            manipulated(bp_isp, verdict::Label::MANIPULATED_BLOCKPAGE, citytelecom_actor());
          } else {
            honest();
          }
          break;
        case Behavior::BIG_CDN_INJECTION:
          if (is_blocked(i)) {
            manipulated(bp_cdninj, verdict::Label::MANIPULATED_INVALID_CERT,
                        unknown_actor(country));
          } else {
            honest();
          }
          break;
        case Behavior::NXDOMAIN_CENSOR:
          if (is_blocked(i)) {
            resp.rcode = 3;
            truth.label = verdict::Label::MANIPULATED_RCODE;
            truth.actor = unknown_actor(country);
          } else {
            honest();
          }
          break;
        case Behavior::CAPTIVE_PORTAL:
          resp.answers = {portal1, portal2};
          truth.label.reset();
          truth.excluded = corpus::ExclusionReason::SAME_IP_SET;
          break;
        case Behavior::PRIVATE_IP_CENSOR:
          if (is_blocked(i)) {
            manipulated(private_censor, verdict::Label::MANIPULATED_PRIVATE_IP,
                        unknown_actor(country));
          } else {
            honest();
          }
          break;
        case Behavior::CDN_HOSTED_BLOCKPAGE:
          if (is_blocked(i) && provider_of(i) < 3) {
            manipulated(bp_cdn[provider_of(i)], verdict::Label::MANIPULATED_BLOCKPAGE,
                        securly_actor());
          } else {
            honest();
          }
          break;
      }

      sc.truth.entries[{rip, d}] = std::move(truth);
      sc.snapshot.push_back(std::move(resp));
    }
  }

  return sc;
}

std::vector<blockpage::Fingerprint> scenario_fingerprints() {
  std::vector<blockpage::Fingerprint> db;
  {
    blockpage::Fingerprint f;
    f.id = "id-internet-positif";
    f.category = blockpage::Category::NATIONAL;
    f.where = blockpage::Scope::BODY;
    f.pattern = "Internet Positif";
    f.pattern_kind = blockpage::PatternKind::SUBSTRING;
    f.country = "ID";
    f.actor = "Internet Positif";
    f.source = "curated";
    db.push_back(std::move(f));
  }
  {
    blockpage::Fingerprint f;
    f.id = "ru-provider-restricted";
    f.category = blockpage::Category::ISP;
    f.where = blockpage::Scope::BODY;
    f.pattern = "Access to the requested resource is restricted by your provider";
    f.pattern_kind = blockpage::PatternKind::SUBSTRING;
    f.country = "RU";
    f.source = "curated";
    db.push_back(std::move(f));
  }
  {
    blockpage::Fingerprint f;
    f.id = "product-securly";
    f.category = blockpage::Category::PRODUCT;
    f.where = blockpage::Scope::BODY;
    f.pattern = "This site is blocked by your network administrator";
    f.pattern_kind = blockpage::PatternKind::SUBSTRING;
    f.country = "US";
    f.actor = "Securly";
    f.source = "curated";
    db.push_back(std::move(f));
  }
  return db;
}

void SimTransport::add(const IpAddr& ip, const std::string& host, Endpoint ep) {
  std::lock_guard<std::mutex> lock(mu_);
  endpoints_[{ip, host}] = std::move(ep);
}

const SimTransport::Endpoint* SimTransport::find(const IpAddr& ip, const std::string& host) const {
  auto it = endpoints_.find({ip, host});
  if (it != endpoints_.end()) return &it->second;
  it = endpoints_.find({ip, "*"});
  if (it != endpoints_.end()) return &it->second;
  return nullptr;
}

probe::HttpOutcome SimTransport::get_http(const probe::ProbeRequest& req) {
  std::lock_guard<std::mutex> lock(mu_);
  log_.push_back({req.ip, req.port, req.host, req.sni});
  probe::HttpOutcome out;
  const Endpoint* ep = find(req.ip, req.host);
  if (!ep || (!ep->http_page && !ep->http_error)) {
    out.error = "connection-refused";
    return out;
  }
  out.page = ep->http_page;
  out.error = ep->http_error;
  return out;
}

probe::TlsOutcome SimTransport::get_https(const probe::ProbeRequest& req) {
  std::lock_guard<std::mutex> lock(mu_);
  log_.push_back({req.ip, req.port, req.host, req.sni});
  probe::TlsOutcome out;
  const Endpoint* ep = find(req.ip, req.host);
  if (!ep) {
    out.error = "connection-refused";
    return out;
  }
  if (ep->chain.empty()) {
    out.error = ep->https_error ? ep->https_error : std::optional<std::string>("tls-handshake-failed");
    return out;
  }
  out.chain = ep->chain;
  out.page = ep->https_page;
  out.error = ep->https_error;
  return out;
}

std::vector<SimTransport::RequestLogEntry> SimTransport::request_log() const {
  std::lock_guard<std::mutex> lock(mu_);
  return log_;
}

void save_truth(std::ostream& out, const GroundTruth& truth) {
  for (const auto& [key, entry] : truth.entries) {
    if (entry.label.has_value() == entry.excluded.has_value())
      throw ContractViolation("truth entry must carry exactly one of label/excluded");
    nlohmann::json j;
    j["resolver_ip"] = key.first.to_string();
    j["domain"] = key.second;
    j["label"] = entry.label ? nlohmann::json(verdict::to_string(*entry.label)) : nlohmann::json(nullptr);
    j["excluded"] =
        entry.excluded ? nlohmann::json(corpus::to_string(*entry.excluded)) : nlohmann::json(nullptr);
    j["actor"] = entry.actor ? nlohmann::json::parse(verdict::actor_to_json_text(*entry.actor))
                             : nlohmann::json(nullptr);
    out << j.dump() << '\n';
  }
}

GroundTruth load_truth(std::istream& in) {
  GroundTruth out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    try {
      nlohmann::json j = nlohmann::json::parse(line);
      IpAddr rip = IpAddr::must_parse(j.at("resolver_ip").get<std::string>());
      std::string domain = j.at("domain").get<std::string>();
      TruthEntry e;
      if (!j.at("label").is_null()) {
        auto l = verdict::label_from_string(j["label"].get<std::string>());
        if (!l) throw SchemaError("bad truth label");
        e.label = *l;
      }
      if (!j.at("excluded").is_null()) {
        auto x = corpus::exclusion_reason_from_string(j["excluded"].get<std::string>());
        if (!x) throw SchemaError("bad truth exclusion");
        e.excluded = *x;
      }
      if (e.label.has_value() == e.excluded.has_value())
        throw SchemaError("truth entry must carry exactly one of label/excluded");
      if (!j.at("actor").is_null())
        e.actor = verdict::actor_from_json_text(j["actor"].dump());
      out.entries[{rip, std::move(domain)}] = std::move(e);
    } catch (const nlohmann::json::exception& ex) {
      throw SchemaError("truth line " + std::to_string(lineno) + ": " + ex.what());
    }
  }
  return out;
}

ScenarioSpec parse_spec(std::istream& in) {
  ScenarioSpec spec;
  bool behaviors_set = false;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    size_t eq = t.find('=');
    if (eq == std::string::npos)
      throw SchemaError("spec line " + std::to_string(lineno) + ": expected key=value");
    std::string key = trim(t.substr(0, eq));
    std::string value = trim(t.substr(eq + 1));
    try {
      if (key == "seed") {
        spec.seed = std::stoull(value);
      } else if (key == "domains") {
        spec.domains = std::stoi(value);
      } else if (key == "resolvers") {
        spec.resolvers = std::stoi(value);
      } else if (key == "control_resolvers") {
        spec.control_resolvers = std::stoi(value);
      } else if (key == "mixed_fraction") {
        spec.mixed_fraction = std::stod(value);
      } else if (key == "blocked_domains") {
        spec.blocked_domains = std::stoi(value);
      } else if (key == "misconfigured_domains") {
        spec.misconfigured_domains = std::stoi(value);
      } else if (key == "time_base") {
        spec.time_base = std::stoll(value);
      } else if (key == "behaviors") {
        spec.behaviors.clear();
        behaviors_set = true;
        for (const std::string& part : split(value, ',')) {
          std::string p = trim(part);
          if (p.empty()) continue;
          size_t colon = p.rfind(':');
          if (colon == std::string::npos)
            throw SchemaError("behavior entry needs NAME:weight: " + p);
          auto b = behavior_from_string(trim(p.substr(0, colon)));
          if (!b) throw SchemaError("unknown behavior: " + p.substr(0, colon));
          spec.behaviors.emplace_back(*b, std::stod(p.substr(colon + 1)));
        }
      } else {
        throw SchemaError("unknown spec key: " + key);
      }
    } catch (const std::invalid_argument&) {
      throw SchemaError("spec line " + std::to_string(lineno) + ": bad number for " + key);
    } catch (const std::out_of_range&) {
      throw SchemaError("spec line " + std::to_string(lineno) + ": number out of range for " + key);
    }
  }
  if (behaviors_set && spec.behaviors.empty())
    throw SchemaError("spec: behaviors list is empty");
  validate(spec);
  return spec;
}

void write_spec(std::ostream& out, const ScenarioSpec& spec) {
  out << "seed=" << spec.seed << '\n';
  out << "domains=" << spec.domains << '\n';
  out << "resolvers=" << spec.resolvers << '\n';
  out << "control_resolvers=" << spec.control_resolvers << '\n';
  out << "behaviors=";
  for (size_t k = 0; k < spec.behaviors.size(); ++k) {
    if (k) out << ',';
    out << to_string(spec.behaviors[k].first) << ':' << format_double(spec.behaviors[k].second);
  }
  out << '\n';
  out << "mixed_fraction=" << format_double(spec.mixed_fraction) << '\n';
  out << "blocked_domains=" << spec.blocked_domains << '\n';
  out << "misconfigured_domains=" << spec.misconfigured_domains << '\n';
  out << "time_base=" << spec.time_base << '\n';
}

FixtureManifest emit_fixture(const ScenarioSpec& spec, const std::string& out_dir) {
  Scenario sc = generate(spec);
  std::filesystem::create_directories(out_dir);

  auto render = [](auto&& writer) {
    std::ostringstream oss;
    writer(oss);
    return oss.str();
  };

  std::map<std::string, std::string> contents;
  contents["snapshot.jsonl"] =
      render([&](std::ostream& os) { corpus::write_snapshot(os, sc.snapshot); });
  contents["metadata.jsonl"] = render([&](std::ostream& os) { sc.metadata.save(os); });
  contents["fingerprints.jsonl"] =
      render([&](std::ostream& os) { blockpage::save_database(os, sc.fingerprints); });
  contents["roots.pem"] = sc.roots_pem;
  contents["truth.jsonl"] = render([&](std::ostream& os) { save_truth(os, sc.truth); });

  FixtureManifest manifest;
  for (const auto& [name, content] : contents) {
    write_file((std::filesystem::path(out_dir) / name).string(), content);
    manifest.file_hashes[name] = sha256_hex(content);
  }

  nlohmann::json j;
  nlohmann::json files = nlohmann::json::object();
  for (const auto& [name, hash] : manifest.file_hashes) files[name] = hash;
  j["files"] = files;
  j["spec"] = render([&](std::ostream& os) { write_spec(os, spec); });
  write_file((std::filesystem::path(out_dir) / "manifest.json").string(), j.dump(2) + "\n");
  return manifest;
}

std::string to_string(Behavior b) {
  switch (b) {
    case Behavior::CLEAN: return "CLEAN";
    case Behavior::LOCALIZED_CLEAN: return "LOCALIZED_CLEAN";
    case Behavior::SELF_SIGNED_BLOCKPAGE: return "SELF_SIGNED_BLOCKPAGE";
    case Behavior::TRUSTED_ISP_BLOCKPAGE: return "TRUSTED_ISP_BLOCKPAGE";
    case Behavior::BIG_CDN_INJECTION: return "BIG_CDN_INJECTION";
    case Behavior::NXDOMAIN_CENSOR: return "NXDOMAIN_CENSOR";
    case Behavior::CAPTIVE_PORTAL: return "CAPTIVE_PORTAL";
    case Behavior::PRIVATE_IP_CENSOR: return "PRIVATE_IP_CENSOR";
    case Behavior::MISCONFIGURED_DOMAIN: return "MISCONFIGURED_DOMAIN";
    case Behavior::GEOBLOCKING_CDN: return "GEOBLOCKING_CDN";
    case Behavior::CDN_HOSTED_BLOCKPAGE: return "CDN_HOSTED_BLOCKPAGE";
  }
  return "?";
}

std::optional<Behavior> behavior_from_string(std::string_view s) {
  for (Behavior b : kAllBehaviors)
    if (to_string(b) == s) return b;
  return std::nullopt;
}

}  // namespace dnsverdict::simnet
