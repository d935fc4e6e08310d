// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <filesystem>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "dnsverdict/common.hpp"
#include "dnsverdict/corpus.hpp"
#include "dnsverdict/simnet.hpp"

using namespace dnsverdict;
using namespace dnsverdict::simnet;

namespace {

ScenarioSpec small_spec() {
  ScenarioSpec spec;
  spec.seed = 321;
  spec.domains = 12;
  spec.resolvers = 8;
  spec.control_resolvers = 2;
  spec.behaviors = {
      {Behavior::CLEAN, 0.4},
      {Behavior::SELF_SIGNED_BLOCKPAGE, 0.2},
      {Behavior::NXDOMAIN_CENSOR, 0.2},
      {Behavior::PRIVATE_IP_CENSOR, 0.2},
  };
  spec.mixed_fraction = 0.2;
  spec.blocked_domains = 5;
  spec.misconfigured_domains = 1;
  spec.time_base = 1668470400;
  return spec;
}

std::string serialize_scenario(const Scenario& s) {
  std::ostringstream out;
  corpus::write_snapshot(out, s.snapshot);
  s.metadata.save(out);
  save_truth(out, s.truth);
  blockpage::save_database(out, s.fingerprints);
  out << s.roots_pem;
  return out.str();
}

}  // namespace

TEST_CASE("generation is a pure function of the spec") {
  auto spec = small_spec();
  auto first = serialize_scenario(generate(spec));
  auto second = serialize_scenario(generate(spec));
  CHECK(first == second);

  auto reseeded = spec;
  reseeded.seed = 322;
  CHECK(serialize_scenario(generate(reseeded)) != first);
}

TEST_CASE("every test response has exactly one truth entry") {
  auto scenario = generate(small_spec());
  std::set<std::pair<IpAddr, std::string>> seen;
  for (const auto& r : scenario.snapshot) {
    if (r.is_control) continue;
    auto key = std::make_pair(r.resolver_ip, r.domain);
    CHECK(seen.insert(key).second);  // one response per (resolver, domain)
    auto it = scenario.truth.entries.find(key);
    REQUIRE(it != scenario.truth.entries.end());
    CHECK(it->second.label.has_value() != it->second.excluded.has_value());
  }
  // No truth entries for responses that were never emitted.
  CHECK(scenario.truth.entries.size() == seen.size());
}

TEST_CASE("scenario artifacts are internally consistent") {
  auto scenario = generate(small_spec());

  // Controls exist and resolve with clean answers.
  size_t control_rows = 0;
  for (const auto& r : scenario.snapshot) {
    if (r.is_control) ++control_rows;
  }
  CHECK(control_rows > 0);

  // Roots parse and the PEM matches the parsed store.
  REQUIRE_FALSE(scenario.roots.empty());
  std::istringstream pem(scenario.roots_pem);
  auto reparsed = certval::load_pem_bundle(pem);
  REQUIRE(reparsed.size() == scenario.roots.size());
  CHECK(reparsed[0].fingerprint == scenario.roots[0].fingerprint);

  // The scenario's fingerprints are a valid database.
  blockpage::validate_database(scenario.fingerprints);
  CHECK(scenario.fingerprints == scenario_fingerprints());

  // Every public answer IP has a metadata row, so heuristics have data to
  // read. Private forged answers have none: there is no AS or PTR data for
  // private space.
  for (const auto& r : scenario.snapshot) {
    for (const auto& a : r.answers) {
      if (a.is_private()) {
        CHECK(scenario.metadata.lookup(a) == nullptr);
      } else {
        CHECK(scenario.metadata.lookup(a) != nullptr);
      }
    }
  }
}

TEST_CASE("labels cover the advertised behaviors") {
  auto spec = small_spec();
  auto scenario = generate(spec);
  std::set<std::string> labels;
  for (const auto& [key, entry] : scenario.truth.entries) {
    (void)key;
    if (entry.label) labels.insert(verdict::to_string(*entry.label));
  }
  // Self-signed blockpages, NXDOMAIN censoring and private-IP censoring must
  // all be present somewhere in the truth.
  CHECK(labels.contains("MANIPULATED_BLOCKPAGE"));
  CHECK(labels.contains("MANIPULATED_RCODE"));
  CHECK(labels.contains("MANIPULATED_PRIVATE_IP"));
  CHECK(labels.contains("UNMANIPULATED_CONTROL_IP"));
}

TEST_CASE("spec files round trip") {
  auto spec = small_spec();
  std::ostringstream out;
  write_spec(out, spec);
  std::istringstream in(out.str());
  CHECK(parse_spec(in) == spec);

  std::istringstream commented("# comment\nseed=9\ndomains=4\nresolvers=3\ncontrol_resolvers=1\n"
                               "behaviors=CLEAN:0.5,NXDOMAIN_CENSOR:0.5\nmixed_fraction=0\n"
                               "blocked_domains=2\nmisconfigured_domains=0\ntime_base=100\n");
  auto parsed = parse_spec(commented);
  CHECK(parsed.seed == 9);
  CHECK(parsed.behaviors.size() == 2);
  CHECK(parsed.behaviors[1].first == Behavior::NXDOMAIN_CENSOR);

  std::istringstream unknown("seed=9\nnot_a_key=1\n");
  CHECK_THROWS_AS(parse_spec(unknown), SchemaError);
  std::istringstream bad_behavior("behaviors=NOT_A_BEHAVIOR:1.0\n");
  CHECK_THROWS_AS(parse_spec(bad_behavior), SchemaError);
}

TEST_CASE("spec validation rejects unusable configurations") {
  auto good = small_spec();
  validate(good);

  auto broken = good;
  broken.domains = 0;
  CHECK_THROWS_AS(validate(broken), SchemaError);

  broken = good;
  broken.resolvers = 0;
  CHECK_THROWS_AS(validate(broken), SchemaError);

  broken = good;
  broken.control_resolvers = 0;
  CHECK_THROWS_AS(validate(broken), SchemaError);

  broken = good;
  broken.behaviors = {{Behavior::CLEAN, 0.7}};
  CHECK_THROWS_AS(validate(broken), SchemaError);  // weights must sum to one

  broken = good;
  broken.behaviors = {{Behavior::CLEAN, 1.5}, {Behavior::NXDOMAIN_CENSOR, -0.5}};
  CHECK_THROWS_AS(validate(broken), SchemaError);

  broken = good;
  broken.resolvers = 2;  // fewer resolvers than listed behaviors
  CHECK_THROWS_AS(validate(broken), SchemaError);

  broken = good;
  broken.mixed_fraction = 1.5;
  CHECK_THROWS_AS(validate(broken), SchemaError);

  broken = good;
  broken.blocked_domains = 12;  // leaves no plain domain
  CHECK_THROWS_AS(validate(broken), SchemaError);
}

TEST_CASE("sim transport serves exact hosts, wildcards, and errors") {
  SimTransport transport;
  IpAddr a = IpAddr::must_parse("198.51.100.1");

  SimTransport::Endpoint exact;
  probe::HttpPage page;
  page.status = 200;
  page.body = {'e', 'x'};
  exact.http_page = page;
  transport.add(a, "site.example", exact);

  SimTransport::Endpoint wildcard;
  page.body = {'w', 'c'};
  wildcard.http_page = page;
  wildcard.https_error = "tls-handshake-failed";
  transport.add(a, "*", wildcard);

  probe::ProbeRequest req;
  req.ip = a;
  req.port = 80;
  req.host = "site.example";
  auto exact_hit = transport.get_http(req);
  REQUIRE(exact_hit.page.has_value());
  CHECK(utf8_lossy(exact_hit.page->body) == "ex");

  req.host = "other.example";
  auto wild_hit = transport.get_http(req);
  REQUIRE(wild_hit.page.has_value());
  CHECK(utf8_lossy(wild_hit.page->body) == "wc");

  req.ip = IpAddr::must_parse("198.51.100.2");
  auto missing = transport.get_http(req);
  CHECK_FALSE(missing.page.has_value());
  CHECK(missing.error.has_value());

  req.ip = a;
  req.port = 443;
  req.sni = "other.example";
  auto https = transport.get_https(req);
  CHECK(https.chain.empty());
  CHECK(https.error == "tls-handshake-failed");

  auto log = transport.request_log();
  CHECK(log.size() == 4);
}

TEST_CASE("truth files round trip") {
  GroundTruth truth;
  TruthEntry labeled;
  labeled.label = verdict::Label::MANIPULATED_BLOCKPAGE;
  verdict::Actor actor;
  actor.kind = verdict::ActorKind::NATIONAL;
  actor.name = "Internet Positif";
  actor.country = "ID";
  labeled.actor = actor;
  truth.entries[{IpAddr::must_parse("203.0.113.1"), "a.example"}] = labeled;

  TruthEntry excluded;
  excluded.excluded = corpus::ExclusionReason::SAME_IP_SET;
  truth.entries[{IpAddr::must_parse("203.0.113.2"), "b.example"}] = excluded;

  std::ostringstream out;
  save_truth(out, truth);
  std::istringstream in(out.str());
  auto loaded = load_truth(in);
  CHECK(loaded == truth);
}

TEST_CASE("fixture emission writes hashed artifacts") {
  namespace fs = std::filesystem;
  auto spec = small_spec();
  fs::path dir = fs::temp_directory_path() / "dnsverdict-simnet-test";
  fs::remove_all(dir);
  fs::create_directories(dir);

  auto manifest = emit_fixture(spec, dir.string());
  const char* files[] = {"snapshot.jsonl", "metadata.jsonl", "fingerprints.jsonl", "roots.pem",
                         "truth.jsonl"};
  for (const char* name : files) {
    auto path = dir / name;
    REQUIRE(fs::exists(path));
    auto content = read_file(path.string());
    REQUIRE(manifest.file_hashes.contains(name));
    CHECK(manifest.file_hashes.at(name) == sha256_hex(content));
  }
  CHECK(fs::exists(dir / "manifest.json"));

  // The artifacts parse with the production loaders.
  {
    std::istringstream in(read_file((dir / "snapshot.jsonl").string()));
    auto snapshot = corpus::parse_snapshot(in);
    CHECK(snapshot.size() == generate(spec).snapshot.size());
  }
  {
    std::istringstream in(read_file((dir / "truth.jsonl").string()));
    CHECK(load_truth(in).entries == generate(spec).truth.entries);
  }

  // Emitting the same spec again produces identical bytes.
  fs::path dir2 = fs::temp_directory_path() / "dnsverdict-simnet-test-2";
  fs::remove_all(dir2);
  fs::create_directories(dir2);
  auto manifest2 = emit_fixture(spec, dir2.string());
  CHECK(manifest.file_hashes == manifest2.file_hashes);

  fs::remove_all(dir);
  fs::remove_all(dir2);
}

TEST_CASE("behavior names round trip") {
  for (Behavior b : kAllBehaviors) {
    auto back = behavior_from_string(to_string(b));
    REQUIRE(back.has_value());
    CHECK(*back == b);
  }
  CHECK_FALSE(behavior_from_string("NOT_A_BEHAVIOR").has_value());
}
