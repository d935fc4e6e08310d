// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <map>
#include <set>
#include <sstream>
#include <string>
#include <vector>

#include "doctest.h"
#include "json.hpp"
#include "dnsverdict/common.hpp"
#include "dnsverdict/corpus.hpp"
#include "dnsverdict/pipeline.hpp"
#include "dnsverdict/simnet.hpp"
#include "dnsverdict/verdict.hpp"

namespace fs = std::filesystem;
using namespace dnsverdict;

namespace {

// Small enough to run in milliseconds, wide enough to hit every behavior:
// the generator assigns the first resolvers one behavior each before it
// starts sampling weights.
simnet::ScenarioSpec wide_spec() {
  simnet::ScenarioSpec spec;
  spec.seed = 1009;
  spec.domains = 20;
  spec.resolvers = 14;
  spec.control_resolvers = 2;
  spec.behaviors = {
      {simnet::Behavior::CLEAN, 0.10},
      {simnet::Behavior::LOCALIZED_CLEAN, 0.05},
      {simnet::Behavior::SELF_SIGNED_BLOCKPAGE, 0.15},
      {simnet::Behavior::TRUSTED_ISP_BLOCKPAGE, 0.10},
      {simnet::Behavior::BIG_CDN_INJECTION, 0.10},
      {simnet::Behavior::NXDOMAIN_CENSOR, 0.10},
      {simnet::Behavior::CAPTIVE_PORTAL, 0.05},
      {simnet::Behavior::PRIVATE_IP_CENSOR, 0.10},
      {simnet::Behavior::MISCONFIGURED_DOMAIN, 0.05},
      {simnet::Behavior::GEOBLOCKING_CDN, 0.10},
      {simnet::Behavior::CDN_HOSTED_BLOCKPAGE, 0.10},
  };
  spec.mixed_fraction = 0.25;
  spec.blocked_domains = 8;
  spec.misconfigured_domains = 2;
  spec.time_base = 1668470400;
  return spec;
}

pipeline::ClassifyInputs inputs_for(const simnet::Scenario& scenario) {
  pipeline::ClassifyInputs in;
  in.responses = scenario.snapshot;
  in.metadata = scenario.metadata;
  in.fingerprints = scenario.fingerprints;
  in.roots = scenario.roots;
  in.transport = scenario.transport.get();
  in.mode = pipeline::Mode::SIMULATED;
  in.now = scenario.spec.time_base;
  return in;
}

std::string verdicts_text(const std::vector<verdict::Verdict>& verdicts,
                          const std::string& snapshot_id) {
  std::ostringstream out;
  verdict::write_verdicts(out, verdicts, snapshot_id);
  return out.str();
}

struct CliResult {
  int exit_code = -1;
  std::string out;
  std::string err;
};

fs::path fresh_dir(const char* name) {
  fs::path dir = fs::temp_directory_path() / name;
  fs::remove_all(dir);
  fs::create_directories(dir);
  return dir;
}

CliResult run_cli(const std::string& args) {
  const char* bin = std::getenv("DNSVERDICT_BIN");
  REQUIRE(bin != nullptr);
  fs::path dir = fs::temp_directory_path() / "dnsverdict-cli-io";
  fs::create_directories(dir);
  fs::path out_path = dir / "stdout";
  fs::path err_path = dir / "stderr";
  std::string cmd = std::string(bin) + " " + args + " >" + out_path.string() + " 2>" +
                    err_path.string();
  int status = std::system(cmd.c_str());
  CliResult r;
  r.exit_code = WIFEXITED(status) ? WEXITSTATUS(status) : -1;
  r.out = read_file(out_path.string());
  r.err = read_file(err_path.string());
  return r;
}

std::string data_path(const char* name) {
  const char* data = std::getenv("DNSVERDICT_DATA");
  REQUIRE(data != nullptr);
  return std::string(data) + "/" + name;
}

}  // namespace

TEST_CASE("classify reproduces the scenario ground truth") {
  auto scenario = simnet::generate(wide_spec());
  auto out = pipeline::run_classify(inputs_for(scenario));

  // The default snapshot id is the hash of the serialized snapshot.
  std::ostringstream snap;
  corpus::write_snapshot(snap, scenario.snapshot);
  CHECK(out.snapshot_id == sha256_hex(snap.str()));

  // One response verdict per kept test response, in order.
  std::vector<const DnsResponse*> kept_tests;
  for (const auto& r : out.kept) {
    if (!r.is_control) kept_tests.push_back(&r);
  }
  REQUIRE(out.response_verdicts.size() == kept_tests.size());
  for (size_t i = 0; i < kept_tests.size(); ++i) {
    CHECK(out.response_verdicts[i].resolver_ip == kept_tests[i]->resolver_ip);
    CHECK(out.response_verdicts[i].domain == kept_tests[i]->domain);
  }

  // Excluded resolvers never reach classification and match the truth's
  // exclusion reason; every kept test response carries a labeled entry.
  std::set<IpAddr> excluded;
  for (const auto& e : out.exclusions) excluded.insert(e.resolver_ip);
  size_t labeled = 0;
  size_t label_matches = 0;
  std::map<std::string, int> seen_labels;
  for (const auto& [key, entry] : scenario.truth.entries) {
    if (entry.excluded) {
      CHECK(excluded.count(key.first) == 1);
      continue;
    }
    ++labeled;
  }
  for (size_t i = 0; i < kept_tests.size(); ++i) {
    auto it = scenario.truth.entries.find({kept_tests[i]->resolver_ip, kept_tests[i]->domain});
    REQUIRE(it != scenario.truth.entries.end());
    REQUIRE(it->second.label.has_value());
    const verdict::Verdict& v = out.response_verdicts[i];
    if (v.label == *it->second.label) ++label_matches;
    seen_labels[verdict::to_string(v.label)] += 1;

    // Attribution: where the truth names the actor, the verdict must too.
    if (it->second.actor && it->second.actor->name) {
      REQUIRE(v.actor.has_value());
      CHECK(v.actor->name == it->second.actor->name);
      CHECK(v.actor->kind == it->second.actor->kind);
    }
    // Manipulated verdicts always carry an actor with at least a country.
    if (verdict::is_manipulated(v.label)) {
      REQUIRE(v.actor.has_value());
      CHECK(v.actor->country.has_value());
    }
  }
  CHECK(labeled == kept_tests.size());
  CHECK(label_matches == kept_tests.size());

  // The scenario exercises every verdict class.
  CHECK(seen_labels.count("MANIPULATED_BLOCKPAGE"));
  CHECK(seen_labels.count("MANIPULATED_RCODE"));
  CHECK(seen_labels.count("MANIPULATED_PRIVATE_IP"));
  CHECK(seen_labels.count("MANIPULATED_INVALID_CERT"));
  CHECK(seen_labels.count("UNMANIPULATED_MIXED"));
  CHECK(seen_labels.count("UNMANIPULATED_VALID_CERT"));
  CHECK(seen_labels.count("UNMANIPULATED_MALFORMED_DOMAIN"));
}

TEST_CASE("replaying the recorded fetches gives identical verdicts") {
  auto scenario = simnet::generate(wide_spec());
  auto live = pipeline::run_classify(inputs_for(scenario));

  // Round trip the fetches through the archive format, as a real replay
  // would.
  std::stringstream archive;
  probe::write_archive(archive, live.fetches);

  pipeline::ClassifyInputs replay_in;
  replay_in.responses = scenario.snapshot;
  replay_in.metadata = scenario.metadata;
  replay_in.fingerprints = scenario.fingerprints;
  replay_in.roots = scenario.roots;
  replay_in.mode = pipeline::Mode::REPLAY;
  for (auto& f : probe::read_archive(archive)) {
    replay_in.archive.emplace(f.pair, std::move(f));
  }
  auto replay = pipeline::run_classify(replay_in);

  CHECK(replay.snapshot_id == live.snapshot_id);
  CHECK(replay.pair_verdicts == live.pair_verdicts);
  CHECK(replay.response_verdicts == live.response_verdicts);
  CHECK(verdicts_text(replay.response_verdicts, replay.snapshot_id) ==
        verdicts_text(live.response_verdicts, live.snapshot_id));

  // A pair absent from the archive degrades to a connection error, not a
  // crash.
  pipeline::ClassifyInputs starved = replay_in;
  starved.archive.clear();
  auto miss = pipeline::run_classify(starved);
  REQUIRE(!miss.pair_verdicts.empty());
  for (const auto& v : miss.pair_verdicts) {
    if (v.label == verdict::Label::UNKNOWN_CONNECTION_ERROR) {
      REQUIRE(v.evidence.note.has_value());
      CHECK(v.evidence.note->find("not-in-archive") != std::string::npos);
    }
  }
}

TEST_CASE("summary counts add up") {
  auto scenario = simnet::generate(wide_spec());
  auto out = pipeline::run_classify(inputs_for(scenario));
  auto report = pipeline::summarize(out);

  CHECK(report.responses_classified == out.response_verdicts.size());
  CHECK(report.pairs_classified == out.pair_verdicts.size());

  size_t by_label_total = 0;
  for (const auto& [label, n] : report.by_label) by_label_total += n;
  CHECK(by_label_total == report.responses_classified);

  size_t manipulated = 0;
  for (const auto& v : out.response_verdicts) {
    if (verdict::is_manipulated(v.label)) ++manipulated;
  }
  size_t by_country = 0;
  for (const auto& [c, n] : report.manipulated_by_country) by_country += n;
  size_t by_actor = 0;
  for (const auto& [a, n] : report.manipulated_by_actor) by_actor += n;
  CHECK(by_country == manipulated);
  CHECK(by_actor == manipulated);

  size_t exclusions = 0;
  for (const auto& [reason, n] : report.exclusions_by_reason) exclusions += n;
  CHECK(exclusions == out.exclusions.size());

  // Every fingerprint hit cites an id the database actually contains.
  std::set<std::string> ids;
  for (const auto& f : scenario.fingerprints) ids.insert(f.id);
  for (const auto& [id, n] : report.fingerprint_hits) {
    CHECK(ids.count(id) == 1);
    CHECK(n > 0);
  }

  // The JSON rendering parses and carries the same totals.
  auto j = nlohmann::json::parse(pipeline::summary_to_json(report));
  CHECK(j.at("responses_classified").get<size_t>() == report.responses_classified);
  CHECK(j.at("pairs_classified").get<size_t>() == report.pairs_classified);
  CHECK(j.at("by_label").size() == report.by_label.size());

  auto text = pipeline::summary_to_text(report);
  CHECK(text.find("responses classified: ") != std::string::npos);
  CHECK(text.find("verdicts by label:") != std::string::npos);
}

TEST_CASE("policy overrides reach the certificate assessor") {
  auto scenario = simnet::generate(wide_spec());

  // Assessing two years after the scenario's fetch time pushes every
  // synthetic certificate past its window, so nothing can be VALID.
  auto in = inputs_for(scenario);
  in.overrides.reference_time = scenario.spec.time_base + 2 * 365 * 86400LL;
  in.overrides.expiry_tolerance_secs = 0;
  auto out = pipeline::run_classify(in);

  bool saw_valid = false;
  for (const auto& v : out.pair_verdicts) {
    if (v.label == verdict::Label::UNMANIPULATED_VALID_CERT) saw_valid = true;
  }
  CHECK_FALSE(saw_valid);

  // At the native fetch time the clean pairs assess VALID again.
  auto baseline_out = pipeline::run_classify(inputs_for(scenario));
  bool saw_valid_native = false;
  for (const auto& v : baseline_out.pair_verdicts) {
    if (v.label == verdict::Label::UNMANIPULATED_VALID_CERT) saw_valid_native = true;
  }
  CHECK(saw_valid_native);
}

TEST_CASE("simulated mode without a transport is a contract violation") {
  auto scenario = simnet::generate(wide_spec());
  auto in = inputs_for(scenario);
  in.transport = nullptr;
  CHECK_THROWS_AS(pipeline::run_classify(in), ContractViolation);
}

TEST_CASE("cli classify in sim mode writes the full output set") {
  fs::path dir = fresh_dir("dnsverdict-cli-sim");
  fs::path spec_path = dir / "scenario.spec";
  {
    std::ofstream out(spec_path);
    simnet::write_spec(out, wide_spec());
  }

  fs::path run1 = dir / "run1";
  auto r = run_cli("classify --mode sim --spec " + spec_path.string() + " --out " +
                   run1.string());
  CHECK(r.exit_code == 0);
  CHECK(r.out.find("responses classified") != std::string::npos);

  for (const char* name : {"verdicts.jsonl", "pair_verdicts.jsonl", "exclusions.jsonl",
                           "archive.jsonl", "summary.json", "summary.txt"}) {
    CHECK(fs::exists(run1 / name));
  }

  // The verdict files parse, and a second identical run is byte-identical.
  std::string snapshot_id;
  {
    std::ifstream in(run1 / "verdicts.jsonl");
    auto verdicts = verdict::read_verdicts(in, &snapshot_id);
    auto scenario = simnet::generate(wide_spec());
    auto expected = pipeline::run_classify(inputs_for(scenario));
    CHECK(snapshot_id == expected.snapshot_id);
    CHECK(verdicts == expected.response_verdicts);
  }

  fs::path run2 = dir / "run2";
  auto r2 = run_cli("classify --mode sim --spec " + spec_path.string() + " --out " +
                    run2.string());
  CHECK(r2.exit_code == 0);
  for (const char* name : {"verdicts.jsonl", "pair_verdicts.jsonl", "exclusions.jsonl",
                           "archive.jsonl", "summary.json"}) {
    CHECK(read_file((run1 / name).string()) == read_file((run2 / name).string()));
  }

  fs::remove_all(dir);
}

TEST_CASE("cli replay from an emitted fixture matches the sim run") {
  fs::path dir = fresh_dir("dnsverdict-cli-replay");
  fs::path spec_path = dir / "scenario.spec";
  {
    std::ofstream out(spec_path);
    simnet::write_spec(out, wide_spec());
  }

  fs::path fixture = dir / "fixture";
  auto sim_out = dir / "sim";
  auto emitted = run_cli("simulate --spec " + spec_path.string() + " --out " + fixture.string());
  CHECK(emitted.exit_code == 0);
  for (const char* name : {"snapshot.jsonl", "metadata.jsonl", "fingerprints.jsonl", "roots.pem",
                           "truth.jsonl", "manifest.json"}) {
    CHECK(fs::exists(fixture / name));
  }

  auto sim = run_cli("classify --mode sim --spec " + spec_path.string() + " --out " +
                     sim_out.string());
  REQUIRE(sim.exit_code == 0);

  fs::path replay_out = dir / "replay";
  auto replay = run_cli("classify --mode replay --snapshot " + (fixture / "snapshot.jsonl").string() +
                        " --metadata " + (fixture / "metadata.jsonl").string() +
                        " --fingerprints " + (fixture / "fingerprints.jsonl").string() +
                        " --roots " + (fixture / "roots.pem").string() +
                        " --archive " + (sim_out / "archive.jsonl").string() +
                        " --out " + replay_out.string());
  REQUIRE(replay.exit_code == 0);

  CHECK(read_file((sim_out / "verdicts.jsonl").string()) ==
        read_file((replay_out / "verdicts.jsonl").string()));
  CHECK(read_file((sim_out / "pair_verdicts.jsonl").string()) ==
        read_file((replay_out / "pair_verdicts.jsonl").string()));

  fs::remove_all(dir);
}

TEST_CASE("cli rejects incomplete or unacknowledged invocations") {
  // Missing required --out is a usage error.
  auto no_out = run_cli("classify --mode sim");
  CHECK(no_out.exit_code == 2);

  // Replay without its input files names the first missing option.
  fs::path dir = fresh_dir("dnsverdict-cli-errors");
  auto missing = run_cli("classify --mode replay --out " + (dir / "x").string());
  CHECK(missing.exit_code == 2);
  CHECK(missing.err.find("--snapshot") != std::string::npos);

  // Live probing requires the explicit acknowledgement flag. Give it real
  // input files so the guard is what trips, not the file checks.
  fs::path spec_path = dir / "scenario.spec";
  {
    std::ofstream out(spec_path);
    simnet::write_spec(out, wide_spec());
  }
  fs::path fixture = dir / "fixture";
  REQUIRE(run_cli("simulate --spec " + spec_path.string() + " --out " + fixture.string())
              .exit_code == 0);
  auto live = run_cli("classify --mode live --snapshot " + (fixture / "snapshot.jsonl").string() +
                      " --metadata " + (fixture / "metadata.jsonl").string() +
                      " --fingerprints " + (fixture / "fingerprints.jsonl").string() +
                      " --roots " + (fixture / "roots.pem").string() +
                      " --out " + (dir / "live").string());
  CHECK(live.exit_code == 2);
  CHECK(live.err.find("--i-understand-active-probing") != std::string::npos);
  CHECK_FALSE(fs::exists(dir / "live" / "verdicts.jsonl"));

  auto bad_mode = run_cli("classify --mode nonsense --out " + (dir / "y").string());
  CHECK(bad_mode.exit_code == 2);

  fs::remove_all(dir);
}

TEST_CASE("shipped fingerprint database begins with the scenario rows") {
  std::ifstream in(data_path("fingerprints.jsonl"));
  REQUIRE(in.is_open());
  auto shipped = blockpage::load_database(in);
  auto builtin = simnet::scenario_fingerprints();
  REQUIRE(shipped.size() >= builtin.size());
  for (size_t i = 0; i < builtin.size(); ++i) {
    CHECK(shipped[i] == builtin[i]);
  }

  // Serialized forms agree byte for byte, id for id.
  std::ostringstream shipped_text;
  blockpage::save_database(shipped_text, std::vector<blockpage::Fingerprint>(
                                             shipped.begin(), shipped.begin() + builtin.size()));
  std::ostringstream builtin_text;
  blockpage::save_database(builtin_text, builtin);
  CHECK(shipped_text.str() == builtin_text.str());
}

TEST_CASE("shipped actor pools load and cover the known vendor addresses") {
  std::ifstream in(data_path("actor_pools.jsonl"));
  REQUIRE(in.is_open());
  auto pools = verdict::load_pools(in);
  REQUIRE(!pools.empty());

  auto find_pool_with = [&](const char* ip) -> const verdict::ActorPool* {
    auto addr = IpAddr::must_parse(ip);
    for (const auto& p : pools) {
      if (p.ips.count(addr)) return &p;
    }
    return nullptr;
  };
  const auto* opendns = find_pool_with("146.112.61.106");
  REQUIRE(opendns != nullptr);
  CHECK(opendns->actor.name == "OpenDNS");
  const auto* fortinet = find_pool_with("208.91.112.55");
  REQUIRE(fortinet != nullptr);
  CHECK(fortinet->actor.name == "Fortinet");
}
