// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <sstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"

#include "dnsverdict/baseline.hpp"
#include "dnsverdict/blockpage.hpp"
#include "dnsverdict/certval.hpp"
#include "dnsverdict/common.hpp"
#include "dnsverdict/corpus.hpp"
#include "dnsverdict/live_transport.hpp"
#include "dnsverdict/pipeline.hpp"
#include "dnsverdict/probe.hpp"
#include "dnsverdict/ratelimit.hpp"
#include "dnsverdict/simnet.hpp"
#include "dnsverdict/verdict.hpp"

namespace {

using namespace dnsverdict;

std::ifstream open_input(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in.is_open()) throw SchemaError("cannot read " + path);
  return in;
}

void write_text(const std::string& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary);
  if (!out.is_open()) throw std::runtime_error("cannot write " + path);
  out << content;
  if (!out.good()) throw std::runtime_error("short write to " + path);
}

struct ClassifyArgs {
  std::string mode = "replay";
  std::string spec_path;
  std::uint64_t seed = 0;
  bool seed_set = false;
  std::string snapshot_path;
  std::string metadata_path;
  std::string fingerprints_path;
  std::string roots_path;
  std::string archive_path;
  std::string pools_path;
  std::string out_dir;
  double timeout_secs = 10.0;
  std::size_t max_body_bytes = 512 * 1024;
  int concurrency = 8;
  double per_ip_rate = 0.0;
  std::int64_t expiry_tolerance = certval::kDefaultExpiryToleranceSecs;
  bool expiry_set = false;
  bool no_deprecated_root_tolerance = false;
  std::int64_t reference_time = 0;
  bool reference_time_set = false;
  bool ack_live = false;
};

void add_classify_options(CLI::App* cmd, ClassifyArgs& a) {
  cmd->add_option("--mode", a.mode, "sim, replay, or live")
      ->check(CLI::IsMember({"sim", "replay", "live"}));
  cmd->add_option("--spec", a.spec_path, "scenario spec file (sim mode)");
  cmd->add_option("--seed", a.seed, "override the scenario seed (sim mode)");
  cmd->add_option("--snapshot", a.snapshot_path, "DNS snapshot, one response per line");
  cmd->add_option("--metadata", a.metadata_path, "per-IP metadata records");
  cmd->add_option("--fingerprints", a.fingerprints_path, "blockpage fingerprint database");
  cmd->add_option("--roots", a.roots_path, "trusted root bundle (PEM)");
  cmd->add_option("--archive", a.archive_path, "recorded fetches to replay");
  cmd->add_option("--pools", a.pools_path, "actor IP pool records");
  cmd->add_option("--out", a.out_dir, "output directory")->required();
  cmd->add_option("--timeout", a.timeout_secs, "per-request timeout, seconds");
  cmd->add_option("--max-body", a.max_body_bytes, "page body byte cap");
  cmd->add_option("--concurrency", a.concurrency, "fetch worker count");
  cmd->add_option("--per-ip-rate", a.per_ip_rate, "max requests per second per IP (live mode)");
  cmd->add_option("--expiry-tolerance", a.expiry_tolerance,
                  "seconds past expiry still accepted as valid");
  cmd->add_flag("--no-deprecated-root-tolerance", a.no_deprecated_root_tolerance,
                "treat expired cross-signed roots as untrusted");
  cmd->add_option("--reference-time", a.reference_time,
                  "assess every chain at this unix time instead of its fetch time");
  cmd->add_flag("--i-understand-active-probing", a.ack_live,
                "required for live mode; probes send real traffic to resolved IPs");
}

void finish_classify_args(CLI::App* cmd, ClassifyArgs& a) {
  a.seed_set = cmd->count("--seed") > 0;
  a.expiry_set = cmd->count("--expiry-tolerance") > 0;
  a.reference_time_set = cmd->count("--reference-time") > 0;
}

simnet::ScenarioSpec load_spec(const ClassifyArgs& a) {
  simnet::ScenarioSpec spec;
  if (!a.spec_path.empty()) {
    auto in = open_input(a.spec_path);
    spec = simnet::parse_spec(in);
  }
  if (a.seed_set) spec.seed = a.seed;
  return spec;
}

// Keeps whichever transport the mode needs alive for the duration of a run.
struct PreparedRun {
  pipeline::ClassifyInputs inputs;
  std::optional<simnet::Scenario> scenario;
  std::unique_ptr<SystemClock> clock;
  std::unique_ptr<probe::LiveTransport> live;
};

void require_path(const std::string& path, const char* flag) {
  if (path.empty()) throw SchemaError(std::string("missing required option ") + flag);
}

PreparedRun prepare_run(const ClassifyArgs& a) {
  PreparedRun run;
  pipeline::ClassifyInputs& in = run.inputs;
  in.limits.timeout_secs = a.timeout_secs;
  in.limits.max_body_bytes = a.max_body_bytes;
  in.limits.max_concurrency = a.concurrency;
  in.limits.per_ip_rate = a.per_ip_rate;
  if (a.expiry_set) in.overrides.expiry_tolerance_secs = a.expiry_tolerance;
  if (a.no_deprecated_root_tolerance) in.overrides.deprecated_root_tolerance = false;
  if (a.reference_time_set) in.overrides.reference_time = a.reference_time;

  if (!a.pools_path.empty()) {
    auto pin = open_input(a.pools_path);
    in.pools = verdict::load_pools(pin);
  }

  if (a.mode == "sim") {
    run.scenario = simnet::generate(load_spec(a));
    in.responses = run.scenario->snapshot;
    in.metadata = run.scenario->metadata;
    in.fingerprints = run.scenario->fingerprints;
    in.roots = run.scenario->roots;
    in.transport = run.scenario->transport.get();
    in.mode = pipeline::Mode::SIMULATED;
    in.now = run.scenario->spec.time_base;
    return run;
  }

  require_path(a.snapshot_path, "--snapshot");
  require_path(a.metadata_path, "--metadata");
  require_path(a.fingerprints_path, "--fingerprints");
  require_path(a.roots_path, "--roots");
  {
    auto s = open_input(a.snapshot_path);
    in.responses = corpus::parse_snapshot(s);
  }
  {
    auto s = open_input(a.metadata_path);
    in.metadata = IpMetadataTable::load(s);
  }
  {
    auto s = open_input(a.fingerprints_path);
    in.fingerprints = blockpage::load_database(s);
  }
  {
    auto s = open_input(a.roots_path);
    in.roots = certval::load_pem_bundle(s);
  }
  in.now = static_cast<std::int64_t>(std::time(nullptr));

  if (a.mode == "replay") {
    require_path(a.archive_path, "--archive");
    auto s = open_input(a.archive_path);
    for (auto& f : probe::read_archive(s)) {
      in.archive.emplace(f.pair, std::move(f));  // first record wins
    }
    in.mode = pipeline::Mode::REPLAY;
    return run;
  }

  // live
  if (!a.ack_live) {
    throw SchemaError(
        "live mode probes every resolved IP over HTTP and HTTPS; "
        "pass --i-understand-active-probing to confirm");
  }
  run.clock = std::make_unique<SystemClock>();
  run.live = std::make_unique<probe::LiveTransport>(*run.clock, a.per_ip_rate);
  in.transport = run.live.get();
  in.mode = pipeline::Mode::LIVE;
  return run;
}

void write_classify_outputs(const std::string& out_dir, const pipeline::ClassifyOutput& output) {
  std::filesystem::create_directories(out_dir);
  auto path = [&](const char* name) { return out_dir + "/" + name; };

  {
    std::ostringstream s;
    verdict::write_verdicts(s, output.response_verdicts, output.snapshot_id);
    write_text(path("verdicts.jsonl"), s.str());
  }
  {
    std::ostringstream s;
    verdict::write_verdicts(s, output.pair_verdicts, output.snapshot_id);
    write_text(path("pair_verdicts.jsonl"), s.str());
  }
  {
    std::ostringstream s;
    for (const auto& ex : output.exclusions) {
      nlohmann::json j;
      j["resolver_ip"] = ex.resolver_ip.to_string();
      j["reason"] = corpus::to_string(ex.reason);
      s << j.dump() << "\n";
    }
    write_text(path("exclusions.jsonl"), s.str());
  }
  {
    std::ostringstream s;
    probe::write_archive(s, output.fetches);
    write_text(path("archive.jsonl"), s.str());
  }
  auto report = pipeline::summarize(output);
  write_text(path("summary.json"), pipeline::summary_to_json(report));
  write_text(path("summary.txt"), pipeline::summary_to_text(report));
}

int run_simulate(const ClassifyArgs& a) {
  auto spec = load_spec(a);
  std::filesystem::create_directories(a.out_dir);
  auto manifest = simnet::emit_fixture(spec, a.out_dir);
  std::cout << "wrote " << manifest.file_hashes.size() + 1 << " files to " << a.out_dir << "\n";
  return 0;
}

int run_classify(const ClassifyArgs& a) {
  auto run = prepare_run(a);
  auto output = pipeline::run_classify(run.inputs);
  write_classify_outputs(a.out_dir, output);
  std::cout << pipeline::summary_to_text(pipeline::summarize(output));
  std::cout << "outputs in " << a.out_dir << "\n";
  return 0;
}

int run_compare(const ClassifyArgs& a, int theta) {
  auto run = prepare_run(a);
  auto output = pipeline::run_classify(run.inputs);
  write_classify_outputs(a.out_dir, output);

  auto report = baseline::compare(output.consistency, output.pair_verdicts);

  std::map<std::string, baseline::DomainResolutions> domain_resolutions;
  for (const auto& r : output.kept) {
    if (r.is_control) continue;
    auto& d = domain_resolutions[r.domain];
    for (const auto& ip : r.answers) d.test_ips.insert(ip);
  }
  for (auto& [domain, d] : domain_resolutions) {
    auto it = output.control.control_asns.find(domain);
    d.control_as_count = it == output.control.control_asns.end() ? 0 : it->second.size();
  }

  nlohmann::json j;
  j["pairs"] = {
      {"total", report.total},
      {"agreement", report.agreement_count},
      {"false_positive", report.false_positive_count},
      {"false_negative", report.false_negative_count},
      {"unconfirmed", report.unconfirmed_count},
      {"flagged", report.flagged_count},
      {"manipulated", report.manipulated_count},
      {"fp_rate_vs_flagged", report.fp_rate},
      {"fn_rate_vs_manipulated", report.fn_rate},
      {"fp_share_of_total", report.total ? double(report.false_positive_count) / double(report.total) : 0.0},
      {"fn_share_of_total", report.total ? double(report.false_negative_count) / double(report.total) : 0.0},
  };
  nlohmann::json breakdown = nlohmann::json::object();
  for (const auto& [m, n] : report.fn_heuristic_breakdown) breakdown[verdict::to_string(m)] = n;
  j["pairs"]["fn_heuristic_breakdown"] = breakdown;

  nlohmann::json sweep = nlohmann::json::array();
  for (int t = 1; t <= 10; ++t) {
    auto flagged = baseline::as_threshold(domain_resolutions, baseline::ThresholdConfig{t});
    sweep.push_back({{"theta", t}, {"flagged_domains", flagged.size()}});
  }
  auto at_theta = baseline::as_threshold(domain_resolutions, baseline::ThresholdConfig{theta});
  j["domains"] = {
      {"theta", theta},
      {"flagged", std::vector<std::string>(at_theta.begin(), at_theta.end())},
      {"sweep", sweep},
  };
  write_text(a.out_dir + "/compare.json", j.dump(2) + "\n");

  std::ostringstream text;
  text << "pairs compared        " << report.total << "\n"
       << "agreement             " << report.agreement_count << "\n"
       << "false positives       " << report.false_positive_count << " (rate vs flagged "
       << report.fp_rate << ")\n"
       << "false negatives       " << report.false_negative_count << " (rate vs manipulated "
       << report.fn_rate << ")\n"
       << "unconfirmed           " << report.unconfirmed_count << "\n";
  if (!report.fn_heuristic_breakdown.empty()) {
    text << "missed because a control heuristic still matched:\n";
    for (const auto& [m, n] : report.fn_heuristic_breakdown)
      text << "  " << verdict::to_string(m) << "  " << n << "\n";
  }
  text << "domains flagged at theta=" << theta << "  " << at_theta.size() << "\n";
  write_text(a.out_dir + "/compare.txt", text.str());
  std::cout << text.str();
  std::cout << "outputs in " << a.out_dir << "\n";
  return 0;
}

int run_cluster(const std::string& archive_path, const std::string& out_dir, double tolerance,
                std::size_t min_cluster) {
  auto in = open_input(archive_path);
  auto fetches = probe::read_archive(in);

  std::vector<std::pair<std::string, probe::HttpPage>> pages;
  for (const auto& f : fetches) {
    std::string key = f.pair.domain + "/" + f.pair.ip.to_string();
    if (f.http) pages.emplace_back(key + "#http", *f.http);
    if (f.https_page) pages.emplace_back(key + "#https", *f.https_page);
  }

  auto report = blockpage::cluster_pages(pages, tolerance, min_cluster);
  auto drafts = blockpage::export_candidates(report, pages);

  std::filesystem::create_directories(out_dir);
  nlohmann::json j;
  j["params"] = {{"length_tolerance", report.params.length_tolerance},
                 {"min_cluster_size", report.params.min_cluster_size}};
  j["dropped_clusters"] = report.dropped_clusters;
  j["dropped_pages"] = report.dropped_pages;
  nlohmann::json arr = nlohmann::json::array();
  for (const auto& c : report.clusters) {
    arr.push_back({{"representative",
                    {{"length_bytes", c.representative.length_bytes},
                     {"tag_sequence_hash", c.representative.tag_sequence_hash},
                     {"title", c.representative.title}}},
                   {"members", c.members}});
  }
  j["clusters"] = arr;
  write_text(out_dir + "/clusters.json", j.dump(2) + "\n");

  std::ostringstream s;
  for (const auto& d : drafts) {
    nlohmann::json dj;
    dj["id"] = d.fingerprint.id;
    dj["category"] = blockpage::to_string(d.fingerprint.category);
    dj["where"] = blockpage::to_string(d.fingerprint.where);
    dj["pattern"] = d.fingerprint.pattern;
    dj["pattern_kind"] = blockpage::to_string(d.fingerprint.pattern_kind);
    dj["country"] = d.fingerprint.country ? nlohmann::json(*d.fingerprint.country)
                                          : nlohmann::json(nullptr);
    dj["actor"] =
        d.fingerprint.actor ? nlohmann::json(*d.fingerprint.actor) : nlohmann::json(nullptr);
    dj["source"] = d.fingerprint.source;
    dj["needs_human"] = d.needs_human;
    s << dj.dump() << "\n";
  }
  write_text(out_dir + "/drafts.jsonl", s.str());

  std::cout << "clusters " << report.clusters.size() << ", drafts " << drafts.size()
            << ", outputs in " << out_dir << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"DNS manipulation detection: probe resolved IPs, judge certificates, "
               "fingerprint blockpages, attribute actors"};
  app.require_subcommand(1);

  ClassifyArgs sim_args;
  auto* sim = app.add_subcommand("simulate", "generate a synthetic resolver scenario fixture");
  sim->add_option("--spec", sim_args.spec_path, "scenario spec file");
  sim->add_option("--seed", sim_args.seed, "override the scenario seed");
  sim->add_option("--out", sim_args.out_dir, "output directory")->required();

  ClassifyArgs classify_args;
  auto* classify = app.add_subcommand("classify", "classify a snapshot into verdicts");
  add_classify_options(classify, classify_args);

  ClassifyArgs compare_args;
  int theta = 3;
  auto* compare = app.add_subcommand(
      "compare", "classify, then score the consistency heuristics against the verdicts");
  add_classify_options(compare, compare_args);
  compare->add_option("--theta", theta, "AS-count threshold for domain flagging");

  std::string cluster_archive, cluster_out;
  double cluster_tolerance = 0.05;
  std::size_t cluster_min = 5;
  auto* cluster =
      app.add_subcommand("cluster", "group archived pages and draft fingerprint candidates");
  cluster->add_option("--archive", cluster_archive, "recorded fetches")->required();
  cluster->add_option("--out", cluster_out, "output directory")->required();
  cluster->add_option("--tolerance", cluster_tolerance, "relative page length tolerance");
  cluster->add_option("--min-cluster", cluster_min, "smallest cluster worth drafting");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    int code = app.exit(e);
    return code == 0 ? 0 : 2;
  }

  try {
    if (sim->parsed()) {
      sim_args.seed_set = sim->count("--seed") > 0;
      return run_simulate(sim_args);
    }
    if (classify->parsed()) {
      finish_classify_args(classify, classify_args);
      return run_classify(classify_args);
    }
    if (compare->parsed()) {
      finish_classify_args(compare, compare_args);
      return run_compare(compare_args, theta);
    }
    if (cluster->parsed()) return run_cluster(cluster_archive, cluster_out, cluster_tolerance, cluster_min);
  } catch (const SchemaError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 2;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
