// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/probe.hpp"

#include <atomic>
#include <istream>
#include <ostream>
#include <set>
#include <thread>

#include "dnsverdict/common.hpp"
#include "json.hpp"

namespace dnsverdict::probe {

FetchResult fetch_pair(const ResolutionPair& pair, Transport& transport, const FetchLimits& limits,
                       std::int64_t now_unix) {
  FetchResult r;
  r.pair = pair;
  r.fetched_at = now_unix;

  ProbeRequest req;
  req.ip = pair.ip;
  req.host = pair.domain;
  req.timeout_secs = limits.timeout_secs;
  req.max_body_bytes = limits.max_body_bytes;

  req.port = 80;
  req.sni.clear();
  HttpOutcome h = transport.get_http(req);
  r.http = std::move(h.page);
  r.http_error = std::move(h.error);
  if (!r.http && !r.http_error) r.http_error = "transport-returned-nothing";

  req.port = 443;
  req.sni = pair.domain;
  TlsOutcome t = transport.get_https(req);
  if (!t.chain.empty()) r.chain = std::move(t.chain);
  r.https_page = std::move(t.page);
  r.https_error = std::move(t.error);
  if (!r.https_page && !r.https_error) r.https_error = "transport-returned-nothing";
  return r;
}

std::vector<FetchResult> fetch_all(std::span<const ResolutionPair> pairs, Transport& transport,
                                   const FetchLimits& limits, std::int64_t now_unix,
                                   FetchAllStats* stats) {
  if (stats) {
    std::set<ResolutionPair> seen;
    for (const auto& p : pairs) {
      if (!seen.insert(p).second) ++stats->duplicate_pairs;
    }
  }

  std::vector<FetchResult> results(pairs.size());
  const int workers = std::max(1, std::min<int>(limits.max_concurrency,
                                                static_cast<int>(pairs.size())));
  std::atomic<size_t> next{0};
  auto work = [&]() {
    while (true) {
      size_t i = next.fetch_add(1);
      if (i >= pairs.size()) return;
      results[i] = fetch_pair(pairs[i], transport, limits, now_unix);
    }
  };
  if (workers == 1) {
    work();
  } else {
    std::vector<std::thread> threads;
    threads.reserve(static_cast<size_t>(workers));
    for (int w = 0; w < workers; ++w) threads.emplace_back(work);
    for (auto& t : threads) t.join();
  }
  return results;
}

namespace {

nlohmann::json page_to_json(const HttpPage& p) {
  nlohmann::json j;
  j["status"] = p.status;
  nlohmann::json hs = nlohmann::json::array();
  for (const auto& [k, v] : p.headers) hs.push_back({k, v});
  j["headers"] = hs;
  j["body_b64"] = base64_encode(p.body);
  j["body_truncated"] = p.body_truncated;
  return j;
}

HttpPage page_from_json(const nlohmann::json& j) {
  HttpPage p;
  p.status = j.at("status").get<int>();
  for (const auto& h : j.at("headers")) {
    p.headers.emplace_back(h.at(0).get<std::string>(), h.at(1).get<std::string>());
  }
  auto body = base64_decode(j.at("body_b64").get<std::string>());
  if (!body) throw SchemaError("bad body_b64 in fetch archive");
  p.body = std::move(*body);
  p.body_truncated = j.at("body_truncated").get<bool>();
  return p;
}

}  // namespace

void write_archive(std::ostream& out, std::span<const FetchResult> results) {
  for (const auto& r : results) {
    nlohmann::json j;
    j["domain"] = r.pair.domain;
    j["ip"] = r.pair.ip.to_string();
    j["fetched_at"] = r.fetched_at;
    j["http"] = r.http ? page_to_json(*r.http) : nlohmann::json(nullptr);
    j["http_error"] = r.http_error ? nlohmann::json(*r.http_error) : nlohmann::json(nullptr);
    j["https_page"] = r.https_page ? page_to_json(*r.https_page) : nlohmann::json(nullptr);
    j["https_error"] = r.https_error ? nlohmann::json(*r.https_error) : nlohmann::json(nullptr);
    if (r.chain) {
      nlohmann::json chain = nlohmann::json::array();
      for (const auto& der : *r.chain) chain.push_back(base64_encode(der));
      j["chain"] = chain;
    } else {
      j["chain"] = nullptr;
    }
    out << j.dump() << '\n';
  }
}

std::vector<FetchResult> read_archive(std::istream& in) {
  std::vector<FetchResult> out;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      FetchResult r;
      r.pair.domain = j.at("domain").get<std::string>();
      r.pair.ip = IpAddr::must_parse(j.at("ip").get<std::string>());
      r.fetched_at = j.at("fetched_at").get<std::int64_t>();
      if (!j.at("http").is_null()) r.http = page_from_json(j["http"]);
      if (!j.at("http_error").is_null()) r.http_error = j["http_error"].get<std::string>();
      if (!j.at("https_page").is_null()) r.https_page = page_from_json(j["https_page"]);
      if (!j.at("https_error").is_null()) r.https_error = j["https_error"].get<std::string>();
      if (!j.at("chain").is_null()) {
        std::vector<std::vector<std::uint8_t>> chain;
        for (const auto& b64 : j["chain"]) {
          auto der = base64_decode(b64.get<std::string>());
          if (!der) throw SchemaError("bad chain base64");
          chain.push_back(std::move(*der));
        }
        r.chain = std::move(chain);
      }
      out.push_back(std::move(r));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("fetch archive line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  return out;
}

}  // namespace dnsverdict::probe
