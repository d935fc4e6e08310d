// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/record.hpp"

#include <istream>
#include <ostream>

#include "dnsverdict/common.hpp"
#include "json.hpp"

namespace dnsverdict {

const IpMetadata* IpMetadataTable::lookup(const IpAddr& ip) const {
  auto it = rows_.find(ip);
  return it == rows_.end() ? nullptr : &it->second;
}

void IpMetadataTable::put(const IpAddr& ip, IpMetadata meta) {
  rows_[ip] = std::move(meta);
}

namespace {

template <typename T>
void put_opt(nlohmann::json& j, const char* key, const std::optional<T>& v) {
  if (v)
    j[key] = *v;
  else
    j[key] = nullptr;
}

template <typename T>
std::optional<T> get_opt(const nlohmann::json& j, const char* key) {
  auto it = j.find(key);
  if (it == j.end() || it->is_null()) return std::nullopt;
  return it->get<T>();
}

}  // namespace

IpMetadataTable IpMetadataTable::load(std::istream& in) {
  IpMetadataTable table;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
    } catch (const nlohmann::json::parse_error& e) {
      throw SchemaError("metadata line " + std::to_string(lineno) + ": " + e.what());
    }
    if (!j.contains("ip"))
      throw SchemaError("metadata line " + std::to_string(lineno) + ": missing ip");
    IpAddr ip = IpAddr::must_parse(j["ip"].get<std::string>());
    IpMetadata meta;
    meta.asn = get_opt<std::int64_t>(j, "asn");
    meta.as_name = get_opt<std::string>(j, "as_name");
    meta.ptr = get_opt<std::string>(j, "ptr");
    meta.cdn = get_opt<std::string>(j, "cdn");
    meta.http_hash = get_opt<std::string>(j, "http_hash");
    meta.cert_hash = get_opt<std::string>(j, "cert_hash");
    table.put(ip, std::move(meta));
  }
  return table;
}

void IpMetadataTable::save(std::ostream& out) const {
  for (const auto& [ip, meta] : rows_) {
    nlohmann::json j;
    j["ip"] = ip.to_string();
    put_opt(j, "asn", meta.asn);
    put_opt(j, "as_name", meta.as_name);
    put_opt(j, "ptr", meta.ptr);
    put_opt(j, "cdn", meta.cdn);
    put_opt(j, "http_hash", meta.http_hash);
    put_opt(j, "cert_hash", meta.cert_hash);
    out << j.dump() << '\n';
  }
}

}  // namespace dnsverdict
