// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/blockpage.hpp"

#include <algorithm>
#include <istream>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <ostream>
#include <regex>
#include <set>

#include "dnsverdict/common.hpp"
#include "json.hpp"

namespace dnsverdict::blockpage {

namespace {

constexpr size_t kExcerptCap = 200;

// Compiled regexes are memoized per pattern; databases are small but pages
// number in the thousands.
std::shared_ptr<const std::regex> compiled(const std::string& pattern) {
  static std::mutex mu;
  static std::map<std::string, std::shared_ptr<const std::regex>> cache;
  std::lock_guard<std::mutex> lock(mu);
  auto it = cache.find(pattern);
  if (it != cache.end()) return it->second;
  auto re = std::make_shared<const std::regex>(pattern, std::regex::ECMAScript);
  cache.emplace(pattern, re);
  return re;
}

std::string clip(std::string s) {
  if (s.size() > kExcerptCap) s.resize(kExcerptCap);
  return s;
}

// Returns the matched excerpt, or nullopt.
std::optional<std::string> pattern_hits(const Fingerprint& fp, const std::string& text) {
  if (fp.pattern_kind == PatternKind::SUBSTRING) {
    if (fp.pattern.empty()) return std::nullopt;
    if (text.find(fp.pattern) != std::string::npos) return clip(fp.pattern);
    return std::nullopt;
  }
  std::smatch m;
  if (std::regex_search(text, m, *compiled(fp.pattern))) return clip(m.str(0));
  return std::nullopt;
}

std::string header_lines(const probe::HttpPage& page) {
  std::string out;
  for (const auto& [k, v] : page.headers) {
    out += k;
    out += ": ";
    out += v;
    out += '\n';
  }
  return out;
}

bool is_tag_name_start(char c) {
  return (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z');
}

bool is_tag_name_char(char c) {
  return is_tag_name_start(c) || (c >= '0' && c <= '9') || c == '-' || c == ':';
}

}  // namespace

std::vector<std::string> tag_sequence(std::string_view html) {
  std::vector<std::string> tags;
  size_t i = 0;
  while (i < html.size()) {
    if (html[i] != '<') {
      ++i;
      continue;
    }
    ++i;
    if (i >= html.size()) break;
    if (html[i] == '/') {  // closing tag
      i = html.find('>', i);
      if (i == std::string_view::npos) break;
      ++i;
      continue;
    }
    if (html[i] == '!' || html[i] == '?') {  // doctype, comment, PI
      if (html.substr(i, 3) == "!--") {
        size_t end = html.find("-->", i);
        i = end == std::string_view::npos ? html.size() : end + 3;
      } else {
        i = html.find('>', i);
        if (i == std::string_view::npos) break;
        ++i;
      }
      continue;
    }
    if (!is_tag_name_start(html[i])) continue;  // stray '<'
    size_t start = i;
    while (i < html.size() && is_tag_name_char(html[i])) ++i;
    tags.push_back(ascii_lower(html.substr(start, i - start)));
    // Skip attributes; unclosed tags tolerated.
    i = html.find('>', i);
    if (i == std::string_view::npos) break;
    ++i;
  }
  return tags;
}

std::string extract_title(std::string_view html) {
  std::string lower = ascii_lower(html);
  size_t open = lower.find("<title");
  if (open == std::string::npos) return {};
  size_t open_end = lower.find('>', open);
  if (open_end == std::string::npos) return {};
  size_t close = lower.find("</title", open_end + 1);
  if (close == std::string::npos) return {};
  return trim(html.substr(open_end + 1, close - open_end - 1));
}

PageSignature signature_of_page(const probe::HttpPage& page) {
  PageSignature sig;
  sig.length_bytes = page.body.size();
  std::string text = utf8_lossy(page.body);
  std::vector<std::string> tags = tag_sequence(text);
  if (!tags.empty()) {
    std::string joined;
    for (const auto& t : tags) {
      joined += t;
      joined += ',';
    }
    sig.tag_sequence_hash = sha256_hex(joined);
  }
  sig.title = extract_title(text);
  return sig;
}

std::optional<MatchResult> match_page(const probe::HttpPage& page, std::span<const Fingerprint> db) {
  std::string body;
  std::string title;
  std::string headers;
  bool body_done = false, title_done = false, headers_done = false;

  for (const auto& fp : db) {
    const std::string* text = nullptr;
    switch (fp.where) {
      case Scope::BODY:
        if (!body_done) {
          body = utf8_lossy(page.body);
          body_done = true;
        }
        text = &body;
        break;
      case Scope::TITLE:
        if (!title_done) {
          if (!body_done) {
            body = utf8_lossy(page.body);
            body_done = true;
          }
          title = extract_title(body);
          title_done = true;
        }
        text = &title;
        break;
      case Scope::HEADER:
        if (!headers_done) {
          headers = header_lines(page);
          headers_done = true;
        }
        text = &headers;
        break;
    }
    if (text->empty()) continue;
    if (fp.where == Scope::HEADER) {
      // Per-line matching so the excerpt names the offending header.
      for (const auto& line : split(*text, '\n')) {
        if (line.empty()) continue;
        if (auto hit = pattern_hits(fp, line)) return MatchResult{fp, clip(line)};
      }
    } else if (auto hit = pattern_hits(fp, *text)) {
      return MatchResult{fp, *hit};
    }
  }
  return std::nullopt;
}

ClusterReport cluster_pages(std::span<const std::pair<std::string, probe::HttpPage>> pages,
                            double length_tolerance, size_t min_cluster_size) {
  if (length_tolerance < 0 || length_tolerance >= 1)
    throw ContractViolation("length_tolerance must be in [0, 1)");

  ClusterReport report;
  report.params = {length_tolerance, min_cluster_size};

  struct Entry {
    PageSignature sig;
    const std::string* ref;
  };
  std::map<std::string, std::vector<Entry>> by_hash;
  for (const auto& [ref, page] : pages) {
    PageSignature sig = signature_of_page(page);
    std::string hash = sig.tag_sequence_hash;
    by_hash[hash].push_back({std::move(sig), &ref});
  }

  auto related = [&](size_t a, size_t b) {
    size_t hi = std::max({a, b, size_t{1}});
    size_t diff = a > b ? a - b : b - a;
    return static_cast<double>(diff) / static_cast<double>(hi) <= length_tolerance;
  };

  for (auto& [hash, entries] : by_hash) {
    std::sort(entries.begin(), entries.end(), [](const Entry& a, const Entry& b) {
      if (a.sig.length_bytes != b.sig.length_bytes) return a.sig.length_bytes < b.sig.length_bytes;
      return *a.ref < *b.ref;
    });
    // Sorted by length, the pair relation is transitive across neighbors,
    // so components are runs of related consecutive entries.
    size_t run_start = 0;
    for (size_t i = 1; i <= entries.size(); ++i) {
      bool breaks = i == entries.size() ||
                    !related(entries[i - 1].sig.length_bytes, entries[i].sig.length_bytes);
      if (!breaks) continue;
      size_t run_len = i - run_start;
      if (run_len >= min_cluster_size) {
        Cluster c;
        c.representative = entries[run_start].sig;
        for (size_t k = run_start; k < i; ++k) c.members.push_back(*entries[k].ref);
        report.clusters.push_back(std::move(c));
      } else {
        ++report.dropped_clusters;
        report.dropped_pages += run_len;
      }
      run_start = i;
    }
  }
  return report;
}

namespace {

// Longest common substring by scanning windows of the shortest member,
// longest first. Inputs are capped so adversarial bodies cannot blow up
// the quadratic scan.
std::string longest_common_substring(const std::vector<std::string>& texts, size_t min_len,
                                     size_t cap) {
  if (texts.empty()) return {};
  size_t shortest = 0;
  for (size_t i = 1; i < texts.size(); ++i) {
    if (texts[i].size() < texts[shortest].size()) shortest = i;
  }
  std::string base = texts[shortest].substr(0, cap);
  for (size_t len = base.size(); len >= min_len; --len) {
    for (size_t start = 0; start + len <= base.size(); ++start) {
      std::string candidate = base.substr(start, len);
      bool in_all = true;
      for (size_t i = 0; i < texts.size(); ++i) {
        if (i == shortest) continue;
        if (texts[i].find(candidate) == std::string::npos) {
          in_all = false;
          break;
        }
      }
      if (in_all) return candidate;
    }
  }
  return {};
}

}  // namespace

std::vector<DraftCandidate> export_candidates(
    const ClusterReport& report, std::span<const std::pair<std::string, probe::HttpPage>> pages) {
  constexpr size_t kMinPattern = 12;
  constexpr size_t kScanCap = 4096;

  std::map<std::string_view, const probe::HttpPage*> by_ref;
  for (const auto& [ref, page] : pages) by_ref[ref] = &page;

  std::vector<DraftCandidate> out;
  for (size_t ci = 0; ci < report.clusters.size(); ++ci) {
    const Cluster& cluster = report.clusters[ci];
    std::vector<std::string> titles;
    std::vector<std::string> bodies;
    bool all_titled = true;
    for (const auto& ref : cluster.members) {
      auto it = by_ref.find(ref);
      if (it == by_ref.end()) continue;
      std::string body = utf8_lossy(it->second->body);
      std::string title = extract_title(body);
      if (title.empty()) all_titled = false;
      titles.push_back(std::move(title));
      bodies.push_back(std::move(body));
    }

    DraftCandidate draft;
    draft.fingerprint.id = "draft-" + std::to_string(ci);
    draft.fingerprint.category = Category::UNKNOWN;
    draft.fingerprint.pattern_kind = PatternKind::SUBSTRING;
    draft.fingerprint.source = "auto-draft";

    std::string pattern;
    if (all_titled && !titles.empty()) {
      pattern = longest_common_substring(titles, kMinPattern, kScanCap);
      draft.fingerprint.where = Scope::TITLE;
    }
    if (pattern.empty() && !bodies.empty()) {
      pattern = longest_common_substring(bodies, kMinPattern, kScanCap);
      draft.fingerprint.where = Scope::BODY;
    }
    draft.fingerprint.pattern = pattern;
    draft.needs_human = pattern.empty();
    out.push_back(std::move(draft));
  }
  return out;
}

void validate_database(std::span<const Fingerprint> db) {
  std::set<std::string> ids;
  for (const auto& fp : db) {
    if (fp.id.empty()) throw SchemaError("fingerprint with empty id");
    if (!ids.insert(fp.id).second) throw SchemaError("duplicate fingerprint id: " + fp.id);
    if (fp.pattern.empty()) throw SchemaError("fingerprint " + fp.id + " has empty pattern");
    if (fp.category == Category::UNKNOWN && !fp.country)
      throw SchemaError("fingerprint " + fp.id + " is UNKNOWN but has no country");
    if (fp.pattern_kind == PatternKind::REGEX) {
      try {
        std::regex re(fp.pattern, std::regex::ECMAScript);
      } catch (const std::regex_error& e) {
        throw SchemaError("fingerprint " + fp.id + " regex does not compile: " + e.what());
      }
    }
  }
}

std::vector<Fingerprint> load_database(std::istream& in) {
  std::vector<Fingerprint> db;
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (trim(line).empty()) continue;
    nlohmann::json j;
    try {
      j = nlohmann::json::parse(line);
      Fingerprint fp;
      fp.id = j.at("id").get<std::string>();
      auto cat = category_from_string(j.at("category").get<std::string>());
      auto where = scope_from_string(j.at("where").get<std::string>());
      auto kind = pattern_kind_from_string(j.at("pattern_kind").get<std::string>());
      if (!cat || !where || !kind) throw SchemaError("bad enum value");
      fp.category = *cat;
      fp.where = *where;
      fp.pattern_kind = *kind;
      fp.pattern = j.at("pattern").get<std::string>();
      if (j.contains("country") && !j["country"].is_null())
        fp.country = j["country"].get<std::string>();
      if (j.contains("actor") && !j["actor"].is_null()) fp.actor = j["actor"].get<std::string>();
      fp.source = j.value("source", std::string{});
      db.push_back(std::move(fp));
    } catch (const nlohmann::json::exception& e) {
      throw SchemaError("fingerprint db line " + std::to_string(lineno) + ": " + e.what());
    } catch (const SchemaError& e) {
      throw SchemaError("fingerprint db line " + std::to_string(lineno) + ": " + e.what());
    }
  }
  validate_database(db);
  return db;
}

void save_database(std::ostream& out, std::span<const Fingerprint> db) {
  for (const auto& fp : db) {
    nlohmann::json j;
    j["id"] = fp.id;
    j["category"] = to_string(fp.category);
    j["where"] = to_string(fp.where);
    j["pattern"] = fp.pattern;
    j["pattern_kind"] = to_string(fp.pattern_kind);
    j["country"] = fp.country ? nlohmann::json(*fp.country) : nlohmann::json(nullptr);
    j["actor"] = fp.actor ? nlohmann::json(*fp.actor) : nlohmann::json(nullptr);
    j["source"] = fp.source;
    out << j.dump() << '\n';
  }
}

std::string to_string(Category c) {
  switch (c) {
    case Category::PRODUCT: return "PRODUCT";
    case Category::NATIONAL: return "NATIONAL";
    case Category::ISP: return "ISP";
    case Category::CORPORATION: return "CORPORATION";
    case Category::UNKNOWN: return "UNKNOWN";
    case Category::GENERAL: return "GENERAL";
  }
  return "?";
}

std::string to_string(Scope s) {
  switch (s) {
    case Scope::BODY: return "BODY";
    case Scope::HEADER: return "HEADER";
    case Scope::TITLE: return "TITLE";
  }
  return "?";
}

std::string to_string(PatternKind k) {
  switch (k) {
    case PatternKind::SUBSTRING: return "SUBSTRING";
    case PatternKind::REGEX: return "REGEX";
  }
  return "?";
}

std::optional<Category> category_from_string(std::string_view s) {
  for (Category c : {Category::PRODUCT, Category::NATIONAL, Category::ISP, Category::CORPORATION,
                     Category::UNKNOWN, Category::GENERAL})
    if (to_string(c) == s) return c;
  return std::nullopt;
}

std::optional<Scope> scope_from_string(std::string_view s) {
  for (Scope v : {Scope::BODY, Scope::HEADER, Scope::TITLE})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

std::optional<PatternKind> pattern_kind_from_string(std::string_view s) {
  for (PatternKind v : {PatternKind::SUBSTRING, PatternKind::REGEX})
    if (to_string(v) == s) return v;
  return std::nullopt;
}

}  // namespace dnsverdict::blockpage
