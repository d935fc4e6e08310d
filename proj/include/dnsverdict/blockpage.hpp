// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#pragma once

#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "dnsverdict/probe.hpp"

namespace dnsverdict::blockpage {

enum class Category { PRODUCT, NATIONAL, ISP, CORPORATION, UNKNOWN, GENERAL };
enum class Scope { BODY, HEADER, TITLE };
enum class PatternKind { SUBSTRING, REGEX };

struct Fingerprint {
  std::string id;
  Category category = Category::GENERAL;
  Scope where = Scope::BODY;
  std::string pattern;
  PatternKind pattern_kind = PatternKind::SUBSTRING;
  std::optional<std::string> country;  // 2-letter; required for UNKNOWN
  std::optional<std::string> actor;    // vendor/ISP name
  std::string source;

  bool operator==(const Fingerprint&) const = default;
};

struct MatchResult {
  Fingerprint fingerprint;
  std::string matched_excerpt;
};

// First match in db order wins; keep databases ordered specific-to-GENERAL.
std::optional<MatchResult> match_page(const probe::HttpPage& page, std::span<const Fingerprint> db);

struct PageSignature {
  size_t length_bytes = 0;
  // Hash over the ordered lowercase opening-tag-name sequence, attributes
  // stripped; empty string when the body has no tags.
  std::string tag_sequence_hash;
  std::string title;

  auto operator<=>(const PageSignature&) const = default;
};

PageSignature signature_of_page(const probe::HttpPage& page);

// Exposed pieces of the signature computation, used directly by tests and
// by candidate drafting.
std::vector<std::string> tag_sequence(std::string_view html);
std::string extract_title(std::string_view html);

struct Cluster {
  PageSignature representative;  // signature of the shortest member
  std::vector<std::string> members;
};

struct ClusterParams {
  double length_tolerance = 0.05;
  size_t min_cluster_size = 5;
};

struct ClusterReport {
  std::vector<Cluster> clusters;
  ClusterParams params;
  size_t dropped_clusters = 0;  // below min size
  size_t dropped_pages = 0;
};

// Pages co-cluster iff equal tag hash and relative length gap within
// tolerance, closed transitively.
ClusterReport cluster_pages(std::span<const std::pair<std::string, probe::HttpPage>> pages,
                            double length_tolerance, size_t min_cluster_size);

struct DraftCandidate {
  Fingerprint fingerprint;  // category UNKNOWN, source "auto-draft"
  bool needs_human = false;
};

// One draft per cluster, pattern = longest common substring (min 12 chars)
// of member titles when all are titled, else of member bodies. Drafts are
// never auto-added to a database.
std::vector<DraftCandidate> export_candidates(
    const ClusterReport& report, std::span<const std::pair<std::string, probe::HttpPage>> pages);

// Database file: one record per line. load validates invariants (unique
// ids, regexes compile, UNKNOWN entries carry a country) and throws
// SchemaError on violations.
std::vector<Fingerprint> load_database(std::istream& in);
void save_database(std::ostream& out, std::span<const Fingerprint> db);
void validate_database(std::span<const Fingerprint> db);

std::string to_string(Category c);
std::string to_string(Scope s);
std::string to_string(PatternKind k);
std::optional<Category> category_from_string(std::string_view s);
std::optional<Scope> scope_from_string(std::string_view s);
std::optional<PatternKind> pattern_kind_from_string(std::string_view s);

}  // namespace dnsverdict::blockpage
