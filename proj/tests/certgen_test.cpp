// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <openssl/evp.h>
#include <openssl/x509.h>

#include <string>

#include "doctest.h"
#include "dnsverdict/certgen.hpp"
#include "dnsverdict/certval.hpp"
#include "dnsverdict/common.hpp"

using namespace dnsverdict;

namespace {

certgen::CertSpec sample_spec() {
  certgen::CertSpec s;
  s.subject_cn = "sample.example";
  s.subject_org = "Sample Org";
  s.dns_sans = {"sample.example", "www.sample.example"};
  s.not_before = 1700000000;
  s.not_after = 1731536000;
  s.serial = 7;
  return s;
}

}  // namespace

TEST_CASE("certificate bytes are a pure function of the generator seed") {
  auto build = [](std::uint64_t seed) {
    Rng rng(seed);
    auto root_key = certgen::make_key(rng);
    certgen::CertSpec rs;
    rs.subject_cn = "Det Root";
    rs.not_before = 1690000000;
    rs.not_after = 1790000000;
    rs.is_ca = true;
    rs.serial = 1;
    auto root = certgen::issue(rs, nullptr, root_key);
    auto leaf = certgen::issue(sample_spec(), &root, certgen::make_key(rng));
    return std::pair{root.der, leaf.der};
  };

  auto [root1, leaf1] = build(99);
  auto [root2, leaf2] = build(99);
  CHECK(root1 == root2);
  CHECK(leaf1 == leaf2);

  auto [root3, leaf3] = build(100);
  CHECK(root1 != root3);
  CHECK(leaf1 != leaf3);
}

TEST_CASE("issue produces verifiable signatures and honest fields") {
  Rng rng(5);
  certgen::CertSpec rs;
  rs.subject_cn = "Issue Root";
  rs.not_before = 1690000000;
  rs.not_after = 1790000000;
  rs.is_ca = true;
  auto root = certgen::issue(rs, nullptr, certgen::make_key(rng));
  auto leaf = certgen::issue(sample_spec(), &root, certgen::make_key(rng));

  auto root_parsed = certval::parse_cert(root.der);
  auto leaf_parsed = certval::parse_cert(leaf.der);
  REQUIRE(root_parsed.parse_ok);
  REQUIRE(leaf_parsed.parse_ok);

  // Self-signed root: subject equals issuer and the signature self-verifies.
  CHECK(root_parsed.subject == root_parsed.issuer);
  CHECK(root_parsed.is_ca);
  CHECK(X509_verify(root_parsed.handle.get(), X509_get0_pubkey(root_parsed.handle.get())) == 1);

  CHECK(leaf_parsed.issuer == root_parsed.subject);
  CHECK_FALSE(leaf_parsed.is_ca);
  CHECK(leaf_parsed.subject_cn == "sample.example");
  CHECK(leaf_parsed.not_before == 1700000000);
  CHECK(leaf_parsed.not_after == 1731536000);
  CHECK(X509_verify(leaf_parsed.handle.get(), X509_get0_pubkey(root_parsed.handle.get())) == 1);
}

TEST_CASE("corrupt_signature keeps the encoding but breaks verification") {
  Rng rng(6);
  certgen::CertSpec rs;
  rs.subject_cn = "Corrupt Root";
  rs.not_before = 1690000000;
  rs.not_after = 1790000000;
  rs.is_ca = true;
  auto root = certgen::issue(rs, nullptr, certgen::make_key(rng));
  auto leaf = certgen::issue(sample_spec(), &root, certgen::make_key(rng));

  auto broken = certgen::corrupt_signature(leaf.der);
  CHECK(broken != leaf.der);
  CHECK(broken.size() == leaf.der.size());

  auto parsed = certval::parse_cert(broken);
  REQUIRE(parsed.parse_ok);
  auto root_parsed = certval::parse_cert(root.der);
  CHECK(X509_verify(parsed.handle.get(), X509_get0_pubkey(root_parsed.handle.get())) != 1);
}

TEST_CASE("key serialization is reproducible pem") {
  Rng a(77), b(77), c(78);
  auto pem1 = certgen::key_to_pem(certgen::make_key(a));
  auto pem2 = certgen::key_to_pem(certgen::make_key(b));
  auto pem3 = certgen::key_to_pem(certgen::make_key(c));
  CHECK(pem1 == pem2);
  CHECK(pem1 != pem3);
  CHECK(pem1.find("BEGIN PRIVATE KEY") != std::string::npos);
}
