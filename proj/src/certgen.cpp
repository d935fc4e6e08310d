// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/certgen.hpp"

#include <openssl/asn1.h>
#include <openssl/bio.h>
#include <openssl/evp.h>
#include <openssl/pem.h>
#include <openssl/x509.h>
#include <openssl/x509v3.h>

#include <array>
#include <stdexcept>

namespace dnsverdict::certgen {

namespace {

void require(bool ok, const char* what) {
  if (!ok) throw std::runtime_error(std::string("certgen: ") + what);
}

X509_NAME* build_name(const std::string& cn, const std::optional<std::string>& org) {
  X509_NAME* name = X509_NAME_new();
  require(name != nullptr, "X509_NAME_new");
  if (org) {
    X509_NAME_add_entry_by_txt(name, "O", MBSTRING_UTF8,
                               reinterpret_cast<const unsigned char*>(org->data()),
                               static_cast<int>(org->size()), -1, 0);
  }
  X509_NAME_add_entry_by_txt(name, "CN", MBSTRING_UTF8,
                             reinterpret_cast<const unsigned char*>(cn.data()),
                             static_cast<int>(cn.size()), -1, 0);
  return name;
}

void add_ext(X509* x, X509* issuer, int nid, const std::string& value) {
  X509V3_CTX ctx;
  X509V3_set_ctx_nodb(&ctx);
  X509V3_set_ctx(&ctx, issuer ? issuer : x, x, nullptr, nullptr, 0);
  X509_EXTENSION* ext = X509V3_EXT_nconf_nid(nullptr, &ctx, nid, value.c_str());
  require(ext != nullptr, "X509V3_EXT_nconf_nid");
  X509_add_ext(x, ext, -1);
  X509_EXTENSION_free(ext);
}

}  // namespace

Key make_key(Rng& rng) {
  std::array<std::uint8_t, 32> seed{};
  rng.fill(seed);
  EVP_PKEY* pkey = EVP_PKEY_new_raw_private_key(EVP_PKEY_ED25519, nullptr, seed.data(), seed.size());
  require(pkey != nullptr, "EVP_PKEY_new_raw_private_key");
  return {std::shared_ptr<evp_pkey_st>(pkey, EVP_PKEY_free)};
}

IssuedCert issue(const CertSpec& spec, const IssuedCert* issuer, Key subject_key) {
  X509* x = X509_new();
  require(x != nullptr, "X509_new");
  X509_set_version(x, 2);
  ASN1_INTEGER_set_uint64(X509_get_serialNumber(x), spec.serial);

  X509_NAME* subject = build_name(spec.subject_cn, spec.subject_org);
  X509_set_subject_name(x, subject);
  if (issuer) {
    X509_set_issuer_name(x, X509_get_subject_name(issuer->handle.get()));
  } else {
    X509_set_issuer_name(x, subject);
  }
  X509_NAME_free(subject);

  ASN1_TIME_set(X509_getm_notBefore(x), static_cast<time_t>(spec.not_before));
  ASN1_TIME_set(X509_getm_notAfter(x), static_cast<time_t>(spec.not_after));
  require(X509_set_pubkey(x, subject_key.pkey.get()) == 1, "X509_set_pubkey");

  add_ext(x, issuer ? issuer->handle.get() : nullptr, NID_basic_constraints,
          spec.is_ca ? "critical,CA:TRUE" : "critical,CA:FALSE");
  if (!spec.dns_sans.empty() || !spec.ip_sans.empty()) {
    std::string san;
    for (const auto& d : spec.dns_sans) {
      if (!san.empty()) san += ',';
      san += "DNS:" + d;
    }
    for (const auto& a : spec.ip_sans) {
      if (!san.empty()) san += ',';
      san += "IP:" + a;
    }
    add_ext(x, issuer ? issuer->handle.get() : nullptr, NID_subject_alt_name, san);
  }

  EVP_PKEY* signing_key = issuer ? issuer->key.pkey.get() : subject_key.pkey.get();
  // Ed25519 requires a null digest.
  require(X509_sign(x, signing_key, nullptr) > 0, "X509_sign");

  IssuedCert out;
  out.key = std::move(subject_key);
  out.handle = std::shared_ptr<x509_st>(x, X509_free);
  out.subject_cn = spec.subject_cn;
  unsigned char* der = nullptr;
  int n = i2d_X509(x, &der);
  require(n > 0, "i2d_X509");
  out.der.assign(der, der + n);
  OPENSSL_free(der);
  return out;
}

std::vector<std::uint8_t> corrupt_signature(const std::vector<std::uint8_t>& der) {
  std::vector<std::uint8_t> out = der;
  if (!out.empty()) out.back() ^= 0x01;
  return out;
}

std::string key_to_pem(const Key& key) {
  BIO* bio = BIO_new(BIO_s_mem());
  require(PEM_write_bio_PrivateKey(bio, key.pkey.get(), nullptr, nullptr, 0, nullptr, nullptr) == 1,
          "PEM_write_bio_PrivateKey");
  char* data = nullptr;
  long n = BIO_get_mem_data(bio, &data);
  std::string out(data, static_cast<size_t>(n));
  BIO_free(bio);
  return out;
}

}  // namespace dnsverdict::certgen
