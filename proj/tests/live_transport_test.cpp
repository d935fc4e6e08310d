// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#define CPPHTTPLIB_OPENSSL_SUPPORT
#include "httplib.h"

#include <arpa/inet.h>
#include <ifaddrs.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <atomic>
#include <chrono>
#include <cstring>
#include <ctime>
#include <functional>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "doctest.h"
#include "dnsverdict/certgen.hpp"
#include "dnsverdict/certval.hpp"
#include "dnsverdict/common.hpp"
#include "dnsverdict/ip.hpp"
#include "dnsverdict/live_transport.hpp"
#include "dnsverdict/ratelimit.hpp"

using namespace dnsverdict;

namespace {

// The transport refuses to dial private space, which covers loopback, so the
// test servers need a routable address the host actually owns.
std::optional<std::string> local_test_address() {
  ifaddrs* list = nullptr;
  if (getifaddrs(&list) != 0) return std::nullopt;
  std::optional<std::string> found;
  for (ifaddrs* a = list; a; a = a->ifa_next) {
    if (!a->ifa_addr || a->ifa_addr->sa_family != AF_INET) continue;
    char buf[INET_ADDRSTRLEN];
    auto* sin = reinterpret_cast<sockaddr_in*>(a->ifa_addr);
    if (!inet_ntop(AF_INET, &sin->sin_addr, buf, sizeof(buf))) continue;
    auto ip = IpAddr::parse(buf);
    if (ip && !ip->is_private()) {
      found = std::string(buf);
      break;
    }
  }
  freeifaddrs(list);
  return found;
}

const std::string& host_addr() {
  static std::string addr = [] {
    auto a = local_test_address();
    REQUIRE_MESSAGE(a.has_value(),
                    "no non-private local address available for socket tests");
    return *a;
  }();
  return addr;
}

probe::ProbeRequest request_for(int port, const std::string& host, bool tls,
                                double timeout = 5.0, size_t max_body = 256 * 1024) {
  probe::ProbeRequest req;
  req.ip = IpAddr::must_parse(host_addr());
  req.port = port;
  req.host = host;
  req.sni = tls ? host : "";
  req.timeout_secs = timeout;
  req.max_body_bytes = max_body;
  return req;
}

// httplib server on the test address, stopped on destruction.
template <typename ServerT>
struct Hosted {
  ServerT svr;
  std::thread th;
  int port = 0;

  template <typename... Args>
  explicit Hosted(Args&&... args) : svr(std::forward<Args>(args)...) {}

  void start() {
    port = svr.bind_to_any_port(host_addr());
    REQUIRE(port > 0);
    th = std::thread([this] { svr.listen_after_bind(); });
    svr.wait_until_ready();
  }

  ~Hosted() {
    svr.stop();
    if (th.joinable()) th.join();
  }
};

// Accepts raw connections and hands each file descriptor to the handler, for
// the degenerate peers a well-formed HTTP server cannot imitate.
struct RawServer {
  int listen_fd = -1;
  int port = 0;
  std::thread th;
  std::atomic<bool> stopped{false};
  std::function<void(RawServer&, int)> handler;

  void start(std::function<void(RawServer&, int)> h) {
    handler = std::move(h);
    listen_fd = ::socket(AF_INET, SOCK_STREAM | SOCK_CLOEXEC, 0);
    REQUIRE(listen_fd >= 0);
    int one = 1;
    ::setsockopt(listen_fd, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_port = 0;
    REQUIRE(::inet_pton(AF_INET, host_addr().c_str(), &addr.sin_addr) == 1);
    REQUIRE(::bind(listen_fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    REQUIRE(::listen(listen_fd, 8) == 0);
    socklen_t len = sizeof(addr);
    REQUIRE(::getsockname(listen_fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
    port = ntohs(addr.sin_port);
    th = std::thread([this] {
      while (!stopped.load()) {
        pollfd p{};
        p.fd = listen_fd;
        p.events = POLLIN;
        int rc = ::poll(&p, 1, 50);
        if (rc <= 0) continue;
        int fd = ::accept(listen_fd, nullptr, nullptr);
        if (fd < 0) continue;
        handler(*this, fd);
        ::close(fd);
      }
    });
  }

  // Drains whatever request bytes arrived, so the client's send succeeds.
  static void drain(int fd) {
    char buf[4096];
    ::recv(fd, buf, sizeof(buf), 0);
  }

  void sleep_until_stopped(int max_ms) {
    int waited = 0;
    while (!stopped.load() && waited < max_ms) {
      std::this_thread::sleep_for(std::chrono::milliseconds(25));
      waited += 25;
    }
  }

  ~RawServer() {
    stopped = true;
    if (th.joinable()) th.join();
    if (listen_fd >= 0) ::close(listen_fd);
  }
};

struct TlsFixture {
  certgen::IssuedCert root;
  certgen::IssuedCert intermediate;
  certgen::IssuedCert leaf;
};

TlsFixture make_tls_fixture(const std::string& leaf_name) {
  std::int64_t now = std::time(nullptr);
  Rng rng(7777);
  TlsFixture fx;
  {
    certgen::CertSpec spec;
    spec.subject_cn = "Socket Test Root";
    spec.is_ca = true;
    spec.not_before = now - 86400;
    spec.not_after = now + 86400 * 365;
    spec.serial = 1;
    fx.root = certgen::issue(spec, nullptr, certgen::make_key(rng));
  }
  {
    certgen::CertSpec spec;
    spec.subject_cn = "Socket Test Intermediate";
    spec.is_ca = true;
    spec.not_before = now - 86400;
    spec.not_after = now + 86400 * 300;
    spec.serial = 2;
    fx.intermediate = certgen::issue(spec, &fx.root, certgen::make_key(rng));
  }
  {
    certgen::CertSpec spec;
    spec.subject_cn = leaf_name;
    spec.dns_sans = {leaf_name};
    spec.not_before = now - 86400;
    spec.not_after = now + 86400 * 90;
    spec.serial = 3;
    fx.leaf = certgen::issue(spec, &fx.intermediate, certgen::make_key(rng));
  }
  return fx;
}

std::string g_seen_sni;

int record_sni(SSL* ssl, int*, void*) {
  const char* name = SSL_get_servername(ssl, TLSEXT_NAMETYPE_host_name);
  if (name) g_seen_sni = name;
  return SSL_TLSEXT_ERR_OK;
}

}  // namespace

TEST_CASE("plain http fetch carries status, headers, body, and host") {
  std::string seen_host;
  Hosted<httplib::Server> server;
  server.svr.Get("/", [&](const httplib::Request& req, httplib::Response& res) {
    seen_host = req.get_header_value("Host");
    res.set_header("X-Fixture", "yes");
    res.set_content("hello from the fixture", "text/plain");
  });
  server.start();

  SystemClock clock;
  probe::LiveTransport transport(clock, 0.0);
  auto out = transport.get_http(request_for(server.port, "fixture.example", false));

  REQUIRE(out.page.has_value());
  CHECK_FALSE(out.error.has_value());
  CHECK(out.page->status == 200);
  CHECK(std::string(out.page->body.begin(), out.page->body.end()) == "hello from the fixture");
  CHECK_FALSE(out.page->body_truncated);
  bool fixture_header = false;
  for (const auto& [name, value] : out.page->headers) {
    if (name == "X-Fixture" && value == "yes") fixture_header = true;
  }
  CHECK(fixture_header);
  CHECK(seen_host == "fixture.example");
}

TEST_CASE("redirects are recorded, never followed") {
  std::atomic<int> hits{0};
  Hosted<httplib::Server> server;
  server.svr.Get("/", [&](const httplib::Request&, httplib::Response& res) {
    ++hits;
    res.status = 301;
    res.set_header("Location", "http://elsewhere.example/");
    res.set_content("moved", "text/plain");
  });
  server.start();

  SystemClock clock;
  probe::LiveTransport transport(clock, 0.0);
  auto out = transport.get_http(request_for(server.port, "fixture.example", false));

  REQUIRE(out.page.has_value());
  CHECK(out.page->status == 301);
  CHECK(hits.load() == 1);
  bool location = false;
  for (const auto& [name, value] : out.page->headers) {
    if (name == "Location") location = value == "http://elsewhere.example/";
  }
  CHECK(location);
}

TEST_CASE("bodies are capped at the request limit and flagged") {
  Hosted<httplib::Server> server;
  std::string big(200 * 1024, 'x');
  server.svr.Get("/", [&](const httplib::Request&, httplib::Response& res) {
    res.set_content(big, "text/plain");
  });
  server.start();

  SystemClock clock;
  probe::LiveTransport transport(clock, 0.0);
  auto out =
      transport.get_http(request_for(server.port, "fixture.example", false, 5.0, 1500));

  REQUIRE(out.page.has_value());
  CHECK(out.page->body.size() == 1500);
  CHECK(out.page->body_truncated);
}

TEST_CASE("chunked responses reassemble in order") {
  Hosted<httplib::Server> server;
  server.svr.Get("/", [&](const httplib::Request&, httplib::Response& res) {
    res.set_chunked_content_provider(
        "text/plain", [](size_t offset, httplib::DataSink& sink) {
          static const char* parts[] = {"alpha-", "beta-", "gamma"};
          size_t i = offset == 0 ? 0 : (offset == 6 ? 1 : 2);
          sink.write(parts[i], std::strlen(parts[i]));
          if (i == 2) sink.done();
          return true;
        });
  });
  server.start();

  SystemClock clock;
  probe::LiveTransport transport(clock, 0.0);
  auto out = transport.get_http(request_for(server.port, "fixture.example", false));

  REQUIRE(out.page.has_value());
  CHECK(std::string(out.page->body.begin(), out.page->body.end()) == "alpha-beta-gamma");
}

TEST_CASE("https fetch captures the chain exactly as presented") {
  auto fx = make_tls_fixture("fixture.example");
  g_seen_sni.clear();
  Hosted<httplib::SSLServer> server([&](SSL_CTX& ctx) {
    if (SSL_CTX_use_certificate(&ctx, fx.leaf.handle.get()) != 1) return false;
    X509_up_ref(fx.intermediate.handle.get());
    if (SSL_CTX_add_extra_chain_cert(&ctx, fx.intermediate.handle.get()) != 1) return false;
    if (SSL_CTX_use_PrivateKey(&ctx, fx.leaf.key.pkey.get()) != 1) return false;
    SSL_CTX_set_tlsext_servername_callback(&ctx, record_sni);
    return true;
  });
  REQUIRE(server.svr.is_valid());
  server.svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("tls fixture body", "text/plain");
  });
  server.start();

  SystemClock clock;
  probe::LiveTransport transport(clock, 0.0);
  auto out = transport.get_https(request_for(server.port, "fixture.example", true));

  CHECK_FALSE(out.error.has_value());
  REQUIRE(out.chain.size() == 2);
  CHECK(out.chain[0] == fx.leaf.der);
  CHECK(out.chain[1] == fx.intermediate.der);
  REQUIRE(out.page.has_value());
  CHECK(out.page->status == 200);
  CHECK(std::string(out.page->body.begin(), out.page->body.end()) == "tls fixture body");
  CHECK(g_seen_sni == "fixture.example");

  // The captured bytes feed straight into the validator and come out VALID.
  certval::CertPolicy policy;
  policy.root_store = certval::parse_chain(std::vector<std::vector<std::uint8_t>>{fx.root.der});
  policy.reference_time = std::time(nullptr);
  auto assessment = certval::assess(out.chain, "fixture.example", policy);
  CHECK(assessment.cert_case == certval::CertCase::VALID);
  CHECK(assessment.trusted);
  CHECK(assessment.hostname_match);
}

TEST_CASE("https against a plaintext peer reports a handshake failure") {
  RawServer server;
  server.start([](RawServer&, int fd) {
    RawServer::drain(fd);
    const char* text = "HTTP/1.1 200 OK\r\nContent-Length: 2\r\n\r\nok";
    ::send(fd, text, std::strlen(text), MSG_NOSIGNAL);
  });

  SystemClock clock;
  probe::LiveTransport transport(clock, 0.0);
  auto out = transport.get_https(request_for(server.port, "fixture.example", true));

  REQUIRE(out.error.has_value());
  CHECK(*out.error == "tls-handshake-failed");
  CHECK(out.chain.empty());
  CHECK_FALSE(out.page.has_value());
}

TEST_CASE("error vocabulary is stable across failure modes") {
  SystemClock clock;
  probe::LiveTransport transport(clock, 0.0);

  SUBCASE("connection refused") {
    // Learn a port the kernel just released; nothing listens there now.
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    REQUIRE(fd >= 0);
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    REQUIRE(::inet_pton(AF_INET, host_addr().c_str(), &addr.sin_addr) == 1);
    REQUIRE(::bind(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) == 0);
    socklen_t len = sizeof(addr);
    REQUIRE(::getsockname(fd, reinterpret_cast<sockaddr*>(&addr), &len) == 0);
    int port = ntohs(addr.sin_port);
    ::close(fd);

    auto http = transport.get_http(request_for(port, "fixture.example", false));
    REQUIRE(http.error.has_value());
    CHECK(*http.error == "connection-refused");
    auto https = transport.get_https(request_for(port, "fixture.example", true));
    REQUIRE(https.error.has_value());
    CHECK(*https.error == "connection-refused");
  }

  SUBCASE("peer closes before answering") {
    RawServer server;
    server.start([](RawServer&, int fd) { RawServer::drain(fd); });
    auto out = transport.get_http(request_for(server.port, "fixture.example", false));
    REQUIRE(out.error.has_value());
    CHECK(*out.error == "connection-reset");
    CHECK_FALSE(out.page.has_value());
  }

  SUBCASE("peer answers with something that is not http") {
    RawServer server;
    server.start([](RawServer&, int fd) {
      RawServer::drain(fd);
      const char* text = "SMTP greetings, wrong protocol entirely\r\n\r\n";
      ::send(fd, text, std::strlen(text), MSG_NOSIGNAL);
    });
    auto out = transport.get_http(request_for(server.port, "fixture.example", false));
    REQUIRE(out.error.has_value());
    CHECK(*out.error == "malformed-response");
  }

  SUBCASE("peer promises more body than it sends") {
    RawServer server;
    server.start([](RawServer&, int fd) {
      RawServer::drain(fd);
      const char* text = "HTTP/1.1 200 OK\r\nContent-Length: 50\r\n\r\nshort";
      ::send(fd, text, std::strlen(text), MSG_NOSIGNAL);
    });
    auto out = transport.get_http(request_for(server.port, "fixture.example", false));
    REQUIRE(out.error.has_value());
    CHECK(*out.error == "malformed-response");
  }

  SUBCASE("silent peer times out") {
    RawServer server;
    server.start([](RawServer& s, int fd) {
      RawServer::drain(fd);
      s.sleep_until_stopped(3000);
    });
    auto started = std::chrono::steady_clock::now();
    auto out = transport.get_http(request_for(server.port, "fixture.example", false, 0.3));
    auto elapsed = std::chrono::steady_clock::now() - started;
    REQUIRE(out.error.has_value());
    CHECK(*out.error == "timeout");
    CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() < 2500);
    server.stopped = true;
  }
}

TEST_CASE("private addresses are never dialed") {
  SystemClock clock;
  probe::LiveTransport transport(clock, 0.0);
  for (const char* text : {"10.9.8.7", "192.168.1.1", "127.0.0.1", "169.254.0.9"}) {
    probe::ProbeRequest req;
    req.ip = IpAddr::must_parse(text);
    req.port = 80;
    req.host = "fixture.example";
    req.timeout_secs = 5.0;

    auto started = std::chrono::steady_clock::now();
    auto http = transport.get_http(req);
    req.sni = "fixture.example";
    req.port = 443;
    auto https = transport.get_https(req);
    auto elapsed = std::chrono::steady_clock::now() - started;

    REQUIRE(http.error.has_value());
    CHECK(*http.error == "private-address-skipped");
    CHECK_FALSE(http.page.has_value());
    REQUIRE(https.error.has_value());
    CHECK(*https.error == "private-address-skipped");
    CHECK(https.chain.empty());
    // The guard fires before any socket work.
    CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() < 500);
  }
}

TEST_CASE("per-ip rate limit paces consecutive requests") {
  Hosted<httplib::Server> server;
  server.svr.Get("/", [](const httplib::Request&, httplib::Response& res) {
    res.set_content("ok", "text/plain");
  });
  server.start();

  SystemClock clock;
  probe::LiveTransport throttled(clock, 20.0);  // 50ms between requests per IP
  auto started = std::chrono::steady_clock::now();
  for (int i = 0; i < 3; ++i) {
    auto out = throttled.get_http(request_for(server.port, "fixture.example", false));
    REQUIRE(out.page.has_value());
  }
  auto elapsed = std::chrono::steady_clock::now() - started;
  CHECK(std::chrono::duration_cast<std::chrono::milliseconds>(elapsed).count() >= 90);
}
