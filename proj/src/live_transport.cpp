// Copyright (c) the dnsverdict authors. All rights reserved.
// Licensed under the Apache 2.0 License.
#include "dnsverdict/live_transport.hpp"

#include <arpa/inet.h>
#include <netinet/in.h>
#include <poll.h>
#include <sys/socket.h>
#include <unistd.h>

#include <openssl/err.h>
#include <openssl/ssl.h>
#include <openssl/x509.h>

#include <algorithm>
#include <cerrno>
#include <csignal>
#include <cstring>
#include <mutex>

#include "dnsverdict/common.hpp"

namespace dnsverdict::probe {

namespace {

constexpr const char* kTimeout = "timeout";
constexpr const char* kRefused = "connection-refused";
constexpr const char* kReset = "connection-reset";
constexpr const char* kIoError = "io-error";
constexpr const char* kTlsFailed = "tls-handshake-failed";
constexpr const char* kMalformed = "malformed-response";
constexpr const char* kPrivateSkipped = "private-address-skipped";

constexpr size_t kMaxHeaderBytes = 64 * 1024;

struct Deadline {
  Clock* clock;
  std::int64_t at_micros;

  bool expired() const { return clock->now_micros() >= at_micros; }
  int remaining_ms() const {
    std::int64_t left = at_micros - clock->now_micros();
    if (left <= 0) return 0;
    return static_cast<int>(std::min<std::int64_t>(left / 1000 + 1, 3600 * 1000));
  }
};

// 1 ready, 0 deadline passed, -1 poll error.
int wait_fd(int fd, short events, const Deadline& dl) {
  while (true) {
    if (dl.expired()) return 0;
    pollfd p{};
    p.fd = fd;
    p.events = events;
    int rc = ::poll(&p, 1, dl.remaining_ms());
    if (rc > 0) return 1;
    if (rc == 0) continue;
    if (errno == EINTR) continue;
    return -1;
  }
}

std::string errno_name(int err) {
  switch (err) {
    case ECONNREFUSED: return kRefused;
    case ECONNRESET:
    case EPIPE: return kReset;
    case ETIMEDOUT: return kTimeout;
    default: return kIoError;
  }
}

int connect_socket(const IpAddr& ip, int port, const Deadline& dl, std::string* error) {
  std::string text = ip.to_string();
  sockaddr_storage ss{};
  socklen_t slen = 0;
  if (ip.is_v4()) {
    auto* a = reinterpret_cast<sockaddr_in*>(&ss);
    a->sin_family = AF_INET;
    a->sin_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET, text.c_str(), &a->sin_addr) != 1) {
      *error = kIoError;
      return -1;
    }
    slen = sizeof(sockaddr_in);
  } else {
    auto* a = reinterpret_cast<sockaddr_in6*>(&ss);
    a->sin6_family = AF_INET6;
    a->sin6_port = htons(static_cast<std::uint16_t>(port));
    if (::inet_pton(AF_INET6, text.c_str(), &a->sin6_addr) != 1) {
      *error = kIoError;
      return -1;
    }
    slen = sizeof(sockaddr_in6);
  }

  int fd = ::socket(ss.ss_family, SOCK_STREAM | SOCK_NONBLOCK | SOCK_CLOEXEC, 0);
  if (fd < 0) {
    *error = kIoError;
    return -1;
  }
  int rc = ::connect(fd, reinterpret_cast<sockaddr*>(&ss), slen);
  if (rc != 0 && errno != EINPROGRESS) {
    *error = errno_name(errno);
    ::close(fd);
    return -1;
  }
  if (rc != 0) {
    int ready = wait_fd(fd, POLLOUT, dl);
    if (ready <= 0) {
      *error = ready == 0 ? kTimeout : kIoError;
      ::close(fd);
      return -1;
    }
    int soerr = 0;
    socklen_t len = sizeof(soerr);
    if (::getsockopt(fd, SOL_SOCKET, SO_ERROR, &soerr, &len) != 0 || soerr != 0) {
      *error = errno_name(soerr != 0 ? soerr : errno);
      ::close(fd);
      return -1;
    }
  }
  return fd;
}

struct Stream {
  std::string error;

  virtual ~Stream() = default;
  // >0 bytes read, 0 clean end of stream, -1 failure (error set).
  virtual int read_some(std::uint8_t* buf, size_t n) = 0;
  virtual bool write_all(const std::uint8_t* buf, size_t n) = 0;
};

struct PlainStream final : Stream {
  int fd;
  Deadline dl;

  PlainStream(int fd_in, Deadline dl_in) : fd(fd_in), dl(dl_in) {}

  int read_some(std::uint8_t* buf, size_t n) override {
    while (true) {
      ssize_t r = ::recv(fd, buf, n, 0);
      if (r > 0) return static_cast<int>(r);
      if (r == 0) return 0;
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        int ready = wait_fd(fd, POLLIN, dl);
        if (ready == 0) {
          error = kTimeout;
          return -1;
        }
        if (ready < 0) {
          error = kIoError;
          return -1;
        }
        continue;
      }
      error = errno_name(errno);
      return -1;
    }
  }

  bool write_all(const std::uint8_t* buf, size_t n) override {
    size_t off = 0;
    while (off < n) {
      ssize_t w = ::send(fd, buf + off, n - off, MSG_NOSIGNAL);
      if (w > 0) {
        off += static_cast<size_t>(w);
        continue;
      }
      if (errno == EINTR) continue;
      if (errno == EAGAIN || errno == EWOULDBLOCK) {
        int ready = wait_fd(fd, POLLOUT, dl);
        if (ready == 0) {
          error = kTimeout;
          return false;
        }
        if (ready < 0) {
          error = kIoError;
          return false;
        }
        continue;
      }
      error = errno_name(errno);
      return false;
    }
    return true;
  }
};

struct TlsStream final : Stream {
  SSL* ssl;
  int fd;
  Deadline dl;

  TlsStream(SSL* ssl_in, int fd_in, Deadline dl_in) : ssl(ssl_in), fd(fd_in), dl(dl_in) {}

  bool wait_for(int ssl_error) {
    short events = ssl_error == SSL_ERROR_WANT_WRITE ? POLLOUT : POLLIN;
    int ready = wait_fd(fd, events, dl);
    if (ready == 0) {
      error = kTimeout;
      return false;
    }
    if (ready < 0) {
      error = kIoError;
      return false;
    }
    return true;
  }

  int read_some(std::uint8_t* buf, size_t n) override {
    while (true) {
      ERR_clear_error();
      int r = SSL_read(ssl, buf, static_cast<int>(std::min<size_t>(n, 1 << 20)));
      if (r > 0) return r;
      int e = SSL_get_error(ssl, r);
      if (e == SSL_ERROR_ZERO_RETURN) return 0;
      if (e == SSL_ERROR_WANT_READ || e == SSL_ERROR_WANT_WRITE) {
        if (!wait_for(e)) return -1;
        continue;
      }
      if (e == SSL_ERROR_SYSCALL && errno == 0) return 0;  // unclean close
      error = e == SSL_ERROR_SYSCALL ? errno_name(errno) : kReset;
      return -1;
    }
  }

  bool write_all(const std::uint8_t* buf, size_t n) override {
    size_t off = 0;
    while (off < n) {
      ERR_clear_error();
      int w = SSL_write(ssl, buf + off, static_cast<int>(std::min<size_t>(n - off, 1 << 20)));
      if (w > 0) {
        off += static_cast<size_t>(w);
        continue;
      }
      int e = SSL_get_error(ssl, w);
      if (e == SSL_ERROR_WANT_READ || e == SSL_ERROR_WANT_WRITE) {
        if (!wait_for(e)) return false;
        continue;
      }
      error = e == SSL_ERROR_SYSCALL ? errno_name(errno) : kReset;
      return false;
    }
    return true;
  }
};

std::string build_request(const ProbeRequest& req) {
  return "GET / HTTP/1.1\r\nHost: " + req.host +
         "\r\nUser-Agent: dnsverdict/1.0\r\nAccept: */*\r\nConnection: close\r\n\r\n";
}

char lower(char c) { return c >= 'A' && c <= 'Z' ? static_cast<char>(c - 'A' + 'a') : c; }

bool iequals(std::string_view a, std::string_view b) {
  return a.size() == b.size() &&
         std::equal(a.begin(), a.end(), b.begin(),
                    [](char x, char y) { return lower(x) == lower(y); });
}

// Reads one HTTP/1.x response. On failure returns nullopt with *error set.
std::optional<HttpPage> read_response(Stream& s, size_t max_body, std::string* error) {
  std::string buf;
  size_t header_end = std::string::npos;
  std::uint8_t chunk[8192];
  while (true) {
    header_end = buf.find("\r\n\r\n");
    if (header_end != std::string::npos) break;
    if (buf.size() > kMaxHeaderBytes) {
      *error = kMalformed;
      return std::nullopt;
    }
    int r = s.read_some(chunk, sizeof(chunk));
    if (r < 0) {
      *error = s.error;
      return std::nullopt;
    }
    if (r == 0) {
      *error = buf.empty() ? kReset : kMalformed;
      return std::nullopt;
    }
    buf.append(reinterpret_cast<char*>(chunk), static_cast<size_t>(r));
  }

  HttpPage page;
  std::vector<std::string> lines = split(buf.substr(0, header_end), '\n');
  for (auto& l : lines) {
    if (!l.empty() && l.back() == '\r') l.pop_back();
  }
  if (lines.empty() || !lines[0].starts_with("HTTP/")) {
    *error = kMalformed;
    return std::nullopt;
  }
  {
    size_t sp1 = lines[0].find(' ');
    if (sp1 == std::string::npos || sp1 + 4 > lines[0].size()) {
      *error = kMalformed;
      return std::nullopt;
    }
    int status = 0;
    for (size_t k = sp1 + 1; k < sp1 + 4; ++k) {
      char c = lines[0][k];
      if (c < '0' || c > '9') {
        *error = kMalformed;
        return std::nullopt;
      }
      status = status * 10 + (c - '0');
    }
    if (status < 100 || status > 599) {
      *error = kMalformed;
      return std::nullopt;
    }
    page.status = status;
  }

  bool chunked = false;
  std::optional<size_t> content_length;
  for (size_t li = 1; li < lines.size(); ++li) {
    const std::string& l = lines[li];
    if (l.empty()) continue;
    size_t colon = l.find(':');
    if (colon == std::string::npos) {
      *error = kMalformed;
      return std::nullopt;
    }
    std::string name = trim(l.substr(0, colon));
    std::string value = trim(l.substr(colon + 1));
    if (iequals(name, "transfer-encoding") &&
        ascii_lower(value).find("chunked") != std::string::npos) {
      chunked = true;
    }
    if (iequals(name, "content-length")) {
      try {
        content_length = static_cast<size_t>(std::stoull(value));
      } catch (...) {
        *error = kMalformed;
        return std::nullopt;
      }
    }
    page.headers.emplace_back(std::move(name), std::move(value));
  }

  std::string rest = buf.substr(header_end + 4);

  // Pulls more bytes into rest; 0 on EOF, -1 on failure.
  auto refill = [&]() -> int {
    int r = s.read_some(chunk, sizeof(chunk));
    if (r < 0) {
      *error = s.error;
      return -1;
    }
    if (r > 0) rest.append(reinterpret_cast<char*>(chunk), static_cast<size_t>(r));
    return r;
  };

  auto append_body = [&](const char* data, size_t n) {
    size_t room = page.body.size() >= max_body ? 0 : max_body - page.body.size();
    size_t take = std::min(n, room);
    page.body.insert(page.body.end(), data, data + take);
    if (take < n) page.body_truncated = true;
  };

  if (chunked) {
    while (true) {
      size_t nl = rest.find("\r\n");
      while (nl == std::string::npos) {
        int r = refill();
        if (r < 0) return std::nullopt;
        if (r == 0) {
          *error = kMalformed;
          return std::nullopt;
        }
        nl = rest.find("\r\n");
      }
      std::string size_line = rest.substr(0, nl);
      rest.erase(0, nl + 2);
      size_t semi = size_line.find(';');
      if (semi != std::string::npos) size_line.resize(semi);
      size_t chunk_len = 0;
      try {
        chunk_len = static_cast<size_t>(std::stoull(trim(size_line), nullptr, 16));
      } catch (...) {
        *error = kMalformed;
        return std::nullopt;
      }
      if (chunk_len == 0) break;  // trailers, if any, are ignored
      while (rest.size() < chunk_len + 2) {
        if (page.body.size() >= max_body && rest.size() >= chunk_len) break;
        int r = refill();
        if (r < 0) return std::nullopt;
        if (r == 0) {
          *error = kMalformed;
          return std::nullopt;
        }
      }
      append_body(rest.data(), std::min(chunk_len, rest.size()));
      rest.erase(0, std::min(chunk_len + 2, rest.size()));
      if (page.body_truncated) return page;
    }
    return page;
  }

  if (content_length) {
    append_body(rest.data(), std::min(rest.size(), *content_length));
    size_t received = rest.size();
    while (received < *content_length && !page.body_truncated) {
      int r = s.read_some(chunk, sizeof(chunk));
      if (r < 0) {
        *error = s.error;
        return std::nullopt;
      }
      if (r == 0) {
        *error = kMalformed;  // body shorter than promised
        return std::nullopt;
      }
      received += static_cast<size_t>(r);
      append_body(reinterpret_cast<char*>(chunk), static_cast<size_t>(r));
    }
    return page;
  }

  // No framing: read until the peer closes.
  append_body(rest.data(), rest.size());
  while (!page.body_truncated) {
    int r = s.read_some(chunk, sizeof(chunk));
    if (r < 0) {
      *error = s.error;
      return std::nullopt;
    }
    if (r == 0) break;
    append_body(reinterpret_cast<char*>(chunk), static_cast<size_t>(r));
  }
  return page;
}

SSL_CTX* client_ctx() {
  static SSL_CTX* ctx = [] {
    SSL_CTX* c = SSL_CTX_new(TLS_client_method());
    // Chains are judged by the validator, never by the handshake.
    SSL_CTX_set_verify(c, SSL_VERIFY_NONE, nullptr);
    return c;
  }();
  return ctx;
}

}  // namespace

LiveTransport::LiveTransport(Clock& clock, double per_ip_rate)
    : clock_(clock), limiter_(clock, per_ip_rate) {
  // SSL_write on a torn-down connection must surface as an error, not kill
  // the process.
  std::signal(SIGPIPE, SIG_IGN);
}

HttpOutcome LiveTransport::get_http(const ProbeRequest& req) {
  HttpOutcome out;
  if (req.ip.is_private()) {
    out.error = kPrivateSkipped;
    return out;
  }
  limiter_.acquire(req.ip);
  Deadline dl{&clock_, clock_.now_micros() + static_cast<std::int64_t>(req.timeout_secs * 1e6)};

  std::string err;
  int fd = connect_socket(req.ip, req.port, dl, &err);
  if (fd < 0) {
    out.error = err;
    return out;
  }
  PlainStream stream(fd, dl);
  std::string request = build_request(req);
  if (!stream.write_all(reinterpret_cast<const std::uint8_t*>(request.data()), request.size())) {
    out.error = stream.error;
    ::close(fd);
    return out;
  }
  std::string rerr;
  out.page = read_response(stream, req.max_body_bytes, &rerr);
  if (!out.page) out.error = rerr;
  ::close(fd);
  return out;
}

TlsOutcome LiveTransport::get_https(const ProbeRequest& req) {
  TlsOutcome out;
  if (req.ip.is_private()) {
    out.error = kPrivateSkipped;
    return out;
  }
  limiter_.acquire(req.ip);
  Deadline dl{&clock_, clock_.now_micros() + static_cast<std::int64_t>(req.timeout_secs * 1e6)};

  std::string err;
  int fd = connect_socket(req.ip, req.port, dl, &err);
  if (fd < 0) {
    out.error = err;
    return out;
  }

  SSL* ssl = SSL_new(client_ctx());
  if (!ssl) {
    out.error = kIoError;
    ::close(fd);
    return out;
  }
  SSL_set_fd(ssl, fd);
  if (!req.sni.empty()) SSL_set_tlsext_host_name(ssl, req.sni.c_str());

  bool handshake_done = false;
  while (!handshake_done) {
    ERR_clear_error();
    int rc = SSL_connect(ssl);
    if (rc == 1) {
      handshake_done = true;
      break;
    }
    int e = SSL_get_error(ssl, rc);
    if (e == SSL_ERROR_WANT_READ || e == SSL_ERROR_WANT_WRITE) {
      int ready = wait_fd(fd, e == SSL_ERROR_WANT_WRITE ? POLLOUT : POLLIN, dl);
      if (ready == 0) {
        out.error = kTimeout;
      } else if (ready < 0) {
        out.error = kIoError;
      } else {
        continue;
      }
    } else {
      out.error = kTlsFailed;
    }
    SSL_free(ssl);
    ::close(fd);
    return out;
  }

  // The certificates exactly as presented, leaf first, kept even when the
  // page request below fails.
  if (STACK_OF(X509)* stack = SSL_get_peer_cert_chain(ssl)) {
    for (int i = 0; i < sk_X509_num(stack); ++i) {
      X509* cert = sk_X509_value(stack, i);
      int len = i2d_X509(cert, nullptr);
      if (len <= 0) continue;
      std::vector<std::uint8_t> der(static_cast<size_t>(len));
      std::uint8_t* p = der.data();
      i2d_X509(cert, &p);
      out.chain.push_back(std::move(der));
    }
  }

  TlsStream stream(ssl, fd, dl);
  std::string request = build_request(req);
  if (!stream.write_all(reinterpret_cast<const std::uint8_t*>(request.data()), request.size())) {
    out.error = stream.error;
    SSL_free(ssl);
    ::close(fd);
    return out;
  }
  std::string rerr;
  out.page = read_response(stream, req.max_body_bytes, &rerr);
  if (!out.page) out.error = rerr;
  SSL_free(ssl);
  ::close(fd);
  return out;
}

}  // namespace dnsverdict::probe
