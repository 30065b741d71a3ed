#pragma once

// Message transport between the coordinator and region workers. Two
// interchangeable channels: an in-process queue pair and a
// length-prefixed binary protocol over local stream sockets. Both carry
// the same frames, so a run produces identical traces on either.
//
// Wire layout, little-endian, after a u32 total-length prefix:
//   u16 version | u16 type | u32 iteration | u32 sender | u32 tie |
//   u8 class ('V'/'S'/0) | u8 pad | u16 count | count * f64 payload
//
// Frame types: Hello (worker registration), StartIter, Boundary (worker
// -> coordinator, boundary rows only), Neighbor (relayed boundary rows),
// SolveDone (regional objective), RegionStats (gamma, rho), Converged,
// Final (full regional solution, coordinator collection only), Abort.

#include <condition_variable>
#include <cstring>
#include <deque>
#include <memory>
#include <mutex>
#include <stdexcept>
#include <string>
#include <vector>

#include <arpa/inet.h>
#include <netinet/in.h>
#include <sys/socket.h>
#include <unistd.h>

namespace acdcopf {

class TransportError : public std::runtime_error {
 public:
  explicit TransportError(const std::string& m) : std::runtime_error(m) {}
};

enum class FrameType : std::uint16_t {
  Hello = 1,
  StartIter = 2,
  Boundary = 3,
  Neighbor = 4,
  SolveDone = 5,
  RegionStats = 6,
  Converged = 7,
  Final = 8,
  Abort = 9,
};

inline constexpr std::uint16_t kProtocolVersion = 1;

struct WireFrame {
  std::uint16_t version = kProtocolVersion;
  FrameType type = FrameType::Hello;
  std::uint32_t iteration = 0;
  std::uint32_t sender = 0;
  std::uint32_t tie = 0;
  char cls = 0;
  std::vector<double> payload;
};

inline std::vector<std::uint8_t> encode_frame(const WireFrame& f) {
  const std::uint32_t body = 2 + 2 + 4 + 4 + 4 + 1 + 1 + 2 + 8 * static_cast<std::uint32_t>(f.payload.size());
  std::vector<std::uint8_t> buf(4 + body);
  std::uint8_t* p = buf.data();
  auto put16 = [&p](std::uint16_t v) { std::memcpy(p, &v, 2); p += 2; };
  auto put32 = [&p](std::uint32_t v) { std::memcpy(p, &v, 4); p += 4; };
  put32(body);
  put16(f.version);
  put16(static_cast<std::uint16_t>(f.type));
  put32(f.iteration);
  put32(f.sender);
  put32(f.tie);
  *p++ = static_cast<std::uint8_t>(f.cls);
  *p++ = 0;
  put16(static_cast<std::uint16_t>(f.payload.size()));
  if (!f.payload.empty()) {
    std::memcpy(p, f.payload.data(), 8 * f.payload.size());
  }
  return buf;
}

// Decodes the body (after the length prefix was consumed).
inline WireFrame decode_frame(const std::uint8_t* p, std::size_t len) {
  if (len < 18) throw TransportError("short frame");
  WireFrame f;
  std::uint16_t t16 = 0;
  std::memcpy(&f.version, p, 2);
  p += 2;
  if (f.version != kProtocolVersion)
    throw TransportError("unsupported protocol version " + std::to_string(f.version));
  std::memcpy(&t16, p, 2);
  p += 2;
  f.type = static_cast<FrameType>(t16);
  std::memcpy(&f.iteration, p, 4);
  p += 4;
  std::memcpy(&f.sender, p, 4);
  p += 4;
  std::memcpy(&f.tie, p, 4);
  p += 4;
  f.cls = static_cast<char>(*p++);
  ++p;  // pad
  std::uint16_t count = 0;
  std::memcpy(&count, p, 2);
  p += 2;
  if (len != 18u + 8u * count) throw TransportError("frame length mismatch");
  f.payload.resize(count);
  if (count > 0) std::memcpy(f.payload.data(), p, 8u * count);
  return f;
}

class Channel {
 public:
  virtual ~Channel() = default;
  virtual void send(const WireFrame& f) = 0;
  virtual WireFrame recv() = 0;
};

// --- in-process -------------------------------------------------------------

namespace detail {

struct FrameQueue {
  std::mutex mu;
  std::condition_variable cv;
  std::deque<WireFrame> q;
  bool closed = false;

  void push(const WireFrame& f) {
    {
      std::lock_guard<std::mutex> lk(mu);
      if (closed) throw TransportError("channel closed");
      q.push_back(f);
    }
    cv.notify_one();
  }
  WireFrame pop() {
    std::unique_lock<std::mutex> lk(mu);
    cv.wait(lk, [&] { return !q.empty() || closed; });
    if (q.empty()) throw TransportError("channel closed");
    WireFrame f = q.front();
    q.pop_front();
    return f;
  }
  void close() {
    {
      std::lock_guard<std::mutex> lk(mu);
      closed = true;
    }
    cv.notify_all();
  }
};

}  // namespace detail

// One direction-pair of queues; `a` and `b` are the two endpoints.
class InprocPipe {
 public:
  class End : public Channel {
   public:
    End(std::shared_ptr<detail::FrameQueue> out, std::shared_ptr<detail::FrameQueue> in)
        : out_(std::move(out)), in_(std::move(in)) {}
    void send(const WireFrame& f) override {
      // Frames cross the in-process boundary through the same encoder as
      // the socket path, so both transports exercise identical bytes.
      auto bytes = encode_frame(f);
      out_->push(decode_frame(bytes.data() + 4, bytes.size() - 4));
    }
    WireFrame recv() override { return in_->pop(); }
    void close() {
      out_->close();
      in_->close();
    }

   private:
    std::shared_ptr<detail::FrameQueue> out_, in_;
  };

  InprocPipe()
      : q_ab_(std::make_shared<detail::FrameQueue>()), q_ba_(std::make_shared<detail::FrameQueue>()) {}
  std::unique_ptr<End> end_a() { return std::make_unique<End>(q_ab_, q_ba_); }
  std::unique_ptr<End> end_b() { return std::make_unique<End>(q_ba_, q_ab_); }

 private:
  std::shared_ptr<detail::FrameQueue> q_ab_, q_ba_;
};

// --- sockets ----------------------------------------------------------------

class SocketChannel : public Channel {
 public:
  explicit SocketChannel(int fd) : fd_(fd) {}
  SocketChannel(const SocketChannel&) = delete;
  SocketChannel& operator=(const SocketChannel&) = delete;
  ~SocketChannel() override {
    if (fd_ >= 0) ::close(fd_);
  }

  void send(const WireFrame& f) override {
    auto buf = encode_frame(f);
    std::size_t off = 0;
    while (off < buf.size()) {
      ssize_t n = ::send(fd_, buf.data() + off, buf.size() - off, MSG_NOSIGNAL);
      if (n <= 0) throw TransportError("socket send failed");
      off += static_cast<std::size_t>(n);
    }
  }

  WireFrame recv() override {
    std::uint8_t len_buf[4];
    read_exact(len_buf, 4);
    std::uint32_t body = 0;
    std::memcpy(&body, len_buf, 4);
    if (body > (1u << 26)) throw TransportError("oversized frame");
    std::vector<std::uint8_t> buf(body);
    read_exact(buf.data(), body);
    return decode_frame(buf.data(), body);
  }

 private:
  void read_exact(std::uint8_t* dst, std::size_t len) {
    std::size_t off = 0;
    while (off < len) {
      ssize_t n = ::recv(fd_, dst + off, len - off, 0);
      if (n <= 0) throw TransportError("socket closed mid-frame");
      off += static_cast<std::size_t>(n);
    }
  }
  int fd_;
};

// Listening endpoint on 127.0.0.1 with an ephemeral port.
class SocketListener {
 public:
  SocketListener() {
    fd_ = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd_ < 0) throw TransportError("cannot create socket");
    int one = 1;
    ::setsockopt(fd_, SOL_SOCKET, SO_REUSEADDR, &one, sizeof(one));
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = 0;
    if (::bind(fd_, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0)
      throw TransportError("cannot bind loopback socket");
    if (::listen(fd_, 64) != 0) throw TransportError("cannot listen");
    socklen_t len = sizeof(addr);
    ::getsockname(fd_, reinterpret_cast<sockaddr*>(&addr), &len);
    port_ = ntohs(addr.sin_port);
  }
  ~SocketListener() {
    if (fd_ >= 0) ::close(fd_);
  }
  int port() const { return port_; }

  std::unique_ptr<SocketChannel> accept() {
    int cfd = ::accept(fd_, nullptr, nullptr);
    if (cfd < 0) throw TransportError("accept failed");
    return std::make_unique<SocketChannel>(cfd);
  }

  static std::unique_ptr<SocketChannel> connect(int port) {
    int fd = ::socket(AF_INET, SOCK_STREAM, 0);
    if (fd < 0) throw TransportError("cannot create socket");
    sockaddr_in addr{};
    addr.sin_family = AF_INET;
    addr.sin_addr.s_addr = htonl(INADDR_LOOPBACK);
    addr.sin_port = htons(static_cast<std::uint16_t>(port));
    if (::connect(fd, reinterpret_cast<sockaddr*>(&addr), sizeof(addr)) != 0) {
      ::close(fd);
      throw TransportError("cannot connect to coordinator");
    }
    return std::make_unique<SocketChannel>(fd);
  }

 private:
  int fd_ = -1;
  int port_ = 0;
};

}  // namespace acdcopf
