#include "fvdom/exchange.hpp"

#include <sys/socket.h>
#include <sys/types.h>
#include <sys/wait.h>
#include <unistd.h>

#include <algorithm>
#include <bit>
#include <cerrno>
#include <chrono>
#include <cstdlib>
#include <cstring>
#include <exception>
#include <iostream>
#include <string>

#include "fvdom/errors.hpp"

namespace fvdom {

void Mailbox::deliver(int src, int tag, std::vector<double> payload) {
  {
    std::lock_guard lock(mutex_);
    queues_[{src, tag}].push_back(std::move(payload));
  }
  cv_.notify_all();
}

std::vector<double> Mailbox::take(int owner, int src, int tag) {
  std::unique_lock lock(mutex_);
  auto& q = queues_[{src, tag}];
  cv_.wait(lock, [&] {
    return !q.empty() || aborted_ ||
           std::find(closed_.begin(), closed_.end(), src) != closed_.end();
  });
  if (!q.empty()) {
    auto msg = std::move(q.front());
    q.pop_front();
    return msg;
  }
  if (aborted_) throw TransportError(owner, "exchange aborted after a failure on another partition",
                                   true);
  throw TransportError(owner, "connection to partition " + std::to_string(src) + " closed", true);
}

void Mailbox::abort() {
  {
    std::lock_guard lock(mutex_);
    aborted_ = true;
  }
  cv_.notify_all();
}

void Mailbox::close_peer(int src) {
  {
    std::lock_guard lock(mutex_);
    closed_.push_back(src);
  }
  cv_.notify_all();
}

class InProcessHub::Endpoint final : public Transport {
 public:
  Endpoint(InProcessHub& hub, int rank) : hub_(hub), rank_(rank) {}
  int rank() const override { return rank_; }
  int size() const override { return hub_.size(); }
  void send(int dst, int tag, std::span<const double> payload) override {
    if (dst < 0 || dst >= size()) throw TransportError(rank_, "send to invalid partition " + std::to_string(dst));
    hub_.boxes_[dst]->deliver(rank_, tag, std::vector<double>(payload.begin(), payload.end()));
  }
  std::vector<double> recv(int src, int tag) override {
    if (src < 0 || src >= size()) throw TransportError(rank_, "receive from invalid partition " + std::to_string(src));
    return hub_.boxes_[rank_]->take(rank_, src, tag);
  }

 private:
  InProcessHub& hub_;
  int rank_;
};

InProcessHub::InProcessHub(int workers) {
  if (workers < 1) throw TransportError(0, "worker count must be >= 1");
  for (int r = 0; r < workers; ++r) boxes_.push_back(std::make_unique<Mailbox>());
  for (int r = 0; r < workers; ++r) endpoints_.push_back(std::make_unique<Endpoint>(*this, r));
}

void InProcessHub::abort() {
  for (auto& b : boxes_) b->abort();
}

// ---------------------------------------------------------------------------------------
// Frames

namespace {

void put_le(std::uint8_t* out, std::uint64_t v, int bytes) {
  for (int i = 0; i < bytes; ++i) out[i] = static_cast<std::uint8_t>(v >> (8 * i));
}

std::uint64_t get_le(const std::uint8_t* in, int bytes) {
  std::uint64_t v = 0;
  for (int i = 0; i < bytes; ++i) v |= static_cast<std::uint64_t>(in[i]) << (8 * i);
  return v;
}

void write_all(int fd, const std::uint8_t* data, std::size_t n) {
  while (n > 0) {
    const ssize_t w = ::send(fd, data, n, MSG_NOSIGNAL);
    if (w < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("socket write failed: ") + std::strerror(errno));
    }
    data += w;
    n -= static_cast<std::size_t>(w);
  }
}

// Returns false on orderly EOF before any byte was read.
bool read_all(int fd, std::uint8_t* data, std::size_t n) {
  std::size_t got = 0;
  while (got < n) {
    const ssize_t r = ::read(fd, data + got, n - got);
    if (r == 0) {
      if (got == 0) return false;
      throw std::runtime_error("socket closed mid-frame");
    }
    if (r < 0) {
      if (errno == EINTR) continue;
      throw std::runtime_error(std::string("socket read failed: ") + std::strerror(errno));
    }
    got += static_cast<std::size_t>(r);
  }
  return true;
}

}  // namespace

std::vector<std::uint8_t> encode_frame(int sender, int tag, std::span<const double> payload) {
  std::vector<std::uint8_t> out(kFrameHeaderBytes + payload.size() * 8);
  put_le(out.data(), payload.size() * 8, 8);
  put_le(out.data() + 8, static_cast<std::uint32_t>(sender), 4);
  put_le(out.data() + 12, static_cast<std::uint32_t>(tag), 4);
  for (std::size_t i = 0; i < payload.size(); ++i) {
    put_le(out.data() + kFrameHeaderBytes + 8 * i, std::bit_cast<std::uint64_t>(payload[i]), 8);
  }
  return out;
}

Frame decode_frame(std::span<const std::uint8_t> bytes) {
  if (bytes.size() < kFrameHeaderBytes) throw TransportError(-1, "truncated frame header");
  const std::uint64_t len = get_le(bytes.data(), 8);
  if (len % 8 != 0) throw TransportError(-1, "frame payload length is not a multiple of 8");
  if (bytes.size() != kFrameHeaderBytes + len) throw TransportError(-1, "frame length mismatch");
  Frame f;
  f.sender = static_cast<int>(static_cast<std::uint32_t>(get_le(bytes.data() + 8, 4)));
  f.tag = static_cast<int>(static_cast<std::uint32_t>(get_le(bytes.data() + 12, 4)));
  f.payload.resize(len / 8);
  for (std::size_t i = 0; i < f.payload.size(); ++i) {
    f.payload[i] = std::bit_cast<double>(get_le(bytes.data() + kFrameHeaderBytes + 8 * i, 8));
  }
  return f;
}

// ---------------------------------------------------------------------------------------
// Socket transport

SocketTransport::SocketTransport(int rank, std::vector<int> peer_fds)
    : rank_(rank), fds_(std::move(peer_fds)), send_mutex_(fds_.size()) {
  for (int q = 0; q < size(); ++q) {
    if (q == rank_) continue;
    readers_.emplace_back([this, q] { reader_loop(q); });
  }
}

SocketTransport::~SocketTransport() {
  for (int q = 0; q < size(); ++q) {
    if (q != rank_ && fds_[q] >= 0) ::shutdown(fds_[q], SHUT_RDWR);
  }
  for (auto& t : readers_) t.join();
  for (int q = 0; q < size(); ++q) {
    if (q != rank_ && fds_[q] >= 0) ::close(fds_[q]);
  }
}

void SocketTransport::reader_loop(int peer) {
  try {
    for (;;) {
      std::vector<std::uint8_t> buf(kFrameHeaderBytes);
      if (!read_all(fds_[peer], buf.data(), kFrameHeaderBytes)) break;
      const std::uint64_t len = get_le(buf.data(), 8);
      buf.resize(kFrameHeaderBytes + len);
      if (len > 0 && !read_all(fds_[peer], buf.data() + kFrameHeaderBytes, len)) {
        throw std::runtime_error("socket closed mid-frame");
      }
      Frame f = decode_frame(buf);
      box_.deliver(f.sender, f.tag, std::move(f.payload));
    }
  } catch (const std::exception&) {
  }
  box_.close_peer(peer);
}

void SocketTransport::send(int dst, int tag, std::span<const double> payload) {
  if (dst < 0 || dst >= size() || dst == rank_) {
    throw TransportError(rank_, "send to invalid partition " + std::to_string(dst));
  }
  const auto frame = encode_frame(rank_, tag, payload);
  std::lock_guard lock(send_mutex_[dst]);
  try {
    write_all(fds_[dst], frame.data(), frame.size());
  } catch (const std::exception& e) {
    throw TransportError(rank_, std::string("send to partition ") + std::to_string(dst) + ": " + e.what());
  }
}

std::vector<double> SocketTransport::recv(int src, int tag) {
  if (src < 0 || src >= size() || src == rank_) {
    throw TransportError(rank_, "receive from invalid partition " + std::to_string(src));
  }
  return box_.take(rank_, src, tag);
}

namespace {

// fds[r][q]: rank r's end of the connection to q.
std::vector<std::vector<int>> socket_mesh(int workers) {
  std::vector<std::vector<int>> fds(workers, std::vector<int>(workers, -1));
  for (int r = 0; r < workers; ++r) {
    for (int q = r + 1; q < workers; ++q) {
      int sv[2];
      if (::socketpair(AF_UNIX, SOCK_STREAM, 0, sv) != 0) {
        throw TransportError(r, std::string("socketpair failed: ") + std::strerror(errno));
      }
      fds[r][q] = sv[0];
      fds[q][r] = sv[1];
    }
  }
  return fds;
}

void rethrow_first(const std::vector<std::exception_ptr>& errors) {
  // Prefer the root cause over secondary abort/hang-up errors.
  std::exception_ptr fallback;
  for (const auto& e : errors) {
    if (!e) continue;
    try {
      std::rethrow_exception(e);
    } catch (const TransportError& te) {
      if (!te.secondary()) std::rethrow_exception(e);
      if (!fallback) fallback = e;
    } catch (...) {
      std::rethrow_exception(e);
    }
  }
  if (fallback) std::rethrow_exception(fallback);
}

}  // namespace

void run_workers(int workers, const WorkerFn& fn) {
  InProcessHub hub(workers);
  if (workers == 1) {
    fn(hub.endpoint(0));
    return;
  }
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  threads.reserve(workers);
  for (int r = 0; r < workers; ++r) {
    threads.emplace_back([&, r] {
      try {
        fn(hub.endpoint(r));
      } catch (...) {
        errors[r] = std::current_exception();
        hub.abort();
      }
    });
  }
  for (auto& t : threads) t.join();
  rethrow_first(errors);
}

void run_workers_socket(int workers, const WorkerFn& fn) {
  auto fds = socket_mesh(workers);
  std::vector<std::exception_ptr> errors(workers);
  std::vector<std::thread> threads;
  for (int r = 0; r < workers; ++r) {
    threads.emplace_back([&, r] {
      try {
        SocketTransport t(r, fds[r]);
        fn(t);
      } catch (...) {
        errors[r] = std::current_exception();
      }
    });
  }
  for (auto& t : threads) t.join();
  rethrow_first(errors);
}

int run_processes_socket(int workers, const WorkerFn& fn) {
  auto fds = socket_mesh(workers);
  std::vector<pid_t> children;
  for (int r = 0; r < workers; ++r) {
    std::cout.flush();
    std::cerr.flush();
    const pid_t pid = ::fork();
    if (pid < 0) throw TransportError(r, std::string("fork failed: ") + std::strerror(errno));
    if (pid == 0) {
      for (int a = 0; a < workers; ++a) {
        if (a == r) continue;
        for (int b = 0; b < workers; ++b) {
          if (fds[a][b] >= 0) ::close(fds[a][b]);
        }
      }
      int status = 0;
      try {
        SocketTransport t(r, fds[r]);
        fn(t);
      } catch (const std::exception& e) {
        std::cerr << "worker " << r << ": " << e.what() << "\n";
        status = 1;
      } catch (...) {
        status = 1;
      }
      std::cout.flush();
      std::cerr.flush();
      ::_exit(status);
    }
    children.push_back(pid);
  }
  for (auto& row : fds) {
    for (int fd : row) {
      if (fd >= 0) ::close(fd);
    }
  }
  int failures = 0;
  for (pid_t pid : children) {
    int status = 0;
    if (::waitpid(pid, &status, 0) < 0 || !WIFEXITED(status) || WEXITSTATUS(status) != 0) ++failures;
  }
  return failures;
}

int default_worker_count(int fallback) {
  if (const char* env = std::getenv("FVDOM_WORKERS")) {
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (end != env && *end == '\0' && v >= 1 && v <= 4096) return static_cast<int>(v);
  }
  return fallback;
}

// ---------------------------------------------------------------------------------------
// Collectives

void allreduce_sum(Transport& t, std::span<double> values) {
  const int k = t.size();
  if (k == 1) return;
  if (t.rank() == 0) {
    std::vector<std::vector<double>> parts(k);
    parts[0].assign(values.begin(), values.end());
    for (int r = 1; r < k; ++r) {
      parts[r] = t.recv(r, kTagReduce);
      if (parts[r].size() != values.size()) throw TransportError(0, "reduction size mismatch from partition " + std::to_string(r));
    }
    while (parts.size() > 1) {
      std::vector<std::vector<double>> next;
      for (std::size_t i = 0; i + 1 < parts.size(); i += 2) {
        for (std::size_t j = 0; j < values.size(); ++j) parts[i][j] += parts[i + 1][j];
        next.push_back(std::move(parts[i]));
      }
      if (parts.size() % 2 == 1) next.push_back(std::move(parts.back()));
      parts = std::move(next);
    }
    std::copy(parts[0].begin(), parts[0].end(), values.begin());
    for (int r = 1; r < k; ++r) t.send(r, kTagBroadcast, values);
  } else {
    t.send(0, kTagReduce, values);
    const auto result = t.recv(0, kTagBroadcast);
    if (result.size() != values.size()) throw TransportError(t.rank(), "broadcast size mismatch");
    std::copy(result.begin(), result.end(), values.begin());
  }
}

double allreduce_sum(Transport& t, double value) {
  allreduce_sum(t, std::span<double>(&value, 1));
  return value;
}

double allreduce_max(Transport& t, double value) {
  const int k = t.size();
  if (k == 1) return value;
  if (t.rank() == 0) {
    for (int r = 1; r < k; ++r) value = std::max(value, t.recv(r, kTagReduce).at(0));
    for (int r = 1; r < k; ++r) t.send(r, kTagBroadcast, std::span<const double>(&value, 1));
    return value;
  }
  t.send(0, kTagReduce, std::span<const double>(&value, 1));
  return t.recv(0, kTagBroadcast).at(0);
}

void barrier(Transport& t) { allreduce_sum(t, 0.0); }

std::vector<std::vector<double>> gather_to_root(Transport& t, std::span<const double> local) {
  std::vector<std::vector<double>> out;
  if (t.rank() == 0) {
    out.resize(t.size());
    out[0].assign(local.begin(), local.end());
    for (int r = 1; r < t.size(); ++r) out[r] = t.recv(r, kTagGather);
  } else {
    t.send(0, kTagGather, local);
  }
  return out;
}

// ---------------------------------------------------------------------------------------
// Halo exchange

namespace {

int checked_stride(const LocalDomain& d, int rank, std::span<CellField* const> fields) {
  int stride = 0;
  for (const CellField* f : fields) {
    if (f->slots() != d.slot_count()) {
      throw TransportError(rank, "field has " + std::to_string(f->slots()) + " slots, domain has " +
                                     std::to_string(d.slot_count()));
    }
    stride += f->components;
  }
  return stride;
}

std::vector<double> pack(std::span<const Index> slots, std::span<CellField* const> fields, int stride) {
  std::vector<double> buf;
  buf.reserve(slots.size() * static_cast<std::size_t>(stride));
  for (Index s : slots) {
    for (const CellField* f : fields) {
      for (int c = 0; c < f->components; ++c) buf.push_back((*f)(s, c));
    }
  }
  return buf;
}

void unpack(int rank, int from, const std::vector<double>& buf, std::span<const Index> slots,
            std::span<CellField* const> fields, int stride) {
  if (buf.size() != slots.size() * static_cast<std::size_t>(stride)) {
    throw TransportError(rank, "message from partition " + std::to_string(from) + " has " +
                                   std::to_string(buf.size()) + " values, expected " +
                                   std::to_string(slots.size() * stride));
  }
  std::size_t k = 0;
  for (Index s : slots) {
    for (CellField* f : fields) {
      for (int c = 0; c < f->components; ++c) (*f)(s, c) = buf[k++];
    }
  }
}

void exchange_lists(const LocalDomain& d, const CommPlan& plan, Transport& t,
                    std::span<CellField* const> fields, const std::vector<std::vector<Index>>& send,
                    const std::vector<std::vector<Index>>& recv, int tag,
                    const std::function<void()>* interior) {
  const int stride = checked_stride(d, t.rank(), fields);
  if (plan.neighbors.size() != send.size() || plan.neighbors.size() != recv.size()) {
    throw TransportError(t.rank(), "communication plan lists do not match its neighbour count");
  }
  for (std::size_t i = 0; i < plan.neighbors.size(); ++i) {
    t.send(plan.neighbors[i], tag, pack(send[i], fields, stride));
  }
  if (interior && *interior) (*interior)();
  for (std::size_t i = 0; i < plan.neighbors.size(); ++i) {
    const auto buf = t.recv(plan.neighbors[i], tag);
    unpack(t.rank(), plan.neighbors[i], buf, recv[i], fields, stride);
  }
}

}  // namespace

void exchange_halo(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                   std::span<CellField* const> fields) {
  exchange_lists(domain, plan, t, fields, plan.send_cells, plan.recv_cells, kTagHalo, nullptr);
}

void exchange_halo(const LocalDomain& domain, const CommPlan& plan, Transport& t, CellField& field) {
  CellField* f = &field;
  exchange_halo(domain, plan, t, std::span<CellField* const>(&f, 1));
}

void exchange_halo_overlapped(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                              std::span<CellField* const> fields,
                              const std::function<void()>& interior) {
  exchange_lists(domain, plan, t, fields, plan.send_cells, plan.recv_cells, kTagHalo, &interior);
}

void exchange_halo_all_pairs(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                             std::span<CellField* const> fields) {
  const int stride = checked_stride(domain, t.rank(), fields);
  std::vector<int> slot(t.size(), -1);
  for (std::size_t i = 0; i < plan.neighbors.size(); ++i) slot[plan.neighbors[i]] = static_cast<int>(i);
  for (int q = 0; q < t.size(); ++q) {
    if (q == t.rank()) continue;
    if (slot[q] >= 0) {
      t.send(q, kTagAllPairs, pack(plan.send_cells[slot[q]], fields, stride));
    } else {
      t.send(q, kTagAllPairs, std::span<const double>());
    }
  }
  for (int q = 0; q < t.size(); ++q) {
    if (q == t.rank()) continue;
    const auto buf = t.recv(q, kTagAllPairs);
    if (slot[q] >= 0) {
      unpack(t.rank(), q, buf, plan.recv_cells[slot[q]], fields, stride);
    } else if (!buf.empty()) {
      throw TransportError(t.rank(), "unexpected payload from non-neighbour " + std::to_string(q));
    }
  }
}

void exchange_haloghost(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                        std::span<CellField* const> fields) {
  exchange_lists(domain, plan, t, fields, plan.send_ghosts, plan.recv_ghosts, kTagHaloGhost, nullptr);
}

void exchange_haloghost(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                        CellField& field) {
  CellField* f = &field;
  exchange_haloghost(domain, plan, t, std::span<CellField* const>(&f, 1));
}

ExchangeTiming barrier_time(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                            int stride, int repetitions) {
  using Clock = std::chrono::steady_clock;
  CellField field(domain, std::max(stride, 1));
  for (Index s = 0; s < domain.n_inner; ++s) {
    for (int c = 0; c < field.components; ++c) field(s, c) = static_cast<double>(domain.slot_global[s] + c);
  }
  CellField* fp = &field;
  const std::span<CellField* const> fields(&fp, 1);
  double sink = 0.0;
  const auto interior = [&] {
    for (Index s = 0; s < domain.n_inner; ++s) sink += field(s, 0);
  };
  const int reps = std::max(repetitions, 1);
  auto timed = [&](auto&& body) {
    barrier(t);
    const auto start = Clock::now();
    for (int r = 0; r < reps; ++r) body();
    const double local = std::chrono::duration<double>(Clock::now() - start).count() / reps;
    return allreduce_max(t, local);
  };
  ExchangeTiming out;
  out.all_pairs = timed([&] { exchange_halo_all_pairs(domain, plan, t, fields); });
  out.neighbor_blocking = timed([&] { exchange_halo(domain, plan, t, fields); });
  out.neighbor_overlapped = timed([&] { exchange_halo_overlapped(domain, plan, t, fields, interior); });
  double volume = 0.0;
  for (const auto& s : plan.send_cells) volume += static_cast<double>(s.size()) * field.components;
  out.payload_doubles = allreduce_max(t, volume);
  [[maybe_unused]] volatile double keep = sink;
  return out;
}

}  // namespace fvdom
