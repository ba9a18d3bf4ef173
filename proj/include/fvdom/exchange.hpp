#pragma once

#include <condition_variable>
#include <cstdint>
#include <deque>
#include <functional>
#include <map>
#include <memory>
#include <mutex>
#include <span>
#include <thread>
#include <vector>

#include "fvdom/fields.hpp"
#include "fvdom/partition.hpp"

namespace fvdom {

enum Tag : int {
  kTagHalo = 1,
  kTagHaloGhost = 2,
  kTagAllPairs = 3,
  kTagReduce = 10,
  kTagBroadcast = 11,
  kTagGather = 12,
};

// Point-to-point endpoint of one partition. send() never waits for the matching recv();
// messages between a pair with equal tags arrive in the order they were sent.
class Transport {
 public:
  virtual ~Transport() = default;
  virtual int rank() const = 0;
  virtual int size() const = 0;
  virtual void send(int dst, int tag, std::span<const double> payload) = 0;
  virtual std::vector<double> recv(int src, int tag) = 0;
};

// Thread-safe store of delivered messages keyed by (sender, tag).
class Mailbox {
 public:
  void deliver(int src, int tag, std::vector<double> payload);
  std::vector<double> take(int owner, int src, int tag);
  void abort();
  void close_peer(int src);

 private:
  std::mutex mutex_;
  std::condition_variable cv_;
  std::map<std::pair<int, int>, std::deque<std::vector<double>>> queues_;
  std::vector<int> closed_;
  bool aborted_ = false;
};

// In-process transport: partitions are threads exchanging through shared mailboxes.
class InProcessHub {
 public:
  explicit InProcessHub(int workers);
  int size() const { return static_cast<int>(boxes_.size()); }
  Transport& endpoint(int rank) { return *endpoints_[rank]; }
  void abort();

 private:
  class Endpoint;
  std::vector<std::unique_ptr<Mailbox>> boxes_;
  std::vector<std::unique_ptr<Transport>> endpoints_;
};

// Wire frame: u64 LE payload byte count, u32 LE sender, u32 LE tag, payload as LE float64.
struct Frame {
  int sender = 0;
  int tag = 0;
  std::vector<double> payload;
};
inline constexpr std::size_t kFrameHeaderBytes = 16;
std::vector<std::uint8_t> encode_frame(int sender, int tag, std::span<const double> payload);
// Decodes one complete frame; throws TransportError on a truncated or inconsistent buffer.
Frame decode_frame(std::span<const std::uint8_t> bytes);

// Transport over connected local stream sockets, one per peer (peer_fds[rank] unused).
// A reader thread per peer drains incoming frames so send() cannot deadlock.
class SocketTransport final : public Transport {
 public:
  SocketTransport(int rank, std::vector<int> peer_fds);
  ~SocketTransport() override;
  SocketTransport(const SocketTransport&) = delete;
  SocketTransport& operator=(const SocketTransport&) = delete;

  int rank() const override { return rank_; }
  int size() const override { return static_cast<int>(fds_.size()); }
  void send(int dst, int tag, std::span<const double> payload) override;
  std::vector<double> recv(int src, int tag) override;

 private:
  void reader_loop(int peer);

  int rank_;
  std::vector<int> fds_;
  std::vector<std::mutex> send_mutex_;
  Mailbox box_;
  std::vector<std::thread> readers_;
};

using WorkerFn = std::function<void(Transport&)>;

// Runs fn on `workers` threads connected through an InProcessHub. The first worker
// exception aborts the others and is rethrown.
void run_workers(int workers, const WorkerFn& fn);

// Same, but the threads talk over socketpair() connections with SocketTransport.
void run_workers_socket(int workers, const WorkerFn& fn);

// Forks `workers` processes connected with socketpair() and SocketTransport. Returns the
// number of processes that failed (non-zero exit or exception).
int run_processes_socket(int workers, const WorkerFn& fn);

// Worker count from FVDOM_WORKERS, or `fallback` when unset or invalid.
int default_worker_count(int fallback = 1);

// Collectives built on point-to-point messages. Reductions gather rank partials on rank 0
// and combine them with a fixed pairwise tree, so results are reproducible for fixed K.
void allreduce_sum(Transport& t, std::span<double> values);
double allreduce_sum(Transport& t, double value);
double allreduce_max(Transport& t, double value);
void barrier(Transport& t);
// Rank 0 receives every rank's buffer (in rank order); other ranks get an empty result.
std::vector<std::vector<double>> gather_to_root(Transport& t, std::span<const double> local);

void exchange_halo(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                   std::span<CellField* const> fields);
void exchange_halo(const LocalDomain& domain, const CommPlan& plan, Transport& t, CellField& field);

// Sends first, runs `interior` while messages are in flight, then completes receives.
void exchange_halo_overlapped(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                              std::span<CellField* const> fields,
                              const std::function<void()>& interior);

// Every rank messages every other rank (empty payloads to non-neighbours).
void exchange_halo_all_pairs(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                             std::span<CellField* const> fields);

// Moves ghost values of boundary faces into neighbours' haloghost slots.
void exchange_haloghost(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                        std::span<CellField* const> fields);
void exchange_haloghost(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                        CellField& field);

struct ExchangeTiming {
  double all_pairs = 0.0;
  double neighbor_blocking = 0.0;
  double neighbor_overlapped = 0.0;
  double payload_doubles = 0.0;  // largest per-rank send volume
};

// Mean seconds per exchange for the three variants, max over ranks. Collective.
ExchangeTiming barrier_time(const LocalDomain& domain, const CommPlan& plan, Transport& t,
                            int stride, int repetitions);

}  // namespace fvdom
