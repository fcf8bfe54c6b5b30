#pragma once

// Single-producer single-consumer ring of owned pointers with drop-oldest
// overflow. Each slot is an atomic pointer; push exchanges the new item into
// the next slot and gets back whatever was still there (an unconsumed item a
// full lap old, i.e. the oldest). Items carry a sequence number so the
// consumer can skip entries left behind by a lap; after a lap the survivors
// may be delivered newest first. Neither side blocks or allocates.

#include <atomic>
#include <cstdint>
#include <memory>
#include <vector>

namespace retisonic::runtime {

/// T must have a `std::uint64_t ring_seq` member.
template <class T>
class DropOldestRing {
 public:
  explicit DropOldestRing(std::size_t capacity) : slots_(capacity) {
    for (auto& s : slots_) s.store(nullptr, std::memory_order_relaxed);
  }
  ~DropOldestRing() {
    for (auto& s : slots_) delete s.exchange(nullptr);
  }
  DropOldestRing(const DropOldestRing&) = delete;
  DropOldestRing& operator=(const DropOldestRing&) = delete;

  std::size_t capacity() const { return slots_.size(); }

  /// Producer side. Returns the displaced item, if the ring was full.
  std::unique_ptr<T> push(std::unique_ptr<T> item) {
    item->ring_seq = head_;
    T* old = slots_[head_ % slots_.size()].exchange(item.release(), std::memory_order_acq_rel);
    ++head_;
    if (old) dropped_.fetch_add(1, std::memory_order_relaxed);
    return std::unique_ptr<T>(old);
  }

  /// Consumer side. Items overtaken by a lap are passed to `stale`, which
  /// takes ownership.
  template <class Stale>
  std::unique_ptr<T> pop(Stale&& stale) {
    for (;;) {
      T* p = slots_[tail_ % slots_.size()].exchange(nullptr, std::memory_order_acq_rel);
      if (!p) return nullptr;
      if (p->ring_seq < tail_) {
        // Left behind by a lap; the producer has not reached this index yet.
        dropped_.fetch_add(1, std::memory_order_relaxed);
        stale(std::unique_ptr<T>(p));
        continue;
      }
      tail_ = p->ring_seq + 1;
      return std::unique_ptr<T>(p);
    }
  }
  std::unique_ptr<T> pop() {
    return pop([](std::unique_ptr<T>) {});
  }

  /// Only while the producer is stopped. A lap jump can strand older items
  /// behind an empty slot; this hands them to `stale` and counts them.
  template <class Stale>
  void reclaim(Stale&& stale) {
    for (auto& s : slots_) {
      if (T* p = s.exchange(nullptr, std::memory_order_acq_rel)) {
        dropped_.fetch_add(1, std::memory_order_relaxed);
        stale(std::unique_ptr<T>(p));
      }
    }
  }

  std::uint64_t dropped() const { return dropped_.load(std::memory_order_relaxed); }

 private:
  std::vector<std::atomic<T*>> slots_;
  std::uint64_t head_ = 0;  // producer only
  std::uint64_t tail_ = 0;  // consumer only
  std::atomic<std::uint64_t> dropped_{0};
};

}  // namespace retisonic::runtime
