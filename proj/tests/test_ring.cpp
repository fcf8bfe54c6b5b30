#include <gtest/gtest.h>

#include <set>
#include <thread>

#include "retisonic/ring.hpp"

using retisonic::runtime::DropOldestRing;

namespace {
struct Item {
  std::uint64_t ring_seq = 0;
  int value = 0;
};
std::unique_ptr<Item> make(int v) {
  auto p = std::make_unique<Item>();
  p->value = v;
  return p;
}
}  // namespace

TEST(Ring, FifoBelowCapacity) {
  DropOldestRing<Item> r(4);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(r.push(make(i)), nullptr);
  for (int i = 0; i < 3; ++i) EXPECT_EQ(r.pop()->value, i);
  EXPECT_EQ(r.pop(), nullptr);
  EXPECT_EQ(r.dropped(), 0u);
}

TEST(Ring, OverflowDisplacesTheOldest) {
  DropOldestRing<Item> r(4);
  std::vector<int> displaced;
  for (int i = 0; i < 6; ++i)
    if (auto old = r.push(make(i))) displaced.push_back(old->value);
  EXPECT_EQ(displaced, (std::vector<int>{0, 1}));
  std::vector<int> got, stale;
  const auto drain = [&] {
    while (auto p = r.pop([&](std::unique_ptr<Item> s) { stale.push_back(s->value); })) got.push_back(p->value);
  };
  drain();
  EXPECT_EQ(got, (std::vector<int>{4, 5}));  // newest survivors first after a lap
  EXPECT_EQ(stale, (std::vector<int>{2}));
  // Item 3 is still parked; the next lap displaces it.
  for (int i = 6; i < 8; ++i)
    if (auto old = r.push(make(i))) displaced.push_back(old->value);
  drain();
  EXPECT_EQ(got, (std::vector<int>{4, 5, 6, 7}));
  EXPECT_EQ(displaced, (std::vector<int>{0, 1, 3}));
  EXPECT_EQ(got.size() + stale.size() + displaced.size(), 8u);
  EXPECT_EQ(r.dropped(), 4u);
}

TEST(Ring, InterleavedUseKeepsOrder) {
  DropOldestRing<Item> r(3);
  int next = 0, expect = 0;
  for (int round = 0; round < 1000; ++round) {
    r.push(make(next++));
    r.push(make(next++));
    EXPECT_EQ(r.pop()->value, expect++);
    EXPECT_EQ(r.pop()->value, expect++);
  }
  EXPECT_EQ(r.dropped(), 0u);
}

TEST(Ring, ConcurrentProducerConsumerLosesNothingSilently) {
  constexpr int kItems = 200000;
  DropOldestRing<Item> r(8);
  std::atomic<bool> done{false};
  std::size_t displaced = 0;
  std::thread producer([&] {
    for (int i = 0; i < kItems; ++i)
      if (r.push(make(i))) ++displaced;
    done = true;
  });
  std::set<int> seen;
  std::size_t stale = 0, dup = 0;
  int last = -1;
  std::size_t backwards = 0;
  const auto drain = [&] {
    while (auto p = r.pop([&](std::unique_ptr<Item>) { ++stale; })) {
      dup += !seen.insert(p->value).second;
      backwards += p->value < last;
      last = p->value;
    }
  };
  while (!done) drain();
  producer.join();
  drain();
  std::size_t stranded_new = 0;
  r.reclaim([&](std::unique_ptr<Item> p) {
    ++stale;
    stranded_new += p->value > last;
  });
  EXPECT_EQ(stranded_new, 0u);
  EXPECT_EQ(dup, 0u);
  EXPECT_EQ(seen.size() + stale + displaced, static_cast<std::size_t>(kItems));
  EXPECT_EQ(r.dropped(), stale + displaced);
  EXPECT_TRUE(seen.count(kItems - 1));
  EXPECT_LE(backwards, r.dropped());
}
