#pragma once

#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <deque>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <vector>

#include "edgeml/common/error.hpp"
#include "edgeml/common/glob.hpp"

namespace edgeml {

/// Consumer end of a subscription. Bounded: when the dispatcher finds the
/// buffer full the item is dropped and the stream is marked lagging; once the
/// buffered items are consumed, pop() reports the loss as an Unavailable error.
template <class T>
class Stream {
 public:
  explicit Stream(std::size_t capacity) : capacity_(capacity) {}

  Stream(const Stream&) = delete;
  Stream& operator=(const Stream&) = delete;

  std::optional<T> try_pop() {
    std::lock_guard lock(mu_);
    return pop_locked();
  }

  /// Blocks up to `timeout`; nullopt on timeout or after cancel.
  std::optional<T> pop(std::chrono::milliseconds timeout) {
    std::unique_lock lock(mu_);
    cv_.wait_for(lock, timeout, [&] { return !items_.empty() || cancelled_ || lagging_; });
    return pop_locked();
  }

  std::vector<T> drain(std::size_t max_items = SIZE_MAX) {
    std::lock_guard lock(mu_);
    std::vector<T> out;
    while (!items_.empty() && out.size() < max_items) {
      out.push_back(std::move(items_.front()));
      items_.pop_front();
    }
    if (out.empty() && lagging_) throw_lagging();
    return out;
  }

  void cancel() {
    {
      std::lock_guard lock(mu_);
      cancelled_ = true;
      items_.clear();
    }
    cv_.notify_all();
  }

  bool cancelled() const {
    std::lock_guard lock(mu_);
    return cancelled_;
  }
  bool lagging() const {
    std::lock_guard lock(mu_);
    return lagging_;
  }
  std::uint64_t dropped() const {
    std::lock_guard lock(mu_);
    return dropped_;
  }
  std::uint64_t delivered() const {
    std::lock_guard lock(mu_);
    return delivered_;
  }

  // Dispatcher side.
  bool offer(const T& item) {
    {
      std::lock_guard lock(mu_);
      if (cancelled_) return false;
      if (items_.size() >= capacity_) {
        lagging_ = true;
        ++dropped_;
        cv_.notify_all();
        return false;
      }
      items_.push_back(item);
      ++delivered_;
    }
    cv_.notify_one();
    return true;
  }

 private:
  std::optional<T> pop_locked() {
    if (items_.empty()) {
      if (lagging_ && !cancelled_) throw_lagging();
      return std::nullopt;
    }
    T item = std::move(items_.front());
    items_.pop_front();
    return item;
  }

  [[noreturn]] void throw_lagging() const {
    fail(ErrorKind::Unavailable, "subscription lagging: " + std::to_string(dropped_) + " item(s) dropped");
  }

  const std::size_t capacity_;
  mutable std::mutex mu_;
  std::condition_variable cv_;
  std::deque<T> items_;
  bool cancelled_ = false;
  bool lagging_ = false;
  std::uint64_t dropped_ = 0;
  std::uint64_t delivered_ = 0;
};

/// Ordered publish/subscribe over keyed items. publish() never blocks on
/// consumers: items are queued and a dedicated dispatch thread fans them out
/// in publication order, so per-key order is preserved for every subscriber.
/// A subscriber sees exactly the items published after subscribe() returned.
///
/// KeyOf must provide `const std::string& operator()(const T&) const`.
template <class T, class KeyOf>
class Fanout {
 public:
  explicit Fanout(std::size_t default_capacity = 1 << 16) : default_capacity_(default_capacity) {
    worker_ = std::thread([this] { run(); });
  }

  ~Fanout() {
    {
      std::lock_guard lock(mu_);
      stopping_ = true;
    }
    work_cv_.notify_all();
    worker_.join();
  }

  Fanout(const Fanout&) = delete;
  Fanout& operator=(const Fanout&) = delete;

  std::shared_ptr<Stream<T>> subscribe(const std::string& pattern, std::size_t capacity = 0) {
    Glob glob(pattern);  // validates before touching shared state
    auto stream = std::make_shared<Stream<T>>(capacity ? capacity : default_capacity_);
    std::lock_guard lock(mu_);
    subs_.push_back(Sub{std::move(glob), stream, next_seq_, {}});
    return stream;
  }

  void publish(std::vector<T> items) {
    if (items.empty()) return;
    {
      std::lock_guard lock(mu_);
      if (subs_.empty() && queue_.empty() && dispatched_seq_ == next_seq_) {
        // nobody can observe these; skip the queue
        next_seq_ += items.size();
        dispatched_seq_ = next_seq_;
        return;
      }
      std::uint64_t first = next_seq_;
      next_seq_ += items.size();
      queue_.push_back(Batch{first, std::move(items)});
    }
    work_cv_.notify_one();
  }

  /// Blocks until every item published so far has been offered to subscribers.
  void wait_idle() {
    std::unique_lock lock(mu_);
    idle_cv_.wait(lock, [&] { return dispatched_seq_ == next_seq_; });
  }

  std::size_t subscriber_count() {
    std::lock_guard lock(mu_);
    std::size_t n = 0;
    for (const auto& s : subs_) {
      auto sp = s.stream.lock();
      if (sp && !sp->cancelled()) ++n;
    }
    return n;
  }

 private:
  struct Sub {
    Glob glob;
    std::weak_ptr<Stream<T>> stream;
    std::uint64_t start_seq;
    std::unordered_map<std::string, bool> match_cache;
  };
  struct Batch {
    std::uint64_t first_seq;
    std::vector<T> items;
  };

  // Dispatch thread only.
  void prune_locked() {
    subs_.remove_if([](const Sub& s) {
      auto sp = s.stream.lock();
      return !sp || sp->cancelled();
    });
  }

  void run() {
    std::unique_lock lock(mu_);
    for (;;) {
      work_cv_.wait(lock, [&] { return stopping_ || !queue_.empty(); });
      if (queue_.empty() && stopping_) return;
      Batch batch = std::move(queue_.front());
      queue_.pop_front();
      prune_locked();
      // Only this thread removes list nodes, so the pointers stay valid
      // while unlocked even if subscribe() appends concurrently.
      std::vector<std::pair<Sub*, std::shared_ptr<Stream<T>>>> targets;
      targets.reserve(subs_.size());
      for (auto& s : subs_) {
        if (auto sp = s.stream.lock()) targets.emplace_back(&s, std::move(sp));
      }
      lock.unlock();
      KeyOf key_of;
      for (std::size_t i = 0; i < batch.items.size(); ++i) {
        const std::uint64_t seq = batch.first_seq + i;
        const T& item = batch.items[i];
        const std::string& key = key_of(item);
        for (auto& [sub, stream] : targets) {
          if (seq < sub->start_seq) continue;
          auto [it, inserted] = sub->match_cache.try_emplace(key, false);
          if (inserted) it->second = sub->glob.matches(key);
          if (it->second) stream->offer(item);
        }
      }
      lock.lock();
      dispatched_seq_ = batch.first_seq + batch.items.size();
      idle_cv_.notify_all();
    }
  }

  const std::size_t default_capacity_;
  std::mutex mu_;
  std::condition_variable work_cv_;
  std::condition_variable idle_cv_;
  std::deque<Batch> queue_;
  std::list<Sub> subs_;
  std::uint64_t next_seq_ = 0;
  std::uint64_t dispatched_seq_ = 0;
  bool stopping_ = false;
  std::thread worker_;
};

}  // namespace edgeml
