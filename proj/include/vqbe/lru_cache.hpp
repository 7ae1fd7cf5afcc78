#pragma once

#include <cstddef>
#include <functional>
#include <list>
#include <memory>
#include <mutex>
#include <optional>
#include <unordered_map>
#include <utility>
#include <vector>

namespace vqbe {

// Bounded map with least-recently-used eviction. Not thread-safe.
template <typename K, typename V, typename Hash = std::hash<K>>
class LruCache {
public:
    explicit LruCache(std::size_t capacity) : capacity_(capacity) {}

    std::size_t capacity() const noexcept { return capacity_; }
    std::size_t size() const noexcept { return map_.size(); }

    // A hit moves the entry to the front.
    std::optional<V> get(const K& key) {
        auto it = map_.find(key);
        if (it == map_.end()) return std::nullopt;
        order_.splice(order_.begin(), order_, it->second);
        return it->second->second;
    }

    // Inserts or overwrites (last write wins), evicting the oldest entry when full.
    void put(const K& key, V value) {
        if (capacity_ == 0) return;
        auto it = map_.find(key);
        if (it != map_.end()) {
            it->second->second = std::move(value);
            order_.splice(order_.begin(), order_, it->second);
            return;
        }
        if (map_.size() >= capacity_) {
            map_.erase(order_.back().first);
            order_.pop_back();
        }
        order_.emplace_front(key, std::move(value));
        map_.emplace(key, order_.begin());
    }

    void clear() {
        map_.clear();
        order_.clear();
    }

private:
    std::size_t capacity_;
    std::list<std::pair<K, V>> order_;
    std::unordered_map<K, typename std::list<std::pair<K, V>>::iterator, Hash> map_;
};

// LRU split into independently locked shards; safe for concurrent get/put.
// Eviction is per shard, so the global order is approximate.
template <typename K, typename V, typename Hash = std::hash<K>>
class ShardedLruCache {
public:
    explicit ShardedLruCache(std::size_t capacity, std::size_t shards = 16) {
        if (shards == 0) shards = 1;
        const std::size_t per = capacity / shards + (capacity % shards ? 1 : 0);
        for (std::size_t i = 0; i < shards; ++i) shards_.push_back(std::make_unique<Shard>(per));
    }

    std::optional<V> get(const K& key) {
        Shard& s = shard(key);
        std::lock_guard lock(s.mu);
        return s.lru.get(key);
    }

    void put(const K& key, V value) {
        Shard& s = shard(key);
        std::lock_guard lock(s.mu);
        s.lru.put(key, std::move(value));
    }

    std::size_t size() const {
        std::size_t n = 0;
        for (const auto& s : shards_) {
            std::lock_guard lock(s->mu);
            n += s->lru.size();
        }
        return n;
    }

    void clear() {
        for (auto& s : shards_) {
            std::lock_guard lock(s->mu);
            s->lru.clear();
        }
    }

private:
    struct Shard {
        explicit Shard(std::size_t cap) : lru(cap) {}
        mutable std::mutex mu;
        LruCache<K, V, Hash> lru;
    };

    Shard& shard(const K& key) { return *shards_[Hash{}(key) % shards_.size()]; }

    std::vector<std::unique_ptr<Shard>> shards_;
};

}  // namespace vqbe
