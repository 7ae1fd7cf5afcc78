#pragma once

#include <algorithm>
#include <chrono>
#include <condition_variable>
#include <cstdint>
#include <memory>
#include <mutex>
#include <string>
#include <string_view>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/executor.hpp"
#include "vqbe/scene_model.hpp"

namespace vqbe {

enum class Label : std::uint8_t { neg = 0, pos = 1 };

inline const char* to_string(Label l) { return l == Label::pos ? "pos" : "neg"; }

inline Label parse_label(std::string_view s) {
    if (s == "pos" || s == "positive" || s == "1" || s == "true") return Label::pos;
    if (s == "neg" || s == "negative" || s == "0" || s == "false") return Label::neg;
    throw ParseError("not a label: '" + std::string(s) + "'", 0, 0);
}

/// A label source. The synthesizer calls it serially, one batch at a time.
class LabelOracle {
public:
    virtual ~LabelOracle() = default;
    virtual Label label(const std::string& vid) = 0;
    virtual std::vector<Label> label_batch(const std::vector<std::string>& vids) {
        std::vector<Label> out;
        out.reserve(vids.size());
        for (const auto& v : vids) out.push_back(label(v));
        return out;
    }
};

/// Labels every segment by whether the target query matches it. Memoized.
class GroundTruthOracle : public LabelOracle {
public:
    GroundTruthOracle(Query target, std::shared_ptr<const SegmentStore> store, PredicateRegistry registry)
        : target_(std::move(target)), store_(std::move(store)), registry_(std::move(registry)),
          compiled_(target_, registry_) {}

    Label label(const std::string& vid) override {
        {
            std::lock_guard lock(mu_);
            if (auto it = memo_.find(vid); it != memo_.end()) return it->second;
        }
        const Segment* seg = store_->find(vid);
        if (seg == nullptr) throw OracleError("ground-truth oracle: unknown vid '" + vid + "'");
        const Label l = matches(compiled_, *seg) ? Label::pos : Label::neg;
        std::lock_guard lock(mu_);
        memo_.emplace(vid, l);
        return l;
    }

    const Query& target() const noexcept { return target_; }

private:
    Query target_;
    std::shared_ptr<const SegmentStore> store_;
    PredicateRegistry registry_;
    CompiledQuery compiled_;
    std::mutex mu_;
    std::unordered_map<std::string, Label> memo_;
};

struct NoiseSpec {
    double fn_rate = 0;
    double fp_rate = 0;
    std::uint64_t seed = 0;

    /// False-positive rate tied to one tenth of the false-negative rate.
    static NoiseSpec protocol(double fn_rate, std::uint64_t seed) { return {fn_rate, 0.1 * fn_rate, seed}; }

    void validate() const {
        if (!(fn_rate >= 0 && fn_rate <= 1 && fp_rate >= 0 && fp_rate <= 1))
            throw PreconditionError("noise rates must lie in [0, 1]");
    }
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t fnv1a(std::string_view s) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

/// Uniform draw in [0, 1) that depends only on (seed, vid).
inline double vid_uniform(std::uint64_t seed, std::string_view vid) {
    return static_cast<double>(splitmix64(fnv1a(vid) ^ splitmix64(seed)) >> 11) * 0x1.0p-53;
}

/// Flips base labels once per vid: positives to negative with fn_rate,
/// negatives to positive with fp_rate. The decision is frozen per (seed, vid).
class NoisyOracle : public LabelOracle {
public:
    NoisyOracle(std::shared_ptr<LabelOracle> base, NoiseSpec noise) : base_(std::move(base)), noise_(noise) {
        noise_.validate();
    }

    Label label(const std::string& vid) override {
        const Label truth = base_->label(vid);
        const double u = vid_uniform(noise_.seed, vid);
        if (truth == Label::pos) return u < noise_.fn_rate ? Label::neg : Label::pos;
        return u < noise_.fp_rate ? Label::pos : Label::neg;
    }

private:
    std::shared_ptr<LabelOracle> base_;
    NoiseSpec noise_;
};

/// Raised on the labeler side of a LabelChannel.
class LabelConflict : public Error {
public:
    using Error::Error;
};
class LabelNotPending : public Error {
public:
    using Error::Error;
};

/// Rendezvous between a blocked synthesis loop and a human labeler. The
/// synthesis side publishes a batch of vids and waits until every one of them
/// has a label; the labeler side sees the pending vids and submits labels,
/// possibly in several partial submissions.
class LabelChannel {
public:
    /// Blocks until every vid is labeled. Preloaded labels (from a replayed
    /// event log) answer immediately without being published.
    std::vector<Label> request(const std::vector<std::string>& vids, std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        if (closed_) throw OracleError("label channel closed");
        for (const auto& v : vids) {
            if (labeled_.count(v) || requested_.count(v))
                throw OracleError("vid '" + v + "' was already requested in this session");
        }
        std::vector<std::string> published;
        for (const auto& v : vids) {
            requested_.insert(v);
            if (auto it = preloaded_.find(v); it != preloaded_.end()) {
                labeled_[v] = it->second;
                preloaded_.erase(it);
            } else {
                published.push_back(v);
            }
        }
        pending_ = published;
        ++generation_;
        changed_.notify_all();
        const bool done = changed_.wait_for(lock, timeout, [&] {
            if (closed_) return true;
            for (const auto& v : vids)
                if (!labeled_.count(v)) return false;
            return true;
        });
        pending_.clear();
        ++generation_;
        changed_.notify_all();
        if (closed_) throw OracleError("label channel closed");
        if (!done) throw OracleError("timed out waiting for labels");
        std::vector<Label> out;
        for (const auto& v : vids) out.push_back(labeled_.at(v));
        return out;
    }

    void submit(const std::string& vid, Label label) { submit_batch({{vid, label}}); }

    /// All-or-nothing: every vid is checked before any label is recorded.
    void submit_batch(const std::vector<std::pair<std::string, Label>>& labels) {
        std::lock_guard lock(mu_);
        if (closed_) throw LabelConflict("session no longer accepts labels");
        std::unordered_set<std::string> batch;
        for (const auto& [vid, l] : labels) {
            if (labeled_.count(vid) || !batch.insert(vid).second)
                throw LabelConflict("vid '" + vid + "' is already labeled");
            if (std::find(pending_.begin(), pending_.end(), vid) == pending_.end())
                throw LabelNotPending("vid '" + vid + "' is not pending");
        }
        for (const auto& [vid, l] : labels) {
            labeled_[vid] = l;
            pending_.erase(std::find(pending_.begin(), pending_.end(), vid));
        }
        ++generation_;
        changed_.notify_all();
    }

    /// Vids still waiting for a label.
    std::vector<std::string> pending() const {
        std::lock_guard lock(mu_);
        return pending_;
    }

    /// Waits until the pending set is non-empty, the channel closes, or the
    /// timeout expires. Used by long-polling readers.
    std::vector<std::string> wait_pending(std::chrono::milliseconds timeout) {
        std::unique_lock lock(mu_);
        changed_.wait_for(lock, timeout, [&] { return closed_ || !pending_.empty(); });
        return pending_;
    }

    void preload(const std::string& vid, Label label) {
        std::lock_guard lock(mu_);
        preloaded_[vid] = label;
    }

    bool was_requested(const std::string& vid) const {
        std::lock_guard lock(mu_);
        return requested_.count(vid) != 0;
    }

    void close() {
        std::lock_guard lock(mu_);
        closed_ = true;
        changed_.notify_all();
    }

    bool closed() const {
        std::lock_guard lock(mu_);
        return closed_;
    }

    /// Bumped on every state change, for pollers that want change detection.
    std::uint64_t generation() const {
        std::lock_guard lock(mu_);
        return generation_;
    }

private:
    mutable std::mutex mu_;
    std::condition_variable changed_;
    std::vector<std::string> pending_;
    std::unordered_set<std::string> requested_;
    std::unordered_map<std::string, Label> labeled_;
    std::unordered_map<std::string, Label> preloaded_;
    std::uint64_t generation_ = 0;
    bool closed_ = false;
};

/// Blocks the synthesis loop on a human answering through a LabelChannel.
class InteractiveOracle : public LabelOracle {
public:
    explicit InteractiveOracle(std::shared_ptr<LabelChannel> channel,
                               std::chrono::milliseconds timeout = std::chrono::minutes(30))
        : channel_(std::move(channel)), timeout_(timeout) {}

    Label label(const std::string& vid) override { return label_batch({vid}).front(); }

    std::vector<Label> label_batch(const std::vector<std::string>& vids) override {
        if (vids.empty()) return {};
        return channel_->request(vids, timeout_);
    }

    LabelChannel& channel() { return *channel_; }

private:
    std::shared_ptr<LabelChannel> channel_;
    std::chrono::milliseconds timeout_;
};

/// The first `human_count` labels come from `human`, the rest from `fallback`.
class MixedOracle : public LabelOracle {
public:
    MixedOracle(std::shared_ptr<LabelOracle> human, std::shared_ptr<LabelOracle> fallback, std::size_t human_count)
        : human_(std::move(human)), fallback_(std::move(fallback)), remaining_(human_count) {}

    Label label(const std::string& vid) override { return label_batch({vid}).front(); }

    std::vector<Label> label_batch(const std::vector<std::string>& vids) override {
        const std::size_t h = std::min(remaining_, vids.size());
        remaining_ -= h;
        std::vector<Label> out = human_->label_batch({vids.begin(), vids.begin() + static_cast<std::ptrdiff_t>(h)});
        auto rest = fallback_->label_batch({vids.begin() + static_cast<std::ptrdiff_t>(h), vids.end()});
        out.insert(out.end(), rest.begin(), rest.end());
        human_used_ += h;
        fallback_used_ += rest.size();
        return out;
    }

    std::size_t human_used() const noexcept { return human_used_; }
    std::size_t fallback_used() const noexcept { return fallback_used_; }

private:
    std::shared_ptr<LabelOracle> human_, fallback_;
    std::size_t remaining_;
    std::size_t human_used_ = 0, fallback_used_ = 0;
};

}  // namespace vqbe
