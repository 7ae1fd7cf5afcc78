#pragma once

// Interactive synthesis sessions. Each session runs the search on its own
// thread with an InteractiveOracle; the labeler side reads pending vids and
// submits labels through SessionManager. Transport-independent: failures are
// ApiError with an HTTP-style status code.

#include <chrono>
#include <condition_variable>
#include <filesystem>
#include <fstream>
#include <map>
#include <memory>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include <nlohmann/json.hpp>

#include "vqbe/dsl.hpp"
#include "vqbe/errors.hpp"
#include "vqbe/executor.hpp"
#include "vqbe/json_io.hpp"
#include "vqbe/oracle.hpp"
#include "vqbe/scene_model.hpp"
#include "vqbe/synthesizer.hpp"

namespace vqbe {

class ApiError : public Error {
public:
    ApiError(int status, const std::string& msg) : Error(msg), status_(status) {}
    int status() const noexcept { return status_; }

private:
    int status_;
};

enum class SessionState { searching, awaiting_labels, finished, aborted };

inline const char* to_string(SessionState s) {
    switch (s) {
        case SessionState::searching: return "searching";
        case SessionState::awaiting_labels: return "awaiting_labels";
        case SessionState::finished: return "finished";
        case SessionState::aborted: return "aborted";
    }
    return "unknown";
}

/// Render payload for one segment: frame-major boxes plus object attributes.
inline nlohmann::json segment_payload(const Segment& seg) {
    nlohmann::json objects = nlohmann::json::array();
    for (const auto& t : seg.tracks) {
        nlohmann::json attrs = nlohmann::json::object();
        for (const auto& [k, v] : t.props) attrs[k] = v;
        objects.push_back({{"oid", t.oid}, {"cid", t.cid}, {"attributes", attrs}});
    }
    nlohmann::json frames = nlohmann::json::array();
    for (int f = 0; f < seg.frame_count; ++f) {
        nlohmann::json boxes = nlohmann::json::array();
        for (const auto& t : seg.tracks) {
            const auto& s = t.frames[static_cast<std::size_t>(f)];
            if (!s.present) continue;
            boxes.push_back({{"oid", t.oid},
                             {"x1", s.bbox.x1},
                             {"y1", s.bbox.y1},
                             {"x2", s.bbox.x2},
                             {"y2", s.bbox.y2},
                             {"depth", s.depth}});
        }
        frames.push_back({{"fid", f}, {"boxes", boxes}});
    }
    return {{"vid", seg.vid},
            {"frame_count", seg.frame_count},
            {"width", seg.width},
            {"height", seg.height},
            {"objects", objects},
            {"frames", frames}};
}

struct SessionOptions {
    std::chrono::milliseconds label_timeout = std::chrono::minutes(30);
    std::optional<std::filesystem::path> event_log;  // JSONL; replayed by SessionManager::replay
};

class SessionManager {
public:
    explicit SessionManager(PredicateRegistry registry = builtin_registry(), SessionOptions opts = {})
        : registry_(std::move(registry)), opts_(std::move(opts)) {}

    SessionManager(const SessionManager&) = delete;
    SessionManager& operator=(const SessionManager&) = delete;

    ~SessionManager() { shutdown(); }

    void add_dataset(const std::string& id, std::shared_ptr<const SegmentStore> store) {
        std::lock_guard lock(mu_);
        datasets_[id] = std::move(store);
    }

    nlohmann::json list_datasets() const {
        std::lock_guard lock(mu_);
        nlohmann::json out = nlohmann::json::array();
        for (const auto& [id, store] : datasets_) {
            const Segment* first = store->empty() ? nullptr : &store->segments().front();
            out.push_back({{"id", id},
                           {"segments", store->size()},
                           {"frame_count", first ? first->frame_count : 0},
                           {"width", first ? first->width : 0},
                           {"height", first ? first->height : 0}});
        }
        return {{"datasets", out}};
    }

    /// Body: {"dataset": id, "labels": [{"vid", "label"}], "hyper": {...}}.
    /// Returns {"id": session id}.
    nlohmann::json create_session(const nlohmann::json& body) { return create(body, std::nullopt, {}); }

    nlohmann::json get_pending(const std::string& id, std::chrono::milliseconds wait = std::chrono::milliseconds(0)) {
        auto s = find(id);
        std::vector<std::string> pending =
            wait.count() > 0 ? s->channel->wait_pending(wait) : s->channel->pending();
        SessionState state = s->state();
        if (state == SessionState::finished || state == SessionState::aborted) pending.clear();
        else state = pending.empty() ? SessionState::searching : SessionState::awaiting_labels;
        nlohmann::json segs = nlohmann::json::array();
        for (const auto& v : pending) segs.push_back(segment_payload(s->store->at(v)));
        return {{"id", id},
                {"state", to_string(state)},
                {"pending", pending},
                {"segments", segs},
                {"progress", s->progress_json()}};
    }

    /// Body: {"labels": [{"vid", "label"}]}. All-or-nothing.
    nlohmann::json submit_labels(const std::string& id, const nlohmann::json& body) {
        auto s = find(id);
        std::vector<std::pair<std::string, Label>> labels;
        try {
            if (!body.is_object() || !body.contains("labels")) throw ParseError("body needs a 'labels' array", 0, 0);
            const LabeledPool pool = labels_from_json(body.at("labels"));
            for (const auto& e : pool.entries()) labels.emplace_back(e.vid, e.label);
        } catch (const PreconditionError& e) {
            throw ApiError(409, e.what());  // the same vid twice in one submission
        } catch (const Error& e) {
            throw ApiError(400, e.what());
        }
        const SessionState st = s->state();
        if (st == SessionState::finished || st == SessionState::aborted)
            throw ApiError(409, "session " + id + " is " + to_string(st));
        try {
            s->channel->submit_batch(labels);
        } catch (const LabelConflict& e) {
            throw ApiError(409, e.what());
        } catch (const LabelNotPending& e) {
            throw ApiError(400, e.what());
        }
        log_event({{"type", "labels"}, {"session", id}, {"labels", body.at("labels")}});
        return {{"id", id}, {"accepted", labels.size()}, {"state", to_string(s->state())}};
    }

    /// `preview`: index into top_k whose matches over `holdout` are returned;
    /// an empty holdout means every dataset vid that was never labeled.
    nlohmann::json get_result(const std::string& id, std::optional<int> preview = std::nullopt,
                              std::vector<std::string> holdout = {}) {
        auto s = find(id);
        const SessionState st = s->state();
        if (st == SessionState::aborted) throw ApiError(410, "session " + id + " aborted: " + s->error());
        if (st != SessionState::finished) throw ApiError(425, "session " + id + " is still " + to_string(st));
        const SynthesisResult r = s->result();
        nlohmann::json out = {{"id", id}, {"state", "finished"}, {"result", to_json(r)}};
        if (preview) {
            if (*preview < 0 || *preview >= static_cast<int>(r.top_k.size()))
                throw ApiError(400, "preview index out of range");
            if (holdout.empty()) {
                for (const auto& v : s->store->vids())
                    if (!r.labels.contains(v)) holdout.push_back(v);
            }
            for (const auto& v : holdout)
                if (s->store->find(v) == nullptr) throw ApiError(400, "unknown vid '" + v + "'");
            const auto& q = r.top_k[static_cast<std::size_t>(*preview)].query;
            out["preview"] = {{"index", *preview},
                              {"query", to_string(q)},
                              {"vids", holdout.size()},
                              {"matches", execute(q, *s->store, holdout, registry_)}};
        }
        return out;
    }

    nlohmann::json get_session(const std::string& id) {
        auto s = find(id);
        return {{"id", id},
                {"dataset", s->dataset},
                {"state", to_string(s->state())},
                {"progress", s->progress_json()},
                {"error", s->error()}};
    }

    SessionState state(const std::string& id) { return find(id)->state(); }

    /// Blocks until the session is finished or aborted, or the timeout passes.
    bool wait_done(const std::string& id, std::chrono::milliseconds timeout) {
        auto s = find(id);
        std::unique_lock lock(s->mu);
        return s->done_cv.wait_for(lock, timeout, [&] { return s->terminal; });
    }

    /// Re-creates every session in an event log, answering label requests
    /// from the logged labels. Returns the recovered session ids.
    std::vector<std::string> replay(const std::filesystem::path& log) {
        std::ifstream in(log);
        if (!in) throw ApiError(404, "cannot open event log " + log.string());
        std::map<std::string, nlohmann::json> created;
        std::map<std::string, std::vector<std::pair<std::string, Label>>> labels;
        std::vector<std::string> order;
        std::string line;
        while (std::getline(in, line)) {
            if (line.empty()) continue;
            const auto e = nlohmann::json::parse(line, nullptr, false);
            if (e.is_discarded() || !e.is_object()) continue;  // torn final line after a crash
            const std::string type = e.value("type", "");
            const std::string sid = e.value("session", "");
            if (type == "created") {
                created[sid] = e.at("request");
                order.push_back(sid);
            } else if (type == "labels") {
                for (const auto& x : e.at("labels"))
                    labels[sid].emplace_back(x.at("vid").get<std::string>(), parse_label(x.at("label").get<std::string>()));
            }
        }
        for (const auto& sid : order) create(created[sid], sid, labels[sid]);
        return order;
    }

    void shutdown() {
        std::vector<std::shared_ptr<Session>> all;
        {
            std::lock_guard lock(mu_);
            for (auto& [id, s] : sessions_) all.push_back(s);
        }
        for (auto& s : all) s->channel->close();
        for (auto& s : all)
            if (s->worker.joinable()) s->worker.join();
    }

private:
    struct Session {
        std::string id;
        std::string dataset;
        std::shared_ptr<const SegmentStore> store;
        std::shared_ptr<LabelChannel> channel = std::make_shared<LabelChannel>();
        int budget = 0;
        std::thread worker;

        mutable std::mutex mu;
        std::condition_variable done_cv;
        bool terminal = false;
        bool aborted = false;
        std::string error_text;
        SynthesisResult final_result;
        SynthesisProgress progress;

        SessionState state() const {
            {
                std::lock_guard lock(mu);
                if (terminal) return aborted ? SessionState::aborted : SessionState::finished;
            }
            return channel->pending().empty() ? SessionState::searching : SessionState::awaiting_labels;
        }
        std::string error() const {
            std::lock_guard lock(mu);
            return error_text;
        }
        SynthesisResult result() const {
            std::lock_guard lock(mu);
            return final_result;
        }
        nlohmann::json progress_json() const {
            std::lock_guard lock(mu);
            nlohmann::json top = nlohmann::json::array();
            for (const auto& c : progress.top)
                top.push_back({{"query", to_string(c.query)}, {"f1", c.f1}, {"reg_score", c.reg_score}});
            return {{"iteration", progress.iteration},
                    {"labels_used", progress.labels_used},
                    {"budget", budget},
                    {"top", top}};
        }
    };

    std::shared_ptr<Session> find(const std::string& id) {
        std::lock_guard lock(mu_);
        auto it = sessions_.find(id);
        if (it == sessions_.end()) throw ApiError(404, "unknown session '" + id + "'");
        return it->second;
    }

    nlohmann::json create(const nlohmann::json& body, std::optional<std::string> fixed_id,
                          const std::vector<std::pair<std::string, Label>>& preload) {
        if (!body.is_object() || !body.contains("dataset") || !body.at("dataset").is_string() ||
            !body.contains("labels"))
            throw ApiError(400, "body needs 'dataset' and 'labels'");
        const std::string dataset = body.at("dataset").get<std::string>();
        std::shared_ptr<const SegmentStore> store;
        {
            std::lock_guard lock(mu_);
            auto it = datasets_.find(dataset);
            if (it == datasets_.end()) throw ApiError(404, "unknown dataset '" + dataset + "'");
            store = it->second;
        }
        LabeledPool initial;
        Hyper hyper;
        SearchConfig config;
        config.predicate_pool = trajectory_pool();
        config.duration_values.clear();
        try {
            initial = labels_from_json(body.at("labels"));
            if (body.contains("hyper")) apply_hyper_json(body.at("hyper"), hyper, config);
        } catch (const PreconditionError& e) {
            throw ApiError(422, e.what());
        } catch (const Error& e) {
            throw ApiError(400, e.what());
        }
        if (initial.count(Label::pos) == 0 || initial.count(Label::neg) == 0)
            throw ApiError(422, "initial labels need at least one positive and one negative segment");
        for (const auto& e : initial.entries())
            if (store->find(e.vid) == nullptr) throw ApiError(422, "vid '" + e.vid + "' not in dataset " + dataset);
        if (hyper.b < static_cast<int>(initial.size()))
            throw ApiError(422, "labeling budget is smaller than the initial label count");

        auto s = std::make_shared<Session>();
        s->dataset = dataset;
        s->store = store;
        s->budget = hyper.b;
        s->progress.labels_used = static_cast<int>(initial.size());
        for (const auto& [vid, l] : preload) s->channel->preload(vid, l);
        {
            std::lock_guard lock(mu_);
            if (fixed_id) {
                s->id = *fixed_id;
                if (sessions_.count(s->id)) throw ApiError(409, "session '" + s->id + "' already exists");
                next_id_ = std::max(next_id_, id_number(s->id) + 1);
            } else {
                s->id = "sess-" + std::to_string(next_id_++);
            }
            sessions_[s->id] = s;
        }
        if (!fixed_id) log_event({{"type", "created"}, {"session", s->id}, {"request", body}});

        s->worker = std::thread([this, s, initial, hyper, config] {
            InteractiveOracle oracle(s->channel, opts_.label_timeout);
            SynthesisHooks hooks;
            hooks.on_progress = [s](const SynthesisProgress& p) {
                std::lock_guard lock(s->mu);
                s->progress = p;
            };
            SynthesisResult r;
            bool aborted = false;
            std::string err;
            try {
                r = synthesize(*s->store, registry_, initial, oracle, config, hyper, hooks);
            } catch (const SynthesisAborted& e) {
                r = e.partial();
                aborted = true;
                err = e.what();
            } catch (const std::exception& e) {
                aborted = true;
                err = e.what();
            }
            {
                std::lock_guard lock(s->mu);
                s->final_result = std::move(r);
                s->aborted = aborted;
                s->error_text = err;
                s->terminal = true;
            }
            s->done_cv.notify_all();
            s->channel->close();
            log_event({{"type", aborted ? "aborted" : "finished"}, {"session", s->id}});
        });
        return {{"id", s->id}};
    }

    static long long id_number(const std::string& id) {
        const auto dash = id.rfind('-');
        try {
            return dash == std::string::npos ? 0 : std::stoll(id.substr(dash + 1));
        } catch (const std::exception&) {
            return 0;
        }
    }

    void log_event(const nlohmann::json& e) {
        if (!opts_.event_log) return;
        std::lock_guard lock(log_mu_);
        std::ofstream out(*opts_.event_log, std::ios::app);
        out << e.dump() << '\n';
    }

    PredicateRegistry registry_;
    SessionOptions opts_;
    mutable std::mutex mu_;
    std::mutex log_mu_;
    std::map<std::string, std::shared_ptr<const SegmentStore>> datasets_;
    std::map<std::string, std::shared_ptr<Session>> sessions_;
    long long next_id_ = 1;
};

}  // namespace vqbe
