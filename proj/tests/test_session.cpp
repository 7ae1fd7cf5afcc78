#include <gtest/gtest.h>

#include <filesystem>
#include <thread>

#include "support.hpp"
#include "vqbe/http_server.hpp"

using namespace vqbe;
using namespace std::chrono_literals;
using nlohmann::json;

namespace {

struct World {
    std::shared_ptr<const SegmentStore> store;
    std::shared_ptr<GroundTruthOracle> truth;
    LabeledPool initial;

    World() {
        GenSpec g;
        g.n_segments = 150;
        g.seed = 8;
        store = std::make_shared<const SegmentStore>(generate(g));
        truth = std::make_shared<GroundTruthOracle>(resolve_target("TQ6", builtin_registry()), store, builtin_registry());
        initial = sample_initial_labels(*truth, store->vids(), 2, 6, 8);
    }

    json create_body(int b) const { return {{"dataset", "toy"}, {"labels", to_json(initial)}, {"hyper", {{"b", b}, {"seed", 5}}}}; }

    // What a session with this body should return, computed without the API.
    SynthesisResult direct(int b) const {
        Hyper h;
        SearchConfig c;
        c.predicate_pool = trajectory_pool();
        c.duration_values.clear();
        h.b = b;
        h.seed = 5;
        return synthesize(*store, builtin_registry(), initial, *truth, c, h);
    }

    json answers(const json& pending) const {
        json labels = json::array();
        for (const auto& v : pending) labels.push_back({{"vid", v}, {"label", to_string(truth->label(v))}});
        return {{"labels", labels}};
    }
};

// Answers every request until the session ends; at most `limit` batches.
int label_until_done(SessionManager& m, const World& w, const std::string& id, int limit = 1000) {
    int batches = 0;
    while (batches < limit) {
        const json p = m.get_pending(id, 200ms);
        const std::string st = p.at("state");
        if (st == "finished" || st == "aborted") break;
        if (p.at("pending").empty()) continue;
        m.submit_labels(id, w.answers(p.at("pending")));
        ++batches;
    }
    return batches;
}

std::vector<std::string> top_keys(const json& result) {
    std::vector<std::string> out;
    for (const auto& c : result.at("top_k")) out.push_back(c.at("canonical").get<std::string>());
    return out;
}

std::vector<std::string> top_keys(const SynthesisResult& r) {
    std::vector<std::string> out;
    for (const auto& c : r.top_k) out.push_back(c.key);
    return out;
}

int status_of(const std::function<void()>& fn) {
    try {
        fn();
    } catch (const ApiError& e) {
        return e.status();
    }
    return 200;
}

}  // namespace

TEST(Session, MatchesDirectSynthesis) {
    World w;
    SessionManager m;
    m.add_dataset("toy", w.store);
    EXPECT_EQ(m.list_datasets().at("datasets")[0].at("segments"), 150);
    const std::string id = m.create_session(w.create_body(20)).at("id");
    EXPECT_EQ(id, "sess-1");
    EXPECT_GT(label_until_done(m, w, id), 0);
    ASSERT_TRUE(m.wait_done(id, 30s));
    const json r = m.get_result(id);
    EXPECT_EQ(r.at("state"), "finished");
    const auto want = w.direct(20);
    EXPECT_EQ(top_keys(r.at("result")), top_keys(want));
    EXPECT_EQ(r.at("result").at("labels_used"), 20);
    EXPECT_EQ(m.get_session(id).at("state"), "finished");
}

TEST(Session, PendingCarriesRenderPayload) {
    World w;
    SessionManager m;
    m.add_dataset("toy", w.store);
    const std::string id = m.create_session(w.create_body(20)).at("id");
    json p;
    for (int i = 0; i < 100 && (p.empty() || p.at("pending").empty()); ++i) p = m.get_pending(id, 200ms);
    ASSERT_FALSE(p.at("pending").empty());
    EXPECT_EQ(p.at("state"), "awaiting_labels");
    const json& seg = p.at("segments")[0];
    EXPECT_EQ(seg.at("vid"), p.at("pending")[0]);
    EXPECT_EQ(seg.at("frames").size(), 128u);
    EXPECT_EQ(seg.at("frames")[5].at("fid"), 5);
    EXPECT_GE(seg.at("frames")[0].at("boxes").size(), 2u);
    EXPECT_TRUE(seg.at("objects")[0].at("attributes").contains("color"));
    EXPECT_EQ(status_of([&] { m.get_result(id); }), 425);
    m.shutdown();
    EXPECT_EQ(m.get_session(id).at("state"), "aborted");
    EXPECT_EQ(status_of([&] { m.get_result(id); }), 410);
}

TEST(Session, ErrorStatuses) {
    World w;
    SessionManager m;
    m.add_dataset("toy", w.store);
    EXPECT_EQ(status_of([&] { m.create_session({{"labels", json::array()}}); }), 400);
    EXPECT_EQ(status_of([&] { m.create_session({{"dataset", "nope"}, {"labels", json::array()}}); }), 404);
    json only_pos = {{"dataset", "toy"}, {"labels", {{{"vid", w.store->vids()[0]}, {"label", "pos"}}}}};
    EXPECT_EQ(status_of([&] { m.create_session(only_pos); }), 422);
    json unknown = w.create_body(20);
    unknown["labels"].push_back({{"vid", "ghost"}, {"label", "neg"}});
    EXPECT_EQ(status_of([&] { m.create_session(unknown); }), 422);
    EXPECT_EQ(status_of([&] { m.create_session(w.create_body(3)); }), 422);
    json bad_hyper = w.create_body(20);
    bad_hyper["hyper"]["bw"] = "wide";
    EXPECT_EQ(status_of([&] { m.create_session(bad_hyper); }), 400);
    EXPECT_EQ(status_of([&] { m.get_session("sess-99"); }), 404);

    const std::string id = m.create_session(w.create_body(20)).at("id");
    json p;
    for (int i = 0; i < 100 && (p.empty() || p.at("pending").empty()); ++i) p = m.get_pending(id, 200ms);
    ASSERT_FALSE(p.at("pending").empty());
    EXPECT_EQ(status_of([&] { m.submit_labels(id, {{"labels", {{{"vid", "ghost"}, {"label", "pos"}}}}}); }), 400);
    EXPECT_EQ(status_of([&] { m.submit_labels(id, {{"oops", 1}}); }), 400);
    const std::string v = p.at("pending")[0];
    EXPECT_EQ(status_of([&] {
                  m.submit_labels(id, {{"labels", {{{"vid", v}, {"label", "pos"}}, {{"vid", v}, {"label", "neg"}}}}});
              }),
              409);
    m.submit_labels(id, {{"labels", {{{"vid", v}, {"label", to_string(w.truth->label(v))}}}}});
    EXPECT_EQ(status_of([&] { m.submit_labels(id, {{"labels", {{{"vid", v}, {"label", "pos"}}}}}); }), 409);
    label_until_done(m, w, id);
    ASSERT_TRUE(m.wait_done(id, 30s));
    EXPECT_EQ(status_of([&] { m.get_result(id, 10000); }), 400);
    EXPECT_EQ(status_of([&] { m.get_result(id, 0, {"ghost"}); }), 400);
    EXPECT_EQ(status_of([&] { m.submit_labels(id, w.answers(json::array({w.store->vids()[0]}))); }), 409);
}

TEST(Session, PreviewExecutesOverHoldout) {
    World w;
    SessionManager m;
    m.add_dataset("toy", w.store);
    const std::string id = m.create_session(w.create_body(14)).at("id");
    label_until_done(m, w, id);
    ASSERT_TRUE(m.wait_done(id, 30s));
    const json r = m.get_result(id, 0);
    const json& pv = r.at("preview");
    EXPECT_EQ(pv.at("vids"), 150 - 14);
    const Query top = parse(pv.at("query").get<std::string>(), builtin_registry());
    std::vector<std::string> holdout;
    std::set<std::string> labeled;
    for (const auto& e : r.at("result").at("labels")) labeled.insert(e.at("vid").get<std::string>());
    for (const auto& v : w.store->vids())
        if (!labeled.count(v)) holdout.push_back(v);
    EXPECT_EQ(pv.at("matches").get<std::vector<std::string>>(), execute(top, *w.store, holdout, builtin_registry()));
    const auto some = std::vector<std::string>(holdout.begin(), holdout.begin() + 5);
    EXPECT_EQ(m.get_result(id, 0, some).at("preview").at("vids"), 5);
}

TEST(Session, ReplayResumesAfterRestart) {
    World w;
    const auto log = std::filesystem::temp_directory_path() / "vqbe_test_events.jsonl";
    std::filesystem::remove(log);
    SessionOptions opts;
    opts.event_log = log;
    std::string id;
    {
        SessionManager m(builtin_registry(), opts);
        m.add_dataset("toy", w.store);
        id = m.create_session(w.create_body(24)).at("id");
        EXPECT_EQ(label_until_done(m, w, id, 2), 2);
    }  // crash: destructor aborts the running session

    SessionManager again(builtin_registry(), opts);
    again.add_dataset("toy", w.store);
    EXPECT_EQ(again.replay(log), std::vector<std::string>{id});
    label_until_done(again, w, id);
    ASSERT_TRUE(again.wait_done(id, 30s));
    EXPECT_EQ(top_keys(again.get_result(id).at("result")), top_keys(w.direct(24)));
    // new sessions do not reuse the recovered id
    EXPECT_EQ(again.create_session(w.create_body(24)).at("id"), "sess-2");
}

TEST(Http, EndToEnd) {
    World w;
    SessionManager m;
    m.add_dataset("toy", w.store);
    httplib::Server server;
    mount_session_api(server, m);
    const int port = server.bind_to_any_port("127.0.0.1");
    ASSERT_GT(port, 0);
    std::thread t([&] { server.listen_after_bind(); });
    server.wait_until_ready();

    httplib::Client c("127.0.0.1", port);
    auto ds = c.Get("/datasets");
    ASSERT_TRUE(ds);
    EXPECT_EQ(ds->status, 200);
    EXPECT_EQ(json::parse(ds->body).at("datasets")[0].at("id"), "toy");
    EXPECT_EQ(ds->get_header_value("Access-Control-Allow-Origin"), "*");

    EXPECT_EQ(c.Post("/sessions", "{not json", "application/json")->status, 400);
    EXPECT_EQ(c.Get("/sessions/none")->status, 404);
    auto created = c.Post("/sessions", w.create_body(16).dump(), "application/json");
    ASSERT_EQ(created->status, 201);
    const std::string id = json::parse(created->body).at("id");
    EXPECT_EQ(c.Get(("/sessions/" + id + "/pending?wait_ms=abc").c_str())->status, 400);

    for (int i = 0; i < 1000; ++i) {
        auto p = c.Get(("/sessions/" + id + "/pending?wait_ms=200").c_str());
        ASSERT_EQ(p->status, 200);
        const json pj = json::parse(p->body);
        if (pj.at("state") == "finished") break;
        if (pj.at("pending").empty()) continue;
        auto r = c.Post(("/sessions/" + id + "/labels").c_str(), w.answers(pj.at("pending")).dump(), "application/json");
        EXPECT_EQ(r->status, 200) << r->body;
    }
    ASSERT_TRUE(m.wait_done(id, 30s));
    auto res = c.Get(("/sessions/" + id + "/result?preview=0").c_str());
    ASSERT_EQ(res->status, 200);
    const json body = json::parse(res->body);
    EXPECT_EQ(top_keys(body.at("result")), top_keys(w.direct(16)));
    EXPECT_TRUE(body.contains("preview"));
    EXPECT_EQ(c.Options("/sessions")->status, 204);

    server.stop();
    t.join();
}
