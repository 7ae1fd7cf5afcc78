#include <gtest/gtest.h>

#include <future>
#include <thread>

#include "support.hpp"

using namespace vqbe;
using namespace std::chrono_literals;

namespace {

class ConstOracle : public LabelOracle {
public:
    explicit ConstOracle(Label l) : l_(l) {}
    Label label(const std::string&) override { return l_; }

private:
    Label l_;
};

std::vector<std::string> many_vids(int n) {
    std::vector<std::string> v;
    for (int i = 0; i < n; ++i) v.push_back("seg_" + std::to_string(i));
    return v;
}

double flip_rate(Label truth, NoiseSpec spec, int n) {
    NoisyOracle o(std::make_shared<ConstOracle>(truth), spec);
    int flipped = 0;
    for (const auto& v : many_vids(n)) flipped += o.label(v) != truth;
    return static_cast<double>(flipped) / n;
}

}  // namespace

TEST(GroundTruth, AgreesWithReferenceMatcher) {
    GenSpec g;
    g.n_segments = 200;
    g.seed = 4;
    g.frames_per_segment = 12;  // small enough for the exhaustive matcher
    g.min_speed = 10;
    g.max_speed = 30;
    g.max_depth_speed = 1;
    const auto store = std::make_shared<const SegmentStore>(generate(g));
    const auto reg = builtin_registry();
    for (const char* id : {"TQ2", "TQ6", "Duration(Far(o1, o2), 3); Near(o1, o2)"}) {
        const Query target = resolve_target(id, reg);
        GroundTruthOracle o(target, store, reg);
        int pos = 0;
        for (const auto& seg : store->segments()) {
            const bool ref = match_reference(target, seg, reg).has_value();
            EXPECT_EQ(o.label(seg.vid) == Label::pos, ref) << id << " " << seg.vid;
            pos += ref;
        }
        EXPECT_EQ(o.label_batch(store->vids()).size(), store->size());
        EXPECT_GT(pos, 0) << id;
    }
}

TEST(GroundTruth, UnknownVid) {
    const auto store = std::make_shared<const SegmentStore>(std::vector<Segment>{});
    GroundTruthOracle o(parse("Near(o1, o2)", builtin_registry()), store, builtin_registry());
    EXPECT_THROW(o.label("ghost"), OracleError);
}

TEST(Noise, FalseNegativeRateNearNominal) {
    EXPECT_NEAR(flip_rate(Label::pos, NoiseSpec::protocol(0.3, 1), 10000), 0.3, 0.02);
    EXPECT_NEAR(flip_rate(Label::neg, NoiseSpec::protocol(0.3, 1), 10000), 0.03, 0.01);
    EXPECT_NEAR(flip_rate(Label::pos, NoiseSpec{0.1, 0, 77}, 10000), 0.1, 0.02);
}

TEST(Noise, ExtremeRates) {
    EXPECT_EQ(flip_rate(Label::pos, NoiseSpec{0, 0, 3}, 2000), 0.0);
    EXPECT_EQ(flip_rate(Label::neg, NoiseSpec{0, 0, 3}, 2000), 0.0);
    EXPECT_EQ(flip_rate(Label::pos, NoiseSpec{1, 1, 3}, 2000), 1.0);
    EXPECT_EQ(flip_rate(Label::neg, NoiseSpec{1, 1, 3}, 2000), 1.0);
    EXPECT_THROW(NoisyOracle(std::make_shared<ConstOracle>(Label::pos), NoiseSpec{1.5, 0, 0}), PreconditionError);
}

TEST(Noise, FrozenPerVidAndSeed) {
    NoisyOracle a(std::make_shared<ConstOracle>(Label::pos), NoiseSpec{0.5, 0, 9});
    NoisyOracle b(std::make_shared<ConstOracle>(Label::pos), NoiseSpec{0.5, 0, 9});
    NoisyOracle c(std::make_shared<ConstOracle>(Label::pos), NoiseSpec{0.5, 0, 10});
    int differ = 0;
    for (const auto& v : many_vids(500)) {
        const Label first = a.label(v);
        EXPECT_EQ(a.label(v), first);
        EXPECT_EQ(b.label(v), first);
        differ += c.label(v) != first;
    }
    EXPECT_GT(differ, 100);
}

TEST(Channel, DeliversInRequestOrderAcrossPartialSubmits) {
    auto ch = std::make_shared<LabelChannel>();
    InteractiveOracle o(ch, 5s);
    auto fut = std::async(std::launch::async, [&] { return o.label_batch({"a", "b", "c"}); });
    EXPECT_EQ(ch->wait_pending(5s), (std::vector<std::string>{"a", "b", "c"}));
    ch->submit("c", Label::pos);
    EXPECT_EQ(ch->pending(), (std::vector<std::string>{"a", "b"}));
    ch->submit_batch({{"b", Label::neg}, {"a", Label::pos}});
    EXPECT_EQ(fut.get(), (std::vector<Label>{Label::pos, Label::neg, Label::pos}));
    EXPECT_TRUE(ch->pending().empty());
    EXPECT_TRUE(ch->was_requested("b"));
}

TEST(Channel, SubmitErrorsAreAllOrNothing) {
    auto ch = std::make_shared<LabelChannel>();
    auto fut = std::async(std::launch::async, [&] { return ch->request({"a", "b"}, 5s); });
    ch->wait_pending(5s);
    EXPECT_THROW(ch->submit("zz", Label::pos), LabelNotPending);
    EXPECT_THROW(ch->submit_batch({{"a", Label::pos}, {"zz", Label::pos}}), LabelNotPending);
    EXPECT_EQ(ch->pending().size(), 2u);
    EXPECT_THROW(ch->submit_batch({{"a", Label::pos}, {"a", Label::neg}}), LabelConflict);
    ch->submit("a", Label::pos);
    EXPECT_THROW(ch->submit("a", Label::neg), LabelConflict);
    ch->submit("b", Label::neg);
    EXPECT_EQ(fut.get(), (std::vector<Label>{Label::pos, Label::neg}));
    EXPECT_THROW(ch->request({"a"}, 10ms), OracleError);
}

TEST(Channel, TimeoutAndClose) {
    auto ch = std::make_shared<LabelChannel>();
    InteractiveOracle slow(ch, 30ms);
    EXPECT_THROW(slow.label("x"), OracleError);
    EXPECT_TRUE(ch->pending().empty());

    auto fut = std::async(std::launch::async, [&] { return ch->request({"y"}, 10s); });
    ch->wait_pending(5s);
    ch->close();
    EXPECT_THROW(fut.get(), OracleError);
    EXPECT_THROW(ch->submit("y", Label::pos), LabelConflict);
    EXPECT_TRUE(ch->closed());
}

TEST(Channel, PreloadedLabelsAnswerWithoutPublishing) {
    auto ch = std::make_shared<LabelChannel>();
    ch->preload("p", Label::pos);
    const auto g0 = ch->generation();
    EXPECT_EQ(ch->request({"p"}, 10ms), std::vector<Label>{Label::pos});
    EXPECT_GT(ch->generation(), g0);
}

TEST(Mixed, HumanFirstThenFallback) {
    auto ch = std::make_shared<LabelChannel>();
    auto human = std::make_shared<InteractiveOracle>(ch, 5s);
    MixedOracle o(human, std::make_shared<ConstOracle>(Label::neg), 3);
    std::thread labeler([&] {
        const auto p = ch->wait_pending(5s);
        for (const auto& v : p) ch->submit(v, Label::pos);
    });
    const auto got = o.label_batch({"a", "b", "c", "d", "e"});
    labeler.join();
    EXPECT_EQ(got, (std::vector<Label>{Label::pos, Label::pos, Label::pos, Label::neg, Label::neg}));
    EXPECT_EQ(o.human_used(), 3u);
    EXPECT_EQ(o.fallback_used(), 2u);
    EXPECT_EQ(o.label("f"), Label::neg);
    EXPECT_EQ(o.fallback_used(), 3u);
}

TEST(Labels, ParseNames) {
    EXPECT_EQ(parse_label("pos"), Label::pos);
    EXPECT_EQ(parse_label("negative"), Label::neg);
    EXPECT_EQ(parse_label("1"), Label::pos);
    EXPECT_THROW(parse_label("maybe"), ParseError);
    EXPECT_STREQ(to_string(Label::neg), "neg");
}
