// Command-line front end: dataset generation, query execution, SQL emission,
// synthesis, experiments and the labeling server.
//
// Exit codes: 0 success, 1 user error, 2 internal error. Payloads go to
// stdout; diagnostics go to stderr.

#include <algorithm>
#include <csignal>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <random>
#include <sstream>
#include <string>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "vqbe/http_server.hpp"
#include "vqbe/vqbe.hpp"

namespace {

using namespace vqbe;

nlohmann::json read_json_file(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw PreconditionError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw ParseError(path + ": " + e.what(), 0, 0);
    }
}

DatasetFormat parse_format(const std::string& f) {
    if (f == "jsonl") return DatasetFormat::jsonl;
    if (f == "csv") return DatasetFormat::csv_dir;
    throw PreconditionError("unknown dataset format '" + f + "' (jsonl or csv)");
}

struct GenerateArgs {
    GenSpec spec;
    std::string out;
    std::string format = "jsonl";
    std::string report;
    int workers = 1;
};

int cmd_generate(const GenerateArgs& a) {
    const SegmentStore store = generate(a.spec, a.workers);
    const DatasetFormat fmt = parse_format(a.format);
    if (fmt == DatasetFormat::csv_dir) {
        if (a.out.empty()) throw PreconditionError("--format csv needs --out <directory>");
        write_csv_dir(store, a.out);
    } else if (a.out.empty() || a.out == "-") {
        std::cout << serialize_jsonl(store);
    } else {
        save_jsonl(store, a.out);
    }
    if (!a.report.empty()) {
        const auto rows = calibrate_selectivity(store, all_targets(), builtin_registry(), a.workers);
        std::ofstream(a.report) << to_json(rows).dump(2) << '\n';
    }
    std::cerr << "generated " << store.size() << " segments\n";
    return 0;
}

struct ExecuteArgs {
    std::string query;
    std::string dataset;
    std::string format = "jsonl";
    int workers = 1;
};

int cmd_execute(const ExecuteArgs& a) {
    const auto reg = builtin_registry();
    const Query q = parse(a.query, reg, kMaxVars);
    const SegmentStore store = load_dataset(a.dataset, parse_format(a.format));
    ExecuteOptions opts;
    opts.workers = a.workers;
    for (const auto& v : execute(q, store, reg, opts)) std::cout << v << '\n';
    return 0;
}

int cmd_emit_sql(const std::string& text) {
    const auto reg = builtin_registry();
    std::cout << emit_sql(parse(text, reg, kMaxVars), reg);
    return 0;
}

/// Asks for labels on stderr and reads "<vid> pos|neg" lines from stdin.
class StdinOracle : public LabelOracle {
public:
    Label label(const std::string& vid) override {
        std::cerr << "label " << vid << " (pos/neg): " << std::flush;
        std::string line;
        while (std::getline(std::cin, line)) {
            std::istringstream in(line);
            std::string first, second;
            in >> first >> second;
            if (first.empty()) continue;
            const std::string& answer = second.empty() ? first : second;
            if (!second.empty() && first != vid) {
                std::cerr << "expected a label for " << vid << ", got " << first << "\n";
                continue;
            }
            try {
                return parse_label(answer);
            } catch (const ParseError&) {
                std::cerr << "answer pos or neg: " << std::flush;
            }
        }
        throw OracleError("stdin closed while waiting for a label");
    }
};

struct SynthesizeArgs {
    std::string target;
    std::string dataset;
    std::string format = "jsonl";
    std::string oracle = "ground-truth";
    std::string config;
    std::string labels;
    int segments = 500;
    int budget = 30;
    double fn_rate = 0;
    int initial_pos = 2;
    int initial_neg = 10;
    std::uint64_t seed = 0;
    int workers = 1;
    bool trace = false;
};

int cmd_synthesize(const SynthesizeArgs& a) {
    const auto reg = builtin_registry();
    std::shared_ptr<const SegmentStore> store;
    if (!a.dataset.empty()) {
        store = std::make_shared<const SegmentStore>(load_dataset(a.dataset, parse_format(a.format)));
    } else {
        GenSpec g;
        g.n_segments = a.segments;
        g.seed = a.seed;
        store = std::make_shared<const SegmentStore>(generate(g, a.workers));
    }

    std::optional<Query> target;
    if (!a.target.empty()) target = resolve_target(a.target, reg);
    Hyper hyper;
    hyper.b = a.budget;
    hyper.seed = a.seed;
    hyper.workers = a.workers;
    SearchConfig config = target ? config_for_target(SearchConfig{}, *target) : SearchConfig{};
    if (!target) config.predicate_pool = trajectory_pool();
    if (!a.config.empty()) apply_hyper_json(read_json_file(a.config), hyper, config);

    std::shared_ptr<LabelOracle> oracle;
    if (a.oracle == "ground-truth" || a.oracle == "noisy") {
        if (!target) throw PreconditionError("--oracle " + a.oracle + " needs --target");
        oracle = std::make_shared<GroundTruthOracle>(*target, store, reg);
        if (a.oracle == "noisy") oracle = std::make_shared<NoisyOracle>(oracle, NoiseSpec::protocol(a.fn_rate, a.seed));
    } else if (a.oracle == "interactive") {
        oracle = std::make_shared<StdinOracle>();
    } else {
        throw PreconditionError("unknown oracle '" + a.oracle + "'");
    }

    LabeledPool initial;
    if (!a.labels.empty()) {
        initial = labels_from_json(read_json_file(a.labels));
    } else {
        if (!target) throw PreconditionError("without --target, initial labels must come from --labels");
        initial = sample_initial_labels(*oracle, store->vids(), a.initial_pos, a.initial_neg, a.seed);
    }

    SynthesisHooks hooks;
    if (a.trace) {
        hooks.on_progress = [](const SynthesisProgress& p) {
            std::cerr << "iteration " << p.iteration << ": labels " << p.labels_used << ", beam " << p.beam_size;
            if (!p.top.empty()) std::cerr << ", best " << to_string(p.top.front().query) << " f1=" << p.top.front().f1;
            std::cerr << '\n';
        };
    }
    nlohmann::json out;
    try {
        out = to_json(synthesize(*store, reg, initial, *oracle, config, hyper, hooks));
    } catch (const SynthesisAborted& e) {
        out = to_json(e.partial());
        out["aborted"] = e.what();
        std::cout << out.dump(2) << '\n';
        throw;
    }
    std::cout << out.dump(2) << '\n';
    return 0;
}

struct BenchArgs {
    std::string experiment;
    std::string out_dir;
    int workers = 0;
};

int cmd_bench(const BenchArgs& a) {
    ExperimentSpec spec = experiment_from_json(read_json_file(a.experiment));
    if (a.workers > 0) spec.workers = a.workers;
    const ExperimentReport report = run_experiment(spec);
    const nlohmann::json j = to_json(report);
    if (!a.out_dir.empty()) {
        std::filesystem::create_directories(a.out_dir);
        const std::filesystem::path dir(a.out_dir);
        std::ofstream(dir / "report.json") << j.dump(2) << '\n';
        std::ofstream(dir / "report.csv") << to_csv(report);
        if (auto svg = svg_plot(report, false); !svg.empty()) std::ofstream(dir / "f1_vs_budget.svg") << svg;
        if (auto svg = svg_plot(report, true); !svg.empty()) std::ofstream(dir / "f1_vs_noise.svg") << svg;
    }
    std::cout << j.dump(2) << '\n';
    return 0;
}

struct ServeArgs {
    std::vector<std::string> datasets;
    std::string format = "jsonl";
    std::string host = "127.0.0.1";
    int port = 8080;
    std::string event_log;
    std::string replay;
    int label_timeout_s = 1800;
};

httplib::Server* g_server = nullptr;

int cmd_serve(const ServeArgs& a) {
    SessionOptions opts;
    opts.label_timeout = std::chrono::seconds(a.label_timeout_s);
    if (!a.event_log.empty()) opts.event_log = a.event_log;
    SessionManager mgr(builtin_registry(), opts);
    for (const auto& d : a.datasets) {
        // id=path, or just path (id = file stem)
        const auto eq = d.find('=');
        const std::string path = eq == std::string::npos ? d : d.substr(eq + 1);
        const std::string id = eq == std::string::npos ? std::filesystem::path(path).stem().string() : d.substr(0, eq);
        mgr.add_dataset(id, std::make_shared<const SegmentStore>(load_dataset(path, parse_format(a.format))));
        std::cerr << "loaded dataset " << id << " from " << path << '\n';
    }
    if (!a.replay.empty()) {
        for (const auto& id : mgr.replay(a.replay)) std::cerr << "replayed session " << id << '\n';
    }
    httplib::Server server;
    mount_session_api(server, mgr);
    g_server = &server;
    std::signal(SIGINT, [](int) {
        if (g_server) g_server->stop();
    });
    std::signal(SIGTERM, [](int) {
        if (g_server) g_server->stop();
    });
    const int port = a.port == 0 ? server.bind_to_any_port(a.host) : (server.bind_to_port(a.host, a.port) ? a.port : -1);
    if (port < 0) throw PreconditionError("cannot bind " + a.host + ":" + std::to_string(a.port));
    std::cout << nlohmann::json{{"host", a.host}, {"port", port}}.dump() << std::endl;
    server.listen_after_bind();
    g_server = nullptr;
    mgr.shutdown();
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Query-by-example synthesis over scene-graph video segments"};
    app.require_subcommand(1);

    GenerateArgs gen;
    auto* g = app.add_subcommand("generate", "Generate a synthetic segment dataset");
    g->add_option("--segments", gen.spec.n_segments, "Number of segments")->check(CLI::NonNegativeNumber);
    g->add_option("--frames", gen.spec.frames_per_segment, "Frames per segment")->check(CLI::PositiveNumber);
    g->add_option("--width", gen.spec.width, "Frame width")->check(CLI::PositiveNumber);
    g->add_option("--height", gen.spec.height, "Frame height")->check(CLI::PositiveNumber);
    g->add_option("--min-objects", gen.spec.min_objects, "Minimum objects per segment");
    g->add_option("--max-objects", gen.spec.max_objects, "Maximum objects per segment");
    g->add_option("--min-speed", gen.spec.min_speed, "Minimum speed (pixels/frame)");
    g->add_option("--max-speed", gen.spec.max_speed, "Maximum speed (pixels/frame)");
    g->add_option("--seed", gen.spec.seed, "Random seed");
    g->add_option("--out,-o", gen.out, "Output file (JSONL) or directory (CSV); stdout when omitted");
    g->add_option("--format", gen.format, "jsonl or csv");
    g->add_option("--report", gen.report, "Write a benchmark-target selectivity report (JSON) here");
    g->add_option("--workers", gen.workers, "Worker threads")->check(CLI::PositiveNumber);

    ExecuteArgs ex;
    auto* e = app.add_subcommand("execute", "Print the vids of segments matching a query");
    e->add_option("query", ex.query, "Query text")->required();
    e->add_option("dataset", ex.dataset, "Dataset path")->required();
    e->add_option("--format", ex.format, "jsonl or csv");
    e->add_option("--workers", ex.workers, "Worker threads")->check(CLI::PositiveNumber);

    std::string sql_query;
    auto* s = app.add_subcommand("emit-sql", "Print the SQL translation of a query");
    s->add_option("query", sql_query, "Query text")->required();

    SynthesizeArgs sy;
    auto* y = app.add_subcommand("synthesize", "Synthesize queries from labeled examples");
    y->add_option("--target", sy.target, "Target query (id like TQ1 or query text) for simulated labels");
    y->add_option("--dataset", sy.dataset, "Dataset path; a dataset is generated when omitted");
    y->add_option("--format", sy.format, "jsonl or csv");
    y->add_option("--segments", sy.segments, "Segments to generate when no dataset is given");
    y->add_option("--budget", sy.budget, "Total labeling budget");
    y->add_option("--oracle", sy.oracle, "ground-truth, noisy or interactive")
        ->check(CLI::IsMember({"ground-truth", "noisy", "interactive"}));
    y->add_option("--fn-rate", sy.fn_rate, "False-negative rate for the noisy oracle")->check(CLI::Range(0.0, 1.0));
    y->add_option("--config", sy.config, "Hyperparameter JSON file");
    y->add_option("--labels", sy.labels, "Initial labels JSON file");
    y->add_option("--initial-pos", sy.initial_pos, "Initial positive examples");
    y->add_option("--initial-neg", sy.initial_neg, "Initial negative examples");
    y->add_option("--seed", sy.seed, "Random seed");
    y->add_option("--workers", sy.workers, "Worker threads")->check(CLI::PositiveNumber);
    y->add_flag("--trace", sy.trace, "Print per-iteration progress to stderr");

    BenchArgs be;
    auto* b = app.add_subcommand("bench", "Run an experiment described by a JSON file");
    b->add_option("experiment", be.experiment, "Experiment JSON")->required();
    b->add_option("--out-dir", be.out_dir, "Write report.json, report.csv and SVG plots here");
    b->add_option("--workers", be.workers, "Concurrent repetitions (overrides the file)");

    ServeArgs sv;
    auto* v = app.add_subcommand("serve", "Serve interactive labeling sessions over HTTP");
    v->add_option("--dataset", sv.datasets, "Dataset to serve, as path or id=path (repeatable)")->required();
    v->add_option("--format", sv.format, "jsonl or csv");
    v->add_option("--host", sv.host, "Bind address");
    v->add_option("--port", sv.port, "Port (0 picks a free one)");
    v->add_option("--event-log", sv.event_log, "Append session events to this JSONL file");
    v->add_option("--replay", sv.replay, "Recover sessions from an event log at startup");
    v->add_option("--label-timeout", sv.label_timeout_s, "Seconds to wait for labels before aborting a session");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& err) {
        return app.exit(err);
    } catch (const CLI::CallForAllHelp& err) {
        return app.exit(err);
    } catch (const CLI::ParseError& err) {
        std::cerr << err.what() << "\n\n" << app.help();
        return 1;
    }

    try {
        if (*g) return cmd_generate(gen);
        if (*e) return cmd_execute(ex);
        if (*s) return cmd_emit_sql(sql_query);
        if (*y) return cmd_synthesize(sy);
        if (*b) return cmd_bench(be);
        if (*v) return cmd_serve(sv);
    } catch (const vqbe::Error& err) {
        std::cerr << "error: " << err.what() << '\n';
        return 1;
    } catch (const std::exception& err) {
        std::cerr << "internal error: " << err.what() << '\n';
        return 2;
    }
    return 1;
}
