#pragma once

// The pipeline commands behind the `trajmamba` tool. Each one reads and
// writes files under the configured data/run directories and prints a short
// human summary to `out`.

#include <ctime>
#include <iomanip>

#include "trajmamba/cli/config.hpp"
#include "trajmamba/gradcheck.hpp"
#include "trajmamba/pretrain/checkpoints.hpp"
#include "trajmamba/tasks/report.hpp"
#include "trajmamba/traj/io.hpp"
#include "trajmamba/views/remote.hpp"

namespace trajmamba {

/// Signals a failed check (exit code 5) as opposed to an error.
struct CheckFailure : Error {
    using Error::Error;
};

struct CommandOptions {
    bool force = false;
    std::size_t stop_after_epochs = 0;  // interrupt a pretraining run after this many epochs
    std::ostream* out = &std::cout;
};

namespace cli_detail {

inline std::ostream& sink(const CommandOptions& o) {
    static std::ostream null(nullptr);
    return o.out ? *o.out : null;
}

/// Independent generator per model-initialization purpose.
inline Rng init_rng(std::uint64_t seed, std::uint32_t stream) {
    std::seed_seq seq{static_cast<std::uint32_t>(seed), static_cast<std::uint32_t>(seed >> 32), 0xC0DEu, stream};
    return Rng(seq);
}

inline void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    auto out = io_detail::open_out(path);
    out << j.dump(2) << '\n';
}

inline std::string utc_time(std::int64_t t) {
    const std::time_t tt = static_cast<std::time_t>(t);
    std::tm tm{};
    gmtime_r(&tt, &tm);
    std::ostringstream s;
    s << std::put_time(&tm, "%Y-%m-%d %H:%M:%S");
    return s.str();
}

inline void require_file(const std::filesystem::path& p, const std::string& hint) {
    if (!std::filesystem::exists(p)) throw DataError("missing " + p.string() + " (" + hint + ")");
}

/// JSON-lines log that can be cut back to the epochs a resume state covers.
class RunLog {
public:
    RunLog(std::filesystem::path path, const nlohmann::json& header, std::size_t keep_epochs, bool resume)
        : path_(std::move(path)) {
        std::vector<std::string> kept;
        if (resume && std::filesystem::exists(path_)) {
            std::ifstream in(path_);
            std::string line;
            while (std::getline(in, line)) {
                if (line.empty()) continue;
                const auto j = nlohmann::json::parse(line);
                if (!j.contains("epoch") || j.at("epoch").get<std::size_t>() < keep_epochs) kept.push_back(line);
            }
        }
        out_.open(path_, std::ios::trunc);
        if (!out_) throw DataError("cannot write " + path_.string());
        if (kept.empty()) kept.push_back(header.dump());
        for (const auto& l : kept) out_ << l << '\n';
        out_.flush();
    }

    void write(const nlohmann::json& j) {
        out_ << j.dump() << '\n';
        out_.flush();
    }

private:
    std::filesystem::path path_;
    std::ofstream out_;
};

inline std::size_t state_epochs(const std::filesystem::path& state) {
    if (!std::filesystem::exists(state)) return 0;
    return load_checkpoint(state).metadata.at("epochs_done").get<std::size_t>();
}

/// Refuses to clobber a finished artifact unless forced; with --force the
/// previous checkpoint, resume state and log are all removed.
inline bool prepare_run_outputs(const std::filesystem::path& ckpt, const std::filesystem::path& state,
                                const std::filesystem::path& log, bool force) {
    if (force) {
        std::filesystem::remove(ckpt);
        std::filesystem::remove(state);
        std::filesystem::remove(log);
        return false;
    }
    if (std::filesystem::exists(ckpt))
        throw UsageError(ckpt.string() + " already exists; pass --force to retrain");
    return std::filesystem::exists(state);
}

}  // namespace cli_detail

// ---------------------------------------------------------------- data

struct Dataset {
    World world;
    Split split;
};

struct SplitStats {
    std::size_t trajectories = 0;
    std::size_t points = 0;
};

struct DatasetStats {
    SplitStats train, valid, test;
    std::size_t road_segments = 0;
    std::size_t pois = 0;
    std::int64_t first_time = 0;
    std::int64_t last_time = 0;

    nlohmann::json to_json() const {
        auto s = [](const SplitStats& x) { return nlohmann::json{{"trajectories", x.trajectories}, {"points", x.points}}; };
        return {{"train", s(train)},
                {"valid", s(valid)},
                {"test", s(test)},
                {"road_segments", road_segments},
                {"pois", pois},
                {"time_span", utc_time_span()}};
    }

    std::string utc_time_span() const {
        return cli_detail::utc_time(first_time) + " to " + cli_detail::utc_time(last_time);
    }
};

inline DatasetStats dataset_stats(const Dataset& d) {
    DatasetStats s;
    auto count = [&](const std::vector<Trajectory>& trajs, SplitStats& out) {
        out.trajectories = trajs.size();
        for (const auto& t : trajs) {
            out.points += t.size();
            if (t.points.empty()) continue;
            if (s.first_time == 0 || t.points.front().t < s.first_time) s.first_time = t.points.front().t;
            s.last_time = std::max(s.last_time, t.points.back().t);
        }
    };
    count(d.split.train, s.train);
    count(d.split.valid, s.valid);
    count(d.split.test, s.test);
    s.road_segments = d.world.network.edge_count();
    s.pois = d.world.pois.size();
    return s;
}

inline void print_stats(std::ostream& out, const DatasetStats& s) {
    const auto row = [&out](const std::string& k, const std::string& v) {
        out << "  " << std::left << std::setw(22) << k << v << '\n';
    };
    out << "Dataset statistics\n";
    row("time span (UTC)", s.utc_time_span());
    row("#trajectories train", std::to_string(s.train.trajectories));
    row("#trajectories valid", std::to_string(s.valid.trajectories));
    row("#trajectories test", std::to_string(s.test.trajectories));
    row("#points", std::to_string(s.train.points + s.valid.points + s.test.points));
    row("#road segments", std::to_string(s.road_segments));
    row("#POIs", std::to_string(s.pois));
}

inline std::vector<std::filesystem::path> dataset_files(const std::filesystem::path& dir) {
    return {dir / "network.json", dir / "pois.jsonl", dir / "train.jsonl",
            dir / "valid.jsonl",  dir / "test.jsonl", dir / "manifest.json"};
}

/// Generates the synthetic world and trajectories and writes them to data_dir.
inline DatasetStats cmd_synth(const RunConfig& cfg, const CommandOptions& opt = {}) {
    cfg.validate();
    const auto& dir = cfg.data_dir;
    for (const auto& f : dataset_files(dir))
        if (std::filesystem::exists(f) && !opt.force)
            throw UsageError(f.string() + " already exists; pass --force to overwrite");
    std::filesystem::create_directories(dir);
    Dataset d;
    d.world = generate_synthetic_world(cfg.world);
    d.split = chronological_split(generate_trajectories(d.world, cfg.trajs));
    write_road_network(dir / "network.json", d.world.network);
    write_pois(dir / "pois.jsonl", d.world.pois);
    write_trajectories(dir / "train.jsonl", d.split.train);
    write_trajectories(dir / "valid.jsonl", d.split.valid);
    write_trajectories(dir / "test.jsonl", d.split.test);
    const auto stats = dataset_stats(d);
    cli_detail::write_json(dir / "manifest.json", {{"config", cfg.echo()}, {"seed", cfg.seed}, {"stats", stats.to_json()}});
    print_stats(cli_detail::sink(opt), stats);
    return stats;
}

inline Dataset load_dataset(const std::filesystem::path& dir) {
    for (const auto& f : dataset_files(dir)) cli_detail::require_file(f, "run `trajmamba synth` first");
    Dataset d;
    d.world.network = read_road_network(dir / "network.json");
    d.world.pois = read_pois(dir / "pois.jsonl");
    d.split.train = read_trajectories(dir / "train.jsonl");
    d.split.valid = read_trajectories(dir / "valid.jsonl");
    d.split.test = read_trajectories(dir / "test.jsonl");
    if (d.split.train.empty()) throw DataError("dataset " + dir.string() + " has no training trajectories");
    return d;
}

/// Text embeddings of every road and POI description, from the configured source.
inline TextEmbeddingStore load_text_store(const RunConfig& cfg, const World& world) {
    const auto texts = world_descriptions(world);
    if (cfg.text_source == "pseudo") return pseudo_embedding_store(texts, cfg.views.text_dim);
    TextEmbeddingStore store;
    if (cfg.text_source == "file") {
        store = TextEmbeddingStore::load(cfg.text_file);
    } else {
        auto rc = RemoteEmbedConfig::from_env();
        rc.dim = cfg.views.text_dim;
        const auto cache = cfg.text_file.empty() ? cfg.run_dir / "text_embeddings.temb" : cfg.text_file;
        std::filesystem::create_directories(cache.parent_path().empty() ? "." : cache.parent_path());
        store = fetch_remote_embeddings(rc, texts, cache);
    }
    if (store.dim() != cfg.views.text_dim)
        throw DataError("text embeddings have dim " + std::to_string(store.dim()) + ", config text_dim is " +
                        std::to_string(cfg.views.text_dim));
    return store;
}

inline std::filesystem::path teacher_path(const RunConfig& c) { return c.run_dir / "teacher.tmck"; }
inline std::filesystem::path student_path(const RunConfig& c) { return c.run_dir / "student.tmck"; }

// ---------------------------------------------------------------- pretraining

struct PretrainOutcome {
    TrainResult result;
    std::filesystem::path checkpoint;  // empty when the run was interrupted
    double test_metric = 0.0;          // retrieval Acc@1 (purpose) or mean compressed length (kd)
};

/// Travel-purpose contrastive pretraining of the teacher encoder.
template <typename T>
PretrainOutcome cmd_pretrain_purpose(const RunConfig& cfg, const CommandOptions& opt = {}) {
    cfg.validate();
    auto& out = cli_detail::sink(opt);
    const auto data = load_dataset(cfg.data_dir);
    const auto store = load_text_store(cfg, data.world);
    const auto graph = build_view_graph(data.world, store, build_transition_table(data.split.train), cfg.views);
    const auto train = prepare_purpose_data(data.split.train, data.world, cfg.workers);
    const auto valid = prepare_purpose_data(data.split.valid, data.world, cfg.workers);
    const auto test = prepare_purpose_data(data.split.test, data.world, cfg.workers);

    std::filesystem::create_directories(cfg.run_dir);
    const auto ckpt = teacher_path(cfg), state = cfg.run_dir / "purpose_state.tmck",
               log_path = cfg.run_dir / "purpose_log.jsonl";
    const bool resume = cli_detail::prepare_run_outputs(ckpt, state, log_path, opt.force);
    const auto done = resume ? cli_detail::state_epochs(state) : 0;
    if (resume) out << "resuming purpose pretraining after epoch " << done << '\n';
    cli_detail::RunLog log(log_path, {{"kind", "run"}, {"procedure", "purpose"}, {"config", cfg.echo()}, {"seed", cfg.seed}},
                           done, resume);

    auto rng = cli_detail::init_rng(cfg.seed, 1);
    PurposeModel<T> model(cfg.encoder, cfg.views, data.world, rng);
    TrainHooks hooks;
    hooks.state_path = state;
    hooks.stop_after_epochs = opt.stop_after_epochs;
    hooks.workers = cfg.workers;
    hooks.on_step = [&](const nlohmann::json& r) {
        auto rec = r;
        rec["kind"] = "step";
        log.write(rec);
    };
    hooks.on_epoch = [&](const nlohmann::json& r) {
        auto rec = r;
        rec["kind"] = "epoch";
        rec["valid_retrieval_acc1"] =
            valid.points.empty() ? 0.0 : inbatch_retrieval_acc(model, graph, valid, cfg.train.batch_size);
        log.write(rec);
        out << "epoch " << rec["epoch"] << "  loss " << rec["mean_loss"] << "  valid retrieval Acc@1 "
            << rec["valid_retrieval_acc1"] << '\n';
    };

    PretrainOutcome res;
    res.result = purpose_pretrain(model, graph, train, cfg.train, hooks);
    if (!res.result.complete) {
        out << "stopped after epoch " << res.result.epochs_done << "; rerun to resume\n";
        return res;
    }
    res.test_metric = test.points.empty() ? 0.0 : inbatch_retrieval_acc(model, graph, test, cfg.train.batch_size);
    auto ck = teacher_checkpoint(model.encoder, cfg.echo());
    ck.metadata["seed"] = cfg.seed;
    ck.metadata["test_retrieval_acc1"] = res.test_metric;
    save_checkpoint(ck, ckpt);
    res.checkpoint = ckpt;
    out << "test in-batch retrieval Acc@1 " << res.test_metric << " (chance "
        << 1.0 / static_cast<double>(std::min(cfg.train.batch_size, std::max<std::size_t>(1, test.points.size())))
        << ")\nwrote " << ckpt.string() << '\n';
    return res;
}

/// Distills the teacher into a student that encodes compressed trajectories.
template <typename T>
PretrainOutcome cmd_pretrain_kd(const RunConfig& cfg, const CommandOptions& opt = {}) {
    cfg.validate();
    auto& out = cli_detail::sink(opt);
    cli_detail::require_file(teacher_path(cfg), "run `trajmamba pretrain-purpose` first");
    const auto data = load_dataset(cfg.data_dir);
    const auto teacher_ck = load_checkpoint(teacher_path(cfg));
    auto teacher = load_encoder<T>(teacher_ck, data.world.network, "encoder", &cfg.encoder);
    const auto kd = prepare_kd_data(data.split.train, cfg.workers, cfg.thresholds);

    std::filesystem::create_directories(cfg.run_dir);
    const auto ckpt = student_path(cfg), state = cfg.run_dir / "kd_state.tmck", log_path = cfg.run_dir / "kd_log.jsonl";
    const bool resume = cli_detail::prepare_run_outputs(ckpt, state, log_path, opt.force);
    const auto done = resume ? cli_detail::state_epochs(state) : 0;
    if (resume) out << "resuming distillation after epoch " << done << '\n';
    cli_detail::RunLog log(log_path,
                           {{"kind", "run"},
                            {"procedure", "kd"},
                            {"config", cfg.echo()},
                            {"seed", cfg.seed},
                            {"teacher_sha1", file_git_hash(teacher_path(cfg))}},
                           done, resume);

    auto rng = cli_detail::init_rng(cfg.seed, 2);
    auto model = init_student(teacher, cfg.mask, data.world.network, rng);
    TrainHooks hooks;
    hooks.state_path = state;
    hooks.stop_after_epochs = opt.stop_after_epochs;
    hooks.workers = cfg.workers;
    hooks.on_step = [&](const nlohmann::json& r) {
        auto rec = r;
        rec["kind"] = "step";
        log.write(rec);
    };
    hooks.on_epoch = [&](const nlohmann::json& r) {
        auto rec = r;
        rec["kind"] = "epoch";
        log.write(rec);
        out << "epoch " << rec["epoch"] << "  loss " << rec["mean_loss"] << "  mean compressed length "
            << rec["mean_compressed_length"] << '\n';
    };

    PretrainOutcome res;
    res.result = kd_pretrain(model, teacher, kd, cfg.train, hooks);
    if (!res.result.complete) {
        out << "stopped after epoch " << res.result.epochs_done << "; rerun to resume\n";
        return res;
    }
    if (!data.split.test.empty()) {
        std::vector<std::size_t> lengths;
        compress_all(model, data.split.test, cfg.thresholds, cfg.workers, &lengths);
        double sum = 0.0, raw = 0.0;
        for (std::size_t i = 0; i < lengths.size(); ++i) {
            sum += static_cast<double>(lengths[i]);
            raw += static_cast<double>(data.split.test[i].size());
        }
        res.test_metric = sum / static_cast<double>(lengths.size());
        out << "test mean length " << raw / static_cast<double>(lengths.size()) << " raw, " << res.test_metric
            << " compressed\n";
    }
    auto ck = student_checkpoint(model, cfg.echo());
    ck.metadata["seed"] = cfg.seed;
    ck.metadata["teacher_sha1"] = file_git_hash(teacher_path(cfg));
    ck.metadata["test_mean_compressed_length"] = res.test_metric;
    save_checkpoint(ck, ckpt);
    res.checkpoint = ckpt;
    out << "wrote " << ckpt.string() << '\n';
    return res;
}

// ---------------------------------------------------------------- evaluation

enum class EvalTask { dp, ate, sts };

inline EvalTask parse_eval_task(const std::string& s) {
    if (s == "dp") return EvalTask::dp;
    if (s == "ate") return EvalTask::ate;
    if (s == "sts") return EvalTask::sts;
    throw UsageError("unknown task '" + s + "' (expected dp, ate or sts)");
}

inline const char* eval_task_name(EvalTask t) {
    switch (t) {
        case EvalTask::dp: return "dp";
        case EvalTask::ate: return "ate";
        case EvalTask::sts: return "sts";
    }
    return "?";
}

/// Resolves the mode flag: empty picks the task default (fine-tune for dp and
/// ate, frozen for sts); sts has no fine-tune variant.
inline bool eval_finetune(EvalTask task, const std::string& mode) {
    if (mode.empty()) return task != EvalTask::sts;
    if (mode != "ft" && mode != "frozen") throw UsageError("unknown mode '" + mode + "' (expected ft or frozen)");
    if (task == EvalTask::sts && mode == "ft")
        throw UsageError("sts is evaluated with parameters fixed after pretraining; --mode ft is not available");
    return mode == "ft";
}

inline std::filesystem::path eval_report_path(const RunConfig& c, EvalTask task, bool finetune) {
    return c.run_dir / (std::string("eval_") + eval_task_name(task) + "_" + (finetune ? "ft" : "frozen") + ".json");
}

template <typename T>
nlohmann::json cmd_eval(const RunConfig& cfg, EvalTask task, const std::string& mode, const CommandOptions& opt = {}) {
    cfg.validate();
    const bool finetune = eval_finetune(task, mode);
    auto& out = cli_detail::sink(opt);
    const auto ckpt = student_path(cfg);
    cli_detail::require_file(ckpt, "run `trajmamba pretrain-kd` first");
    const auto data = load_dataset(cfg.data_dir);
    const auto hash = file_git_hash(ckpt);
    auto model = load_student<T>(load_checkpoint(ckpt), data.world.network, &cfg.encoder);

    EvalConfig ec;
    ec.head = cfg.head;
    ec.finetune = finetune;
    ec.thresholds = cfg.thresholds;
    ec.sts = cfg.sts;
    ec.workers = cfg.workers;
    ec.warn = opt.out;
    nlohmann::json metrics;
    switch (task) {
        case EvalTask::dp: metrics = run_destination_prediction(model, data.world.network, data.split, ec); break;
        case EvalTask::ate: metrics = run_arrival_time(model, data.world.network, data.split, ec); break;
        case EvalTask::sts: metrics = run_similarity_search(model, data.split, ec); break;
    }
    if (file_git_hash(ckpt) != hash) throw CheckFailure("evaluation modified " + ckpt.string());

    nlohmann::json report{{"task", eval_task_name(task)},
                          {"mode", finetune ? "ft" : "frozen"},
                          {"metrics", metrics},
                          {"checkpoint", {{"file", ckpt.filename().string()}, {"sha1", hash}}},
                          {"config", cfg.echo()},
                          {"seed", cfg.seed}};
    std::filesystem::create_directories(cfg.run_dir);
    const auto path = eval_report_path(cfg, task, finetune);
    cli_detail::write_json(path, report);
    out << metrics.dump(2) << "\nwrote " << path.string() << '\n';
    return report;
}

// ---------------------------------------------------------------- benchmark

struct BenchRow {
    std::size_t n = 0;
    ScanMode mode = ScanMode::sequential;
    double ms = 0.0;
};

/// Coefficient of determination of the least-squares line through (x, y).
inline double linear_fit_r2(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size() || x.size() < 2) throw ShapeError("linear_fit_r2: need >= 2 paired samples");
    const double n = static_cast<double>(x.size());
    double mx = 0.0, my = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        mx += x[i] / n;
        my += y[i] / n;
    }
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sxx += (x[i] - mx) * (x[i] - mx);
        sxy += (x[i] - mx) * (y[i] - my);
        syy += (y[i] - my) * (y[i] - my);
    }
    if (sxx == 0.0) throw ShapeError("linear_fit_r2: x has no spread");
    if (syy == 0.0) return 1.0;
    return sxy * sxy / (sxx * syy);
}

/// Road-consistent random walk over the network with exactly n points
/// (five per traversed segment, 10 s apart).
inline Trajectory bench_trajectory(const World& world, std::size_t n, std::uint64_t seed) {
    const auto& net = world.network;
    std::vector<std::vector<std::size_t>> incident(net.nodes.size());
    for (const auto& e : net.edges) {
        incident[e.from].push_back(e.id);
        incident[e.to].push_back(e.id);
    }
    Rng rng(seed);
    Trajectory t;
    std::size_t node = 0;
    std::int64_t clock = 1538352000;
    constexpr std::size_t kPerEdge = 5;
    while (t.size() < n) {
        const auto& opts = incident[node];
        const auto& e = net.edges[opts[std::uniform_int_distribution<std::size_t>(0, opts.size() - 1)(rng)]];
        const auto next = e.from == node ? e.to : e.from;
        const auto &a = net.nodes[node], &b = net.nodes[next];
        for (std::size_t k = 0; k < kPerEdge && t.size() < n; ++k) {
            const double f = static_cast<double>(k) / kPerEdge;
            t.points.push_back({a.lng + f * (b.lng - a.lng), a.lat + f * (b.lat - a.lat), e.id, clock});
            clock += 10;
        }
        node = next;
    }
    return t;
}

/// Best-of-`repeats` inference time of one encode per (n, mode).
template <typename T>
std::vector<BenchRow> run_bench_scan(const RunConfig& cfg, const std::vector<std::size_t>& ns, std::size_t repeats) {
    const auto world = generate_synthetic_world(cfg.world);
    std::vector<BenchRow> rows;
    for (auto mode : {ScanMode::sequential, ScanMode::chunked}) {
        auto ec = cfg.encoder;
        ec.mode = mode;
        auto rng = cli_detail::init_rng(cfg.seed, 3);
        TrajMambaEncoder<T> enc(ec, world.network, rng);
        NoGradGuard ng;
        for (auto n : ns) {
            const auto in = extract_point_inputs(bench_trajectory(world, n, cfg.seed + n));
            double best = std::numeric_limits<double>::infinity();
            for (std::size_t r = 0; r < repeats; ++r) {
                const auto t0 = std::chrono::steady_clock::now();
                auto z = enc.encode(in);
                best = std::min(best, train_detail::elapsed_ms(t0));
                if (!std::isfinite(static_cast<double>(z.data()[0]))) throw NumericError("bench-scan: non-finite embedding");
            }
            rows.push_back({n, mode, best});
        }
    }
    return rows;
}

inline double bench_r2(const std::vector<BenchRow>& rows, ScanMode mode) {
    std::vector<double> x, y;
    for (const auto& r : rows)
        if (r.mode == mode) {
            x.push_back(static_cast<double>(r.n));
            y.push_back(r.ms);
        }
    return linear_fit_r2(x, y);
}

inline void write_bench_csv(std::ostream& out, const std::vector<BenchRow>& rows) {
    out << "n,mode,ms\n";
    for (const auto& r : rows) out << r.n << ',' << scan_mode_name(r.mode) << ',' << std::fixed << std::setprecision(3) << r.ms << '\n';
    out.unsetf(std::ios::floatfield);
}

inline const std::vector<std::size_t>& bench_lengths() {
    static const std::vector<std::size_t> ns{128, 256, 512, 1024, 2048};
    return ns;
}

template <typename T>
std::vector<BenchRow> cmd_bench_scan(const RunConfig& cfg, const CommandOptions& opt = {}) {
    cfg.validate();
    auto& out = cli_detail::sink(opt);
    const auto rows = run_bench_scan<T>(cfg, bench_lengths(), cfg.bench_repeats);
    std::filesystem::create_directories(cfg.run_dir);
    const auto path = cfg.run_dir / "bench_scan.csv";
    {
        auto f = io_detail::open_out(path);
        write_bench_csv(f, rows);
    }
    write_bench_csv(out, rows);
    for (auto mode : {ScanMode::sequential, ScanMode::chunked})
        out << "linear fit R^2 (" << scan_mode_name(mode) << "): " << std::setprecision(4) << bench_r2(rows, mode) << '\n';
    out << "wrote " << path.string() << '\n';
    return rows;
}

// ---------------------------------------------------------------- gradcheck

/// Runs a check suite; throws CheckFailure naming every failed check.
inline std::vector<GradCheckRow> cmd_gradcheck(const std::vector<GradCheck>& suite, const CommandOptions& opt = {}) {
    auto rows = run_gradchecks(suite, opt.out);
    std::string failed;
    for (const auto& r : rows)
        if (!r.passed) failed += (failed.empty() ? "" : ", ") + r.name;
    if (!failed.empty()) throw CheckFailure("gradient check failed: " + failed);
    cli_detail::sink(opt) << rows.size() << " gradient checks passed\n";
    return rows;
}

// ---------------------------------------------------------------- exit codes

enum ExitCode : int { kExitOk = 0, kExitUsage = 2, kExitData = 3, kExitNumeric = 4, kExitCheck = 5 };

/// Runs a command body and maps whatever it throws to the tool's exit code,
/// printing the message to `err`.
inline int run_guarded(const std::function<void()>& body, std::ostream& err) {
    try {
        body();
        return kExitOk;
    } catch (const CheckFailure& e) {
        err << "check failed: " << e.what() << '\n';
        return kExitCheck;
    } catch (const UsageError& e) {
        err << "usage error: " << e.what() << '\n';
        return kExitUsage;
    } catch (const NumericError& e) {
        err << "numeric failure: " << e.what() << '\n';
        return kExitNumeric;
    } catch (const Error& e) {  // data and shape errors
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const nlohmann::json::exception& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "data error: " << e.what() << '\n';
        return kExitData;
    }
}

}  // namespace trajmamba
