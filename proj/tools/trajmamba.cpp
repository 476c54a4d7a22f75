// trajmamba: synthetic data, pretraining, evaluation and self-checks.
//
// Exit codes: 0 success, 2 usage, 3 data error, 4 numeric failure,
// 5 check failure.

#include <CLI11.hpp>

#include "trajmamba/cli/commands.hpp"

using namespace trajmamba;

namespace {

struct Flags {
    std::string config;
    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> workers;
    std::optional<int> precision;
    bool force = false;
    std::size_t stop_after_epochs = 0;
    std::string task, mode;
};

RunConfig resolve(const Flags& f) {
    RunConfig c = f.config.empty() ? RunConfig{} : load_config(f.config);
    if (f.seed) c.seed = *f.seed;
    if (f.workers) c.workers = *f.workers;
    if (f.precision) c.precision = *f.precision;
    c.apply_seed();
    c.validate();
    return c;
}

template <template <typename> class Cmd, typename... Args>
auto by_precision(const RunConfig& c, Args&&... args) {
    return c.precision == 64 ? Cmd<double>::run(c, std::forward<Args>(args)...)
                             : Cmd<float>::run(c, std::forward<Args>(args)...);
}

template <typename T>
struct Purpose {
    static void run(const RunConfig& c, const CommandOptions& o) { cmd_pretrain_purpose<T>(c, o); }
};
template <typename T>
struct Kd {
    static void run(const RunConfig& c, const CommandOptions& o) { cmd_pretrain_kd<T>(c, o); }
};
template <typename T>
struct Eval {
    static void run(const RunConfig& c, EvalTask t, const std::string& m, const CommandOptions& o) {
        cmd_eval<T>(c, t, m, o);
    }
};
template <typename T>
struct Bench {
    static void run(const RunConfig& c, const CommandOptions& o) { cmd_bench_scan<T>(c, o); }
};

void dispatch(const std::string& cmd, const Flags& f) {
    CommandOptions o;
    o.force = f.force;
    o.stop_after_epochs = f.stop_after_epochs;
    if (cmd == "gradcheck") {
        cmd_gradcheck(gradcheck_suite(), o);
        return;
    }
    const auto c = resolve(f);
    if (cmd == "synth") {
        cmd_synth(c, o);
    } else if (cmd == "pretrain-purpose") {
        by_precision<Purpose>(c, o);
    } else if (cmd == "pretrain-kd") {
        by_precision<Kd>(c, o);
    } else if (cmd == "eval") {
        by_precision<Eval>(c, parse_eval_task(f.task), f.mode, o);
    } else if (cmd == "bench-scan") {
        by_precision<Bench>(c, o);
    }
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Trajectory representation pipeline: synthetic data, pretraining, evaluation."};
    app.require_subcommand(1, 1);
    Flags f;
    auto common = [&f](CLI::App* sub) {
        sub->add_option("--config", f.config, "Run configuration file (key = value)");
        sub->add_option("--seed", f.seed, "Master seed; overrides the config");
        sub->add_option("--workers", f.workers, "Cap on data-parallel workers")->check(CLI::PositiveNumber);
        sub->add_option("--precision", f.precision, "Floating-point width")->check(CLI::IsMember({32, 64}));
    };
    auto* synth = app.add_subcommand("synth", "Generate the synthetic world and trajectory splits");
    common(synth);
    synth->add_flag("--force", f.force, "Overwrite existing data files");
    for (const char* name : {"pretrain-purpose", "pretrain-kd"}) {
        auto* sub = app.add_subcommand(name, std::string(name) == "pretrain-purpose"
                                                 ? "Travel-purpose contrastive pretraining of the teacher"
                                                 : "Distill the teacher into a compressing student");
        common(sub);
        sub->add_flag("--force", f.force, "Discard previous checkpoint, resume state and log");
        sub->add_option("--stop-after-epochs", f.stop_after_epochs)->group("");  // interrupt hook for resume tests
    }
    auto* eval = app.add_subcommand("eval", "Evaluate the student on a downstream task");
    common(eval);
    eval->add_option("--task", f.task, "dp | ate | sts")->required();
    eval->add_option("--mode", f.mode, "ft | frozen (default: ft for dp/ate, frozen for sts)");
    auto* bench = app.add_subcommand("bench-scan", "Time encoder inference against trajectory length");
    common(bench);
    auto* grad = app.add_subcommand("gradcheck", "Finite-difference check of every gradient (64-bit)");
    common(grad);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : 2;
    }
    const std::string cmd = app.get_subcommands().front()->get_name();
    return run_guarded([&] { dispatch(cmd, f); }, std::cerr);
}
