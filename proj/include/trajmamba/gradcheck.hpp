#pragma once

// Registered finite-difference suite: every differentiable primitive, the
// scan and blocks, and every composite loss, all in 64-bit.

#include <chrono>
#include <functional>
#include <ostream>

#include "trajmamba/grad/fdcheck.hpp"
#include "trajmamba/pretrain/train.hpp"
#include "trajmamba/tasks/heads.hpp"
#include "trajmamba/traj/synth.hpp"

namespace trajmamba {

struct GradCheck {
    std::string name;
    std::function<FdReport()> run;
};

struct GradCheckRow {
    std::string name;
    double max_rel_error = 0.0;
    bool passed = false;
    std::string worst_param;
    double seconds = 0.0;
};

namespace gradcheck_detail {

using T64 = Tensor<double>;

inline constexpr double kTolerance = 1e-4;
// Composite losses are O(1-10) in value, so each central difference carries
// rounding noise near 1e-10. Gradients below the floor are compared in
// absolute terms against floor * tolerance = 1e-9.
inline constexpr double kModuleFloor = 1e-5;

// f(w) = sum(op(w) * r): a fixed random probe r gives each output element a
// distinct weight.
inline FdReport unary(const std::function<T64(const T64&)>& op, Shape shape, double lo, double hi,
                      std::uint64_t seed = 1) {
    Rng rng(seed);
    auto w = uniform_tensor<double>(shape, lo, hi, rng);
    auto r = uniform_tensor<double>(op(w.detach()).shape(), -1.0, 1.0, rng, false);
    ParameterSet<double> ps;
    ps.add("x", w);
    return finite_difference_check([&] { return sum_all(mul(op(w), r)); }, ps, {.tolerance = kTolerance});
}

inline FdReport binary(const std::function<T64(const T64&, const T64&)>& op, Shape sa, Shape sb, double lo, double hi,
                       std::uint64_t seed = 1) {
    Rng rng(seed);
    auto a = uniform_tensor<double>(sa, lo, hi, rng);
    auto b = uniform_tensor<double>(sb, lo, hi, rng);
    auto r = uniform_tensor<double>(op(a.detach(), b.detach()).shape(), -1.0, 1.0, rng, false);
    ParameterSet<double> ps;
    ps.add("a", a);
    ps.add("b", b);
    return finite_difference_check([&] { return sum_all(mul(op(a, b), r)); }, ps, {.tolerance = kTolerance});
}

inline FdReport module(ParameterSet<double>& ps, const std::function<T64()>& f, std::size_t max_per_param = 0) {
    return finite_difference_check(f, ps, {.tolerance = kTolerance, .floor = kModuleFloor, .max_elements_per_param = max_per_param});
}

/// Small world and data shared by the composite checks.
struct Fixture {
    World world;
    std::vector<Trajectory> trajs;
    ViewConfig views;
    ViewGraph graph;
    PurposeData purpose;
    KdData kd;
    EncoderConfig encoder;
    MaskConfig mask;

    Fixture() {
        WorldConfig wc;
        wc.rows = 3;
        wc.cols = 3;
        wc.poi_count = 20;
        wc.spacing_m = 300;
        world = generate_synthetic_world(wc);
        TrajectoryConfig tc;
        tc.count = 8;
        tc.min_edges = 2;
        tc.max_edges = 3;
        trajs = generate_trajectories(world, tc);
        views.text_dim = 8;
        views.state_dim = 4;
        views.heads = 2;
        views.stack_depth = 1;
        graph = build_view_graph(world, pseudo_embedding_store(world_descriptions(world), views.text_dim),
                                 build_transition_table(trajs), views);
        purpose = prepare_purpose_data(trajs, world);
        kd = prepare_kd_data(trajs);
        encoder.layers = 1;
        encoder.embed_dim = 8;
        encoder.state_dim = 4;
        encoder.heads = 2;
        encoder.conv_width = 3;
        mask.latent_dim = 4;
        mask.state_dim = 2;
        mask.heads = 2;
    }
};

inline const Fixture& fixture() {
    static const Fixture f;
    return f;
}

}  // namespace gradcheck_detail

/// The full registered suite, in reporting order.
inline std::vector<GradCheck> gradcheck_suite() {
    using namespace gradcheck_detail;
    std::vector<GradCheck> s;
    auto op1 = [&](std::string name, std::function<T64(const T64&)> f, Shape shape, double lo, double hi) {
        s.push_back({std::move(name), [=] { return unary(f, shape, lo, hi); }});
    };
    auto op2 = [&](std::string name, std::function<T64(const T64&, const T64&)> f, Shape sa, Shape sb, double lo,
                   double hi) { s.push_back({std::move(name), [=] { return binary(f, sa, sb, lo, hi); }}); };

    op2("add", [](auto& a, auto& b) { return add(a, b); }, {3, 4}, {4}, -1, 1);
    op2("sub", [](auto& a, auto& b) { return sub(a, b); }, {3, 4}, {3, 1}, -1, 1);
    op2("mul", [](auto& a, auto& b) { return mul(a, b); }, {3, 4}, {3, 4}, -1, 1);
    op2("div", [](auto& a, auto& b) { return div(a, b); }, {3, 4}, {4}, 0.5, 2);
    op2("matmul", [](auto& a, auto& b) { return matmul(a, b); }, {3, 4}, {4, 2}, -1, 1);
    op2("concat", [](auto& a, auto& b) { return concat<double>({a, b}, 1); }, {3, 2}, {3, 4}, -1, 1);
    op2("rms_norm", [](auto& x, auto& w) { return rms_norm(x, w, 1e-5); }, {3, 4}, {4}, -1, 1);
    op1("add_scalar", [](auto& x) { return add_scalar(x, 0.7); }, {3, 4}, -1, 1);
    op1("scale", [](auto& x) { return scale(x, -1.3); }, {3, 4}, -1, 1);
    op1("neg", [](auto& x) { return neg(x); }, {3, 4}, -1, 1);
    op1("transpose", [](auto& x) { return transpose(x); }, {3, 5}, -1, 1);
    op1("slice", [](auto& x) { return slice(x, 1, 1, 2); }, {3, 4}, -1, 1);
    op1("reshape", [](auto& x) { return reshape(x, {6, 2}); }, {3, 4}, -1, 1);
    op1("sum", [](auto& x) { return sum(x, 0); }, {3, 4}, -1, 1);
    op1("sum_all", [](auto& x) { return sum_all(x); }, {3, 4}, -1, 1);
    op1("mean", [](auto& x) { return mean(x, 1); }, {3, 4}, -1, 1);
    op1("mean_all", [](auto& x) { return mean_all(x); }, {3, 4}, -1, 1);
    op1("exp", [](auto& x) { return exp(x); }, {3, 4}, -1, 1);
    op1("log", [](auto& x) { return log(x); }, {3, 4}, 0.5, 2);
    op1("sqrt", [](auto& x) { return sqrt(x); }, {3, 4}, 0.5, 2);
    op1("pow", [](auto& x) { return pow(x, 2.5); }, {3, 4}, 0.5, 2);
    op1("clamp", [](auto& x) { return clamp(x, -0.9, 0.9); }, {3, 4}, -0.8, 0.8);
    op1("sigmoid", [](auto& x) { return sigmoid(x); }, {3, 4}, -3, 3);
    op1("tanh", [](auto& x) { return tanh(x); }, {3, 4}, -2, 2);
    op1("relu", [](auto& x) { return relu(x); }, {3, 4}, 0.1, 2);
    op1("silu", [](auto& x) { return silu(x); }, {3, 4}, -3, 3);
    op1("softplus", [](auto& x) { return softplus(x); }, {3, 4}, -3, 3);
    op1("erf", [](auto& x) { return erf(x); }, {3, 4}, -2, 2);
    op1("sin", [](auto& x) { return sin(x); }, {3, 4}, -3, 3);
    op1("cos", [](auto& x) { return cos(x); }, {3, 4}, -3, 3);
    op1("softmax", [](auto& x) { return softmax(x); }, {3, 4}, -2, 2);
    op1("log_softmax", [](auto& x) { return log_softmax(x); }, {3, 4}, -2, 2);
    op1("l1_normalize", [](auto& x) { return l1_normalize(x); }, {3, 4}, 0.1, 2);
    op1("l2_normalize_rows", [](auto& x) { return l2_normalize_rows(x); }, {3, 4}, 0.2, 1);
    op1("cumprod", [](auto& x) { return cumprod(x); }, {5, 3}, 0.5, 1.5);
    op1("trace", [](auto& x) { return trace(x); }, {4, 4}, -1, 1);
    op1("index_rows", [](auto& x) { return index_rows(x, {2, 0, 2}); }, {3, 4}, -1, 1);
    op1("segment_sum", [](auto& x) { return segment_sum(x, {1, 0, 1}, 2); }, {3, 4}, -1, 1);

    for (bool training : {true, false}) {
        s.push_back({training ? "batch_norm_train" : "batch_norm_eval", [training] {
                         Rng rng(7);
                         auto x = uniform_tensor<double>({6, 3}, -1, 1, rng);
                         auto gamma = uniform_tensor<double>({3}, 0.5, 1.5, rng);
                         auto beta = uniform_tensor<double>({3}, -0.5, 0.5, rng);
                         auto r = uniform_tensor<double>({6, 3}, -1, 1, rng, false);
                         BatchNormState<double> state(3);
                         state.running_mean = {0.1, -0.2, 0.3};
                         state.running_var = {0.5, 1.5, 2.0};
                         ParameterSet<double> ps;
                         ps.add("x", x);
                         ps.add("gamma", gamma);
                         ps.add("beta", beta);
                         return module(ps, [&] {
                             auto saved = state;
                             auto y = batch_norm(x, gamma, beta, state, training);
                             state = saved;
                             return sum_all(mul(y, r));
                         });
                     }});
    }

    for (ScanMode mode : {ScanMode::sequential, ScanMode::chunked}) {
        s.push_back({std::string("selective_scan_") + scan_mode_name(mode), [mode] {
                         Rng rng(11);
                         const std::size_t n = 7, e = 6, h = 3, N = 3;
                         auto x = uniform_tensor<double>({n, e}, -1, 1, rng);
                         auto A = uniform_tensor<double>({h}, -1.5, -0.2, rng);
                         auto B = uniform_tensor<double>({n, N}, -1, 1, rng);
                         auto C = uniform_tensor<double>({n, N}, -1, 1, rng);
                         auto d = uniform_tensor<double>({n, h}, 0.1, 0.9, rng);
                         auto r = uniform_tensor<double>({n, e}, -1, 1, rng, false);
                         ParameterSet<double> ps;
                         ps.add("x", x);
                         ps.add("A", A);
                         ps.add("B", B);
                         ps.add("C", C);
                         ps.add("delta", d);
                         return module(ps, [&] { return sum_all(mul(selective_scan(x, A, B, C, d, mode, 3), r)); });
                     }});
    }
    s.push_back({"causal_conv1d", [] {
                     return binary([](auto& x, auto& k) {
                         return causal_conv1d(x, k, Tensor<double>::full({3}, 0.1));
                     }, {6, 3}, {4, 3}, -1, 1);
                 }});
    s.push_back({"traj_mamba_block", [] {
                     const auto& f = fixture();
                     Rng rng(4);
                     TrajMambaBlock<double> b(f.encoder, rng);
                     auto zg = uniform_tensor<double>({5, 4}, -1, 1, rng, false);
                     auto zr = uniform_tensor<double>({5, 4}, -1, 1, rng, false);
                     auto mv = uniform_tensor<double>({5, 3}, 0, 1, rng, false);
                     auto r = uniform_tensor<double>({5, 4}, -1, 1, rng, false);
                     ParameterSet<double> ps;
                     b.collect(ps, "block");
                     return module(ps, [&] {
                         auto o = b(zg, zr, mv, ScanMode::sequential, 64);
                         return add(mean_all(o.z_g), sum_all(mul(o.z_r, r)));
                     });
                 }});
    s.push_back({"mamba2_block", [] {
                     Rng rng(5);
                     Mamba2Block<double> m(4, 3, 2, rng);
                     auto x = uniform_tensor<double>({5, 4}, -1, 1, rng);
                     auto r = uniform_tensor<double>({5, 4}, -1, 1, rng, false);
                     ParameterSet<double> ps;
                     m.collect(ps, "m");
                     ps.add("x", x);
                     return module(ps, [&] { return sum_all(mul(m(x), r)); });
                 }});
    s.push_back({"encoder", [] {
                     const auto& f = fixture();
                     Rng rng(5);
                     TrajMambaEncoder<double> enc(f.encoder, f.world.network, rng, 2, 4);
                     auto r = uniform_tensor<double>({1, f.encoder.embed_dim}, -1, 1, rng, false);
                     ParameterSet<double> ps;
                     enc.collect(ps, "encoder");
                     return module(ps, [&] { return sum_all(mul(enc.encode(f.kd.full[2]), r)); }, 8);
                 }});
    s.push_back({"purpose_views", [] {
                     const auto& f = fixture();
                     Rng rng(6);
                     PurposeViews<double> v(f.views, f.encoder.embed_dim, f.world.pois.size(), rng);
                     std::vector<const TrajViewInputs*> batch{&f.purpose.views[0], &f.purpose.views[1],
                                                              &f.purpose.views[2]};
                     auto r1 = uniform_tensor<double>({3, f.encoder.embed_dim}, -1, 1, rng, false);
                     auto r2 = uniform_tensor<double>({3, f.encoder.embed_dim}, -1, 1, rng, false);
                     ParameterSet<double> ps;
                     v.collect(ps, "views");
                     return module(ps, [&] {
                         auto [road, poi] = v(f.graph, batch, true);
                         return add(sum_all(mul(road, r1)), sum_all(mul(poi, r2)));
                     }, 8);
                 }});
    s.push_back({"infonce", [] {
                     Rng rng(8);
                     auto a = uniform_tensor<double>({5, 4}, -1, 1, rng);
                     auto p = uniform_tensor<double>({5, 4}, -1, 1, rng);
                     LearnableTemperature<double> temp;
                     ParameterSet<double> ps;
                     ps.add("a", a);
                     ps.add("p", p);
                     temp.collect(ps, "temp");
                     return module(ps, [&] { return infonce_pair_loss(a, p, temp); });
                 }});
    s.push_back({"mec", [] {
                     Rng rng(9);
                     auto zt = l2_normalize_rows(uniform_tensor<double>({6, 4}, -1, 1, rng, false));
                     auto zs = uniform_tensor<double>({6, 4}, -1, 1, rng);
                     ParameterSet<double> ps;
                     ps.add("z_s", zs);
                     return module(ps, [&] { return mec_loss(zt, l2_normalize_rows(zs), MecOptions{}); });
                 }});
    s.push_back({"mask_loss", [] {
                     Rng rng(10);
                     auto mu = uniform_tensor<double>({7, 1}, -1, 1, rng);
                     ParameterSet<double> ps;
                     ps.add("mu", mu);
                     return module(ps, [&] { return mask_loss(mu, 0.5); });
                 }});
    s.push_back({"mask_generator", [] {
                     const auto& f = fixture();
                     Rng rng(12);
                     MaskGenerator<double> g(f.mask, f.world.network, rng);
                     auto r = uniform_tensor<double>({f.kd.pre[1].n, 1}, -1, 1, rng, false);
                     ParameterSet<double> ps;
                     g.collect(ps, "mask");
                     return module(ps, [&] { return sum_all(mul(g.compute_mu(f.kd.pre[1]), r)); });
                 }});
    s.push_back({"purpose_loss", [] {
                     const auto& f = fixture();
                     Rng rng(21);
                     PurposeModel<double> m(f.encoder, f.views, f.world, rng);
                     ParameterSet<double> ps;
                     m.collect(ps);
                     const std::vector<std::size_t> batch{0, 3, 5, 7};
                     return module(ps, [&] { return purpose_loss(m, f.graph, f.purpose, batch, true).total; }, 6);
                 }});
    s.push_back({"kd_loss", [] {
                     const auto& f = fixture();
                     Rng rng(22);
                     TrajMambaEncoder<double> teacher(f.encoder, f.world.network, rng);
                     auto m = init_student(teacher, f.mask, f.world.network, rng);
                     // Gates away from the clamp corners keep the loss smooth in mu.
                     for (auto& v : m.generator.mu_hat.mutable_data()) v = 0.5 + 0.1 * v;
                     const auto zt = embed_all(teacher, f.kd.full);
                     const std::vector<std::size_t> batch{1, 2, 6};
                     TrainConfig cfg;
                     ParameterSet<double> ps;
                     m.collect(ps);
                     return module(ps, [&] {
                         Rng noise(0);
                         return kd_loss(m, index_rows(zt, batch), f.kd, batch, cfg, noise).total;
                     }, 6);
                 }});
    for (HeadKind kind : {HeadKind::gps, HeadKind::road, HeadKind::time}) {
        s.push_back({std::string("head_loss_") + head_kind_name(kind), [kind] {
                         Rng rng(13);
                         auto x = uniform_tensor<double>({5, 3}, -1, 1, rng, false);
                         const std::vector<std::size_t> rows{0, 1, 2, 3, 4};
                         TaskLabels l{kind, {}, {}};
                         if (kind == HeadKind::road) l.classes = {2, 0, 1, 3, 3};
                         else
                             for (std::size_t i = 0; i < (kind == HeadKind::gps ? 10u : 5u); ++i)
                                 l.values.push_back(0.2 * static_cast<double>(i) - 0.7);
                         const std::size_t out = kind == HeadKind::road ? 4 : (kind == HeadKind::gps ? 2 : 1);
                         PredictorHead<double> head(kind, 3, out, rng);
                         ParameterSet<double> ps;
                         head.collect(ps, "head");
                         return module(ps, [&] { return head_loss(head(x), l, rows); });
                     }});
    }
    return s;
}

/// Runs every check, printing one line each. A check that throws fails with
/// the exception text as its worst parameter.
inline std::vector<GradCheckRow> run_gradchecks(const std::vector<GradCheck>& suite, std::ostream* out = nullptr) {
    std::vector<GradCheckRow> rows;
    for (const auto& c : suite) {
        GradCheckRow row;
        row.name = c.name;
        const auto t0 = std::chrono::steady_clock::now();
        try {
            const auto rep = c.run();
            row.passed = rep.passed();
            row.max_rel_error = rep.max_rel_error();
            double worst = -1.0;
            for (const auto& p : rep.per_param)
                if (p.max_rel_error > worst) {
                    worst = p.max_rel_error;
                    row.worst_param = p.name;
                }
        } catch (const std::exception& e) {
            row.passed = false;
            row.max_rel_error = std::numeric_limits<double>::infinity();
            row.worst_param = std::string("error: ") + e.what();
        }
        row.seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (out)
            *out << (row.passed ? "PASS " : "FAIL ") << row.name << " max_rel_error=" << row.max_rel_error
                 << " worst=" << row.worst_param << '\n';
        rows.push_back(std::move(row));
    }
    return rows;
}

}  // namespace trajmamba
