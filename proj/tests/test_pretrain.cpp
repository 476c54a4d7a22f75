#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "trajmamba/grad/fdcheck.hpp"
#include "trajmamba/pretrain/train.hpp"
#include "trajmamba/traj/synth.hpp"

using namespace trajmamba;
using T64 = Tensor<double>;

namespace {

void expect_pass(const FdReport& r) {
    EXPECT_TRUE(r.passed()) << "max rel error " << r.max_rel_error();
    for (const auto& f : r.failures)
        ADD_FAILURE() << f.name << "[" << f.worst_index << "] analytic " << f.analytic << " numeric " << f.numeric
                      << " rel " << f.max_rel_error;
}

using Mat = std::vector<std::vector<double>>;

Mat to_mat(const T64& t) {
    Mat m(t.dim(0), std::vector<double>(t.dim(1)));
    for (std::size_t i = 0; i < t.dim(0); ++i)
        for (std::size_t j = 0; j < t.dim(1); ++j) m[i][j] = t.at(i, j);
    return m;
}

Mat matmul_ref(const Mat& a, const Mat& b) {
    Mat c(a.size(), std::vector<double>(b[0].size(), 0.0));
    for (std::size_t i = 0; i < a.size(); ++i)
        for (std::size_t k = 0; k < b.size(); ++k)
            for (std::size_t j = 0; j < b[0].size(); ++j) c[i][j] += a[i][k] * b[k][j];
    return c;
}

Mat normalize_rows(Mat m) {
    for (auto& r : m) {
        double n = 0;
        for (double v : r) n += v * v;
        n = std::sqrt(n);
        for (double& v : r) v /= n;
    }
    return m;
}

/// Dense series: -mu_c tr(sum (-1)^(k+1)/k M^k) with M = lambda Zt^T Zs.
double mec_oracle(const Mat& zt, const Mat& zs, std::size_t K) {
    const double b = static_cast<double>(zt.size()), e = static_cast<double>(zt[0].size());
    Mat ztT(zt[0].size(), std::vector<double>(zt.size()));
    for (std::size_t i = 0; i < zt.size(); ++i)
        for (std::size_t j = 0; j < zt[0].size(); ++j) ztT[j][i] = zt[i][j];
    Mat m = matmul_ref(ztT, zs);
    const double lambda = e / (b * e);
    for (auto& r : m)
        for (double& v : r) v *= lambda;
    Mat p = m;
    double tr = 0;
    for (std::size_t k = 1; k <= K; ++k) {
        if (k > 1) p = matmul_ref(p, m);
        double t = 0;
        for (std::size_t i = 0; i < p.size(); ++i) t += p[i][i];
        tr += (k % 2 == 1 ? 1.0 : -1.0) / static_cast<double>(k) * t;
    }
    return -(b + e) / 2.0 * tr;
}

T64 random_matrix(std::size_t r, std::size_t c, Rng& rng, bool grad = false) {
    return uniform_tensor<double>({r, c}, -1.0, 1.0, rng, grad);
}

World tiny_world() {
    WorldConfig wc;
    wc.rows = 3;
    wc.cols = 3;
    wc.poi_count = 20;
    wc.spacing_m = 300;
    return generate_synthetic_world(wc);
}

std::vector<Trajectory> tiny_trajs(const World& w, std::size_t count, std::size_t max_edges = 3) {
    TrajectoryConfig tc;
    tc.count = count;
    tc.min_edges = 2;
    tc.max_edges = max_edges;
    return generate_trajectories(w, tc);
}

EncoderConfig tiny_encoder() {
    EncoderConfig c;
    c.layers = 1;
    c.embed_dim = 8;
    c.state_dim = 4;
    c.heads = 2;
    return c;
}

ViewConfig tiny_views() {
    ViewConfig v;
    v.text_dim = 8;
    v.state_dim = 4;
    v.heads = 2;
    v.stack_depth = 1;
    return v;
}

MaskConfig tiny_mask() {
    MaskConfig m;
    m.latent_dim = 4;
    m.state_dim = 2;
    m.heads = 2;
    return m;
}

std::filesystem::path fresh_dir(const std::string& name) {
    auto d = std::filesystem::temp_directory_path() / name;
    std::filesystem::remove_all(d);
    std::filesystem::create_directories(d);
    return d;
}

template <typename T>
std::vector<T> flat_params(ParameterSet<T>& ps) {
    std::vector<T> out;
    for (const auto& [_, t] : ps.params) out.insert(out.end(), t.data().begin(), t.data().end());
    return out;
}

}  // namespace

// ---------------------------------------------------------------- InfoNCE

TEST(InfoNce, SingleRowIsZero) {
    Rng rng(1);
    LearnableTemperature<double> temp;
    EXPECT_EQ(infonce_pair_loss(random_matrix(1, 5, rng), random_matrix(1, 5, rng), temp).item(), 0.0);
    EXPECT_NEAR(temp.multiplier(), 1.0 / 0.07, 1e-12);
}

TEST(InfoNce, OrthonormalRowsClosedForm) {
    for (double log_t : {-1.0, 0.0, 0.7, 2.6592600369327779}) {
        LearnableTemperature<double> temp(log_t);
        auto eye = identity_matrix<double>(4);
        auto loss = infonce_pair_loss(scale(eye, 3.0), eye, temp).item();
        // Each row: logits e^{log_t} on the diagonal and 0 elsewhere.
        const double s = std::exp(log_t);
        EXPECT_NEAR(loss, -(s - std::log(std::exp(s) + 3.0)), 1e-12);
    }
}

TEST(InfoNce, PermutingPositivesIncreasesLoss) {
    LearnableTemperature<double> temp;
    auto a = identity_matrix<double>(5);
    std::vector<double> d(25, 0.0);
    for (std::size_t i = 0; i < 5; ++i) d[i * 5 + (i + 1) % 5] = 1.0;  // cyclic shift
    auto shifted = T64::from({5, 5}, d);
    EXPECT_GT(infonce_pair_loss(a, shifted, temp).item(), infonce_pair_loss(a, a, temp).item() + 1.0);
}

TEST(InfoNce, ErrorsAndGradients) {
    Rng rng(2);
    LearnableTemperature<double> temp(0.3);
    EXPECT_THROW(infonce_pair_loss(random_matrix(3, 4, rng), random_matrix(2, 4, rng), temp), ShapeError);
    EXPECT_THROW(infonce_pair_loss(T64::zeros({2, 3}), random_matrix(2, 3, rng), temp), NumericError);
    auto a = random_matrix(4, 3, rng, true), p = random_matrix(4, 3, rng, true);
    ParameterSet<double> ps;
    ps.add("a", a);
    ps.add("p", p);
    temp.collect(ps, "temp");
    expect_pass(finite_difference_check([&] { return infonce_pair_loss(a, p, temp); }, ps, {.tolerance = 1e-6}));
}

// ---------------------------------------------------------------- MEC

TEST(Mec, SingleTermIsScaledTrace) {
    Rng rng(3);
    auto zt = l2_normalize_rows(random_matrix(6, 4, rng)), zs = l2_normalize_rows(random_matrix(6, 4, rng));
    double tr = 0;
    for (std::size_t i = 0; i < 6; ++i)
        for (std::size_t j = 0; j < 4; ++j) tr += zt.at(i, j) * zs.at(i, j);
    const double lambda = 4.0 / (6.0 * 4.0), mu_c = 5.0;
    EXPECT_NEAR(mec_loss(zt, zs, {.order = 1}).item(), -mu_c * lambda * tr, 1e-12);
}

TEST(Mec, MatchesDenseSeriesOracle) {
    Rng rng(4);
    for (std::size_t K : {1u, 2u, 4u}) {
        for (int rep = 0; rep < 5; ++rep) {
            auto zt = l2_normalize_rows(random_matrix(8, 8, rng)), zs = l2_normalize_rows(random_matrix(8, 8, rng));
            const double got = mec_loss(zt, zs, {.order = K}).item();
            const double want = mec_oracle(normalize_rows(to_mat(zt)), normalize_rows(to_mat(zs)), K);
            EXPECT_LT(std::abs(got - want) / std::abs(want), 1e-6) << "K=" << K;
        }
    }
}

TEST(Mec, ScaledIdentityClosedForm) {
    // Z = I_8 gives Zt^T Zs = I, so M = lambda I with lambda = E/(B eps^2).
    auto z = identity_matrix<double>(8);
    for (double eps : {0.5, 1.0, 2.0}) {
        const double lambda = 8.0 / (8.0 * eps * eps);
        for (std::size_t K : {1u, 3u, 6u}) {
            double series = 0;
            for (std::size_t k = 1; k <= K; ++k)
                series += (k % 2 == 1 ? 1.0 : -1.0) * std::pow(lambda, static_cast<double>(k)) / static_cast<double>(k);
            const double want = -(8.0 + 8.0) / 2.0 * 8.0 * series;
            EXPECT_NEAR(mec_loss(z, z, {.order = K, .eps = eps}).item(), want, 1e-10 * std::abs(want));
        }
    }
}

TEST(Mec, LiteralFormIsScalarMultipleOfFirstTerm) {
    Rng rng(5);
    auto zt = l2_normalize_rows(random_matrix(5, 4, rng)), zs = l2_normalize_rows(random_matrix(5, 4, rng));
    const double first = mec_loss(zt, zs, {.order = 1}).item();
    const double literal = mec_loss(zt, zs, {.order = 3, .literal = true}).item();
    EXPECT_NEAR(literal, first * (1.0 - 0.5 + 1.0 / 3.0), 1e-12);
}

TEST(Mec, RowPermutationInvarianceAndErrors) {
    Rng rng(6);
    auto zt = l2_normalize_rows(random_matrix(6, 4, rng)), zs = l2_normalize_rows(random_matrix(6, 4, rng));
    std::vector<std::size_t> perm{3, 0, 5, 1, 4, 2};
    EXPECT_NEAR(mec_loss(zt, zs).item(), mec_loss(index_rows(zt, perm), index_rows(zs, perm)).item(), 1e-12);
    EXPECT_THROW(mec_loss(zt, random_matrix(6, 3, rng)), ShapeError);
    EXPECT_THROW(mec_loss(zt, zs, {.order = 0}), UsageError);
}

TEST(Mec, Gradients) {
    Rng rng(7);
    auto a = random_matrix(5, 4, rng, true), b = random_matrix(5, 4, rng, true);
    ParameterSet<double> ps;
    ps.add("zt", a);
    ps.add("zs", b);
    expect_pass(finite_difference_check(
        [&] { return mec_loss(l2_normalize_rows(a), l2_normalize_rows(b), {.order = 4}); }, ps, {}));
}

// ---------------------------------------------------------------- mask loss and gate

TEST(MaskLoss, ValuesAndLimits) {
    EXPECT_DOUBLE_EQ(mask_loss(T64::zeros({7, 1}), 0.5).item(), 0.5);
    EXPECT_NEAR(mask_loss(T64::full({3, 1}, 50.0), 0.5).item(), 1.0, 1e-15);
    EXPECT_NEAR(mask_loss(T64::full({3, 1}, -50.0), 0.5).item(), 0.0, 1e-15);
    EXPECT_THROW(mask_loss(T64::zeros({1, 1}), 0.0), UsageError);
}

TEST(MaskLoss, MatchesErfOracleAndIsMonotone) {
    Rng rng(8);
    for (double delta : {0.1, 0.5, 2.0}) {
        auto mu = uniform_tensor<double>({40, 1}, -2.0, 2.0, rng, false);
        double want = 0;
        for (double v : mu.data()) want += 0.5 + 0.5 * std::erf(v / (std::sqrt(2.0) * delta));
        want /= 40.0;
        const double got = mask_loss(mu, delta).item();
        EXPECT_LT(std::abs(got - want) / want, 1e-7);
        for (std::size_t i = 0; i < 40; i += 7) {
            auto bumped = std::vector<double>(mu.data().begin(), mu.data().end());
            bumped[i] += 0.01;
            EXPECT_GE(mask_loss(T64::from({40, 1}, bumped), delta).item(), got);
        }
    }
}

TEST(MaskLoss, Gradient) {
    Rng rng(9);
    auto mu = uniform_tensor<double>({6, 1}, -1.0, 1.0, rng, true);
    ParameterSet<double> ps;
    ps.add("mu", mu);
    expect_pass(finite_difference_check([&] { return mask_loss(mu, 0.5); }, ps, {}));
}

TEST(Gate, EvalClampsAndTrainingIsSeeded) {
    Rng rng(10);
    auto mu = T64::from({4, 1}, {0.5, 2.0, -1.0, 0.25});
    auto m = stochastic_gate(mu, 0.5, false, rng);
    EXPECT_EQ(std::vector<double>(m.data().begin(), m.data().end()), (std::vector<double>{0.5, 1.0, 0.0, 0.25}));
    Rng r1(11), r2(11);
    auto a = stochastic_gate(mu, 0.5, true, r1), b = stochastic_gate(mu, 0.5, true, r2);
    EXPECT_EQ(std::vector<double>(a.data().begin(), a.data().end()), std::vector<double>(b.data().begin(), b.data().end()));
    bool differs = false;
    for (std::size_t i = 0; i < 4; ++i) {
        EXPECT_GE(a[i], 0.0);
        EXPECT_LE(a[i], 1.0);
        differs |= a[i] != m[i];
    }
    EXPECT_TRUE(differs);
    EXPECT_THROW(stochastic_gate(mu, 0.0, true, rng), UsageError);
}

// ---------------------------------------------------------------- mask generator and masking

class MaskTest : public ::testing::Test {
  protected:
    void SetUp() override {
        world = tiny_world();
        trajs = tiny_trajs(world, 6);
        Rng rng(12);
        gen = MaskGenerator<double>(tiny_mask(), world.network, rng);
        in = extract_point_inputs(trajs[0]);
    }
    World world;
    std::vector<Trajectory> trajs;
    MaskGenerator<double> gen;
    PointInputs in;
};

TEST_F(MaskTest, ShapeAndZeroSeed) {
    auto mu = gen.compute_mu(in);
    EXPECT_EQ(mu.shape(), (Shape{in.n, 1}));
    std::fill(gen.mu_hat.mutable_data().begin(), gen.mu_hat.mutable_data().end(), 0.0);
    auto zero = gen.compute_mu(in);
    for (double v : zero.data()) EXPECT_EQ(v, 0.0);
}

TEST_F(MaskTest, MatchesDirectFormula) {
    auto x = T64::from({in.n, kMaskFeatureCount}, mask_features(in, gen.gps_norm));
    auto h = gen.block(gen.proj(x));
    auto mu = gen.compute_mu(in);
    const std::size_t d = gen.mu_hat.numel();
    for (std::size_t i = 0; i < in.n; ++i) {
        double s = 0;
        for (std::size_t j = 0; j < d; ++j) {
            const double mh = gen.mu_hat[j];
            s += mh / (1.0 + std::exp(-h.at(i, j) * mh));
        }
        EXPECT_NEAR(mu.at(i, 0), s / static_cast<double>(d), 1e-14);
    }
}

TEST_F(MaskTest, GradientOfMeanMu) {
    ParameterSet<double> ps;
    gen.collect(ps, "mask");
    expect_pass(finite_difference_check([&] { return mean_all(gen.compute_mu(in)); }, ps,
                                        {.tolerance = 1e-4, .max_elements_per_param = 16}));
}

TEST_F(MaskTest, OnesAreIdentityInBothModes) {
    Rng rng(13);
    TrajMambaEncoder<double> enc(tiny_encoder(), world.network, rng);
    auto bundle = enc.features(in);
    auto masked = apply_soft_mask(bundle, T64::full({in.n, 1}, 1.0));
    for (std::size_t i = 0; i < bundle.z_g.numel(); ++i) EXPECT_EQ(masked.z_g[i], bundle.z_g[i]);
    for (std::size_t i = 0; i < bundle.z_r.numel(); ++i) EXPECT_EQ(masked.z_r[i], bundle.z_r[i]);
    std::vector<double> ones(trajs[0].size(), 1.0);
    EXPECT_EQ(apply_hard_mask(trajs[0], ones).size(), trajs[0].size());
    EXPECT_THROW(apply_soft_mask(bundle, T64::full({in.n + 1, 1}, 1.0)), ShapeError);
}

TEST_F(MaskTest, ZerosKeepOnlyEndpoints) {
    std::vector<double> zeros(trajs[0].size(), 0.0);
    auto c = apply_hard_mask(trajs[0], zeros);
    ASSERT_EQ(c.size(), 2u);
    EXPECT_EQ(c.points.front().t, trajs[0].points.front().t);
    EXPECT_EQ(c.points.back().t, trajs[0].points.back().t);
    EXPECT_EQ(hard_mask_indices(std::vector<double>{0.0, 0.3, 0.0, 0.0, 1.0}), (std::vector<std::size_t>{0, 1, 4}));
}

TEST_F(MaskTest, SoftMaskGradientReachesMuHat) {
    Rng rng(14);
    TrajMambaEncoder<double> enc(tiny_encoder(), world.network, rng);
    gen.mu_hat.zero_grad();
    Rng noise(15);
    auto mu = gen.compute_mu(in);
    auto z = enc.encode(apply_soft_mask(enc.features(in), stochastic_gate(mu, 0.5, true, noise)));
    backward(sum_all(z));
    double g = 0;
    for (double v : gen.mu_hat.grad()) g += std::abs(v);
    EXPECT_GT(g, 0.0);
}

TEST_F(MaskTest, CompressionKeepsEndpointsAndIsSubsequence) {
    for (const auto& t : trajs) {
        auto c = compress_trajectory(t, gen);
        ASSERT_GE(c.size(), 2u);
        EXPECT_EQ(c.points.front().t, t.points.front().t);
        EXPECT_EQ(c.points.back().t, t.points.back().t);
        for (std::size_t i = 1; i < c.size(); ++i) EXPECT_LT(c.points[i - 1].t, c.points[i].t);
    }
}

// ---------------------------------------------------------------- checkpoints

TEST(Checkpoints, TeacherRoundTripAndExcludesViews) {
    auto w = tiny_world();
    Rng rng(16);
    PurposeModel<float> model(tiny_encoder(), tiny_views(), w, rng);
    auto ck = teacher_checkpoint(model.encoder, {{"seed", 1}});
    for (const auto& t : ck.tensors) {
        EXPECT_EQ(t.name.rfind("encoder.", 0), 0u) << t.name;
        EXPECT_EQ(t.name.find("views"), std::string::npos);
    }
    const auto bytes = encode_checkpoint(ck);
    auto enc = load_encoder<float>(decode_checkpoint(bytes), w.network, "encoder");
    EXPECT_EQ(encode_checkpoint(teacher_checkpoint(enc, {{"seed", 1}})), bytes);
    auto other = tiny_encoder();
    other.embed_dim = 16;
    try {
        load_encoder<float>(ck, w.network, "encoder", &other);
        FAIL();
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("E is 8"), std::string::npos) << e.what();
    }
}

TEST(Checkpoints, StudentRoundTrip) {
    auto w = tiny_world();
    Rng rng(17);
    TrajMambaEncoder<float> teacher(tiny_encoder(), w.network, rng);
    auto m = init_student(teacher, tiny_mask(), w.network, rng);
    const auto bytes = encode_checkpoint(student_checkpoint(m, {}));
    auto back = load_student<float>(decode_checkpoint(bytes), w.network);
    EXPECT_EQ(encode_checkpoint(student_checkpoint(back, {})), bytes);
    EXPECT_THROW(load_student<float>(teacher_checkpoint(teacher, {}), w.network), DataError);
}

// ---------------------------------------------------------------- training procedures

class TrainTest : public ::testing::Test {
  protected:
    void SetUp() override {
        world = tiny_world();
        trajs = tiny_trajs(world, 10);
        vcfg = tiny_views();
        store = pseudo_embedding_store(world_descriptions(world), vcfg.text_dim);
        graph = build_view_graph(world, store, build_transition_table(trajs), vcfg);
        pdata = prepare_purpose_data(trajs, world);
        kdata = prepare_kd_data(trajs);
        cfg.batch_size = 4;
        cfg.epochs = 2;
        cfg.seed = 5;
    }
    template <typename T>
    PurposeModel<T> model(std::uint64_t seed = 21) {
        Rng rng(seed);
        return PurposeModel<T>(tiny_encoder(), vcfg, world, rng);
    }
    World world;
    std::vector<Trajectory> trajs;
    ViewConfig vcfg;
    TextEmbeddingStore store;
    ViewGraph graph;
    PurposeData pdata;
    KdData kdata;
    TrainConfig cfg;
};

TEST_F(TrainTest, PurposeStepRecordsAndDeterminism) {
    auto m1 = model<float>(), m2 = model<float>();
    std::vector<nlohmann::json> steps;
    TrainHooks hooks;
    hooks.on_step = [&](const nlohmann::json& r) { steps.push_back(r); };
    auto r1 = purpose_pretrain(m1, graph, pdata, cfg, hooks);
    auto r2 = purpose_pretrain(m2, graph, pdata, cfg);
    ASSERT_EQ(steps.size(), 2u * 3u);  // epochs x ceil(10 / 4)
    EXPECT_GT(steps[0]["loss"].get<double>(), 0.0);
    EXPECT_TRUE(std::isfinite(steps[0]["loss"].get<double>()));
    for (const char* k : {"epoch", "step", "loss_road", "loss_poi", "wall_ms"}) EXPECT_TRUE(steps[0].contains(k)) << k;
    EXPECT_EQ(r1.final_loss, r2.final_loss);
    EXPECT_TRUE(r1.complete);
    ParameterSet<float> p1, p2;
    m1.collect(p1);
    m2.collect(p2);
    EXPECT_EQ(flat_params(p1), flat_params(p2));
}

TEST_F(TrainTest, PurposeResumeMatchesUninterrupted) {
    auto dir = fresh_dir("trajmamba_resume");
    cfg.epochs = 3;
    auto full = model<float>();
    purpose_pretrain(full, graph, pdata, cfg);

    auto part = model<float>();
    TrainHooks h;
    h.state_path = dir / "state.tmck";
    h.stop_after_epochs = 1;
    auto first = purpose_pretrain(part, graph, pdata, cfg, h);
    EXPECT_FALSE(first.complete);
    EXPECT_EQ(first.epochs_done, 1u);
    auto resumed = model<float>(99);  // different init: everything must come from the state file
    h.stop_after_epochs = 0;
    auto second = purpose_pretrain(resumed, graph, pdata, cfg, h);
    EXPECT_TRUE(second.complete);
    EXPECT_EQ(second.epoch_loss.size(), 2u);
    ParameterSet<float> a, b;
    full.collect(a);
    resumed.collect(b);
    EXPECT_EQ(flat_params(a), flat_params(b));

    auto changed = cfg;
    changed.lr_purpose = 5e-4;
    EXPECT_THROW(purpose_pretrain(resumed, graph, pdata, changed, h), DataError);
    std::filesystem::remove_all(dir);
}

TEST_F(TrainTest, PurposeLossGradients) {
    auto m = model<double>();
    ParameterSet<double> ps;
    m.collect(ps);
    std::vector<std::size_t> batch{0, 3, 5, 7};
    expect_pass(finite_difference_check([&] { return purpose_loss(m, graph, pdata, batch, true).total; }, ps,
                                        {.tolerance = 1e-4, .max_elements_per_param = 6}));
}

TEST_F(TrainTest, DistillationIdentityAtInitialization) {
    auto teacher = model<double>().encoder;
    Rng rng(22);
    auto s = init_student(teacher, tiny_mask(), world.network, rng);
    for (const auto& in : kdata.full) {
        auto zt = teacher.encode(in);
        auto zs = student_embedding(s, in, T64::full({in.n, 1}, 1.0));
        for (std::size_t c = 0; c < zt.numel(); ++c) EXPECT_NEAR(zs[c], zt[c], 1e-12);
    }
}

TEST_F(TrainTest, KdFreezesTeacherLogsLengthAndIsDeterministic) {
    auto run = [&](std::vector<nlohmann::json>* epochs) {
        auto teacher = model<float>().encoder;
        Rng rng(23);
        auto s = init_student(teacher, tiny_mask(), world.network, rng);
        TrainHooks h;
        if (epochs) h.on_epoch = [epochs](const nlohmann::json& r) { epochs->push_back(r); };
        auto res = kd_pretrain(s, teacher, kdata, cfg, h);
        ParameterSet<float> tp;
        teacher.collect(tp, "t");
        for (const auto& [name, t] : tp.params) {
            EXPECT_FALSE(t.requires_grad()) << name;
            EXPECT_FALSE(t.has_grad()) << name;
        }
        ParameterSet<float> sp;
        s.collect(sp);
        return std::make_pair(res.final_loss, flat_params(sp));
    };
    std::vector<nlohmann::json> epochs;
    auto a = run(&epochs);
    auto b = run(nullptr);
    EXPECT_EQ(a, b);
    ASSERT_EQ(epochs.size(), 2u);
    for (const auto& e : epochs) {
        const double len = e.at("mean_compressed_length").get<double>();
        EXPECT_GE(len, 2.0);
    }
}

TEST_F(TrainTest, KdLossGradients) {
    auto teacher = model<double>().encoder;
    Rng rng(24);
    auto s = init_student(teacher, tiny_mask(), world.network, rng);
    // Keep gates away from the clamp corners so the loss is smooth in mu.
    for (auto& v : s.generator.mu_hat.mutable_data()) v = 0.5 + 0.1 * v;
    const auto zt = embed_all(teacher, kdata.full);
    std::vector<std::size_t> batch{1, 2, 6};
    ParameterSet<double> ps;
    s.collect(ps);
    TrainConfig c = cfg;
    expect_pass(finite_difference_check(
        [&] {
            Rng noise(0);  // same gate noise on every evaluation
            return kd_loss(s, index_rows(zt, batch), kdata, batch, c, noise).total;
        },
        ps, {.tolerance = 1e-4, .max_elements_per_param = 6}));
}
