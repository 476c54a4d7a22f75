#include <gtest/gtest.h>

#include <cmath>
#include <numeric>

#include "trajmamba/grad/fdcheck.hpp"
#include "trajmamba/pretrain/train.hpp"
#include "trajmamba/tasks/eval.hpp"
#include "trajmamba/tasks/report.hpp"
#include "trajmamba/traj/synth.hpp"

using namespace trajmamba;

namespace {

Trajectory line_traj(std::int64_t id, double lng0, double lat0, std::size_t n, std::size_t first_road,
                     std::size_t last_road, double step_deg = 0.001) {
    Trajectory t;
    t.id = id;
    for (std::size_t i = 0; i < n; ++i) {
        TrajPoint p;
        p.lng = lng0 + step_deg * static_cast<double>(i);
        p.lat = lat0;
        p.road = i == 0 ? first_road : (i + 1 == n ? last_road : 100 + i);
        p.t = 1000 + 10 * static_cast<std::int64_t>(i);
        t.points.push_back(p);
    }
    return t;
}

World tiny_world() {
    WorldConfig wc;
    wc.rows = 3;
    wc.cols = 3;
    wc.poi_count = 20;
    wc.spacing_m = 300;
    return generate_synthetic_world(wc);
}

EncoderConfig tiny_encoder() {
    EncoderConfig c;
    c.layers = 1;
    c.embed_dim = 8;
    c.state_dim = 4;
    c.heads = 2;
    return c;
}

MaskConfig tiny_mask() {
    MaskConfig m;
    m.latent_dim = 4;
    m.state_dim = 2;
    m.heads = 2;
    return m;
}

HeadTrainConfig quick_head() {
    HeadTrainConfig h;
    h.max_epochs = 3;
    h.batch_size = 8;
    h.patience = 2;
    return h;
}

}  // namespace

// ---------------------------------------------------------------- truncation

TEST(Truncate, DropsLastFivePoints) {
    const auto t10 = line_traj(1, 104.0, 30.0, 10, 1, 2);
    const auto cut = truncate_for_prediction(t10);
    ASSERT_TRUE(cut);
    EXPECT_EQ(cut->prefix.size(), 5u);
    EXPECT_EQ(cut->prefix.id, 1);
    EXPECT_EQ(cut->destination.lng, t10.points.back().lng);
    EXPECT_EQ(cut->destination.road, 2u);

    const auto cut7 = truncate_for_prediction(line_traj(2, 104.0, 30.0, 7, 1, 2));
    ASSERT_TRUE(cut7);
    EXPECT_EQ(cut7->prefix.size(), 2u);
    EXPECT_FALSE(truncate_for_prediction(line_traj(3, 104.0, 30.0, 6, 1, 2)));
}

TEST(Truncate, StripTimingKeepsDepartureOnly) {
    const auto t = line_traj(1, 104.0, 30.0, 6, 1, 2);
    const auto s = strip_timing(t);
    EXPECT_DOUBLE_EQ(travel_time_s(t), 50.0);
    EXPECT_DOUBLE_EQ(travel_time_s(s), 5.0);
    EXPECT_EQ(s.points.front().t, t.points.front().t);
    for (std::size_t i = 0; i < s.size(); ++i) EXPECT_EQ(s.points[i].lng, t.points[i].lng);
}

// ---------------------------------------------------------------- metrics

TEST(Metrics, PerfectPredictions) {
    const std::vector<GeoPoint> g{{104.0, 30.0}, {104.1, 30.2}};
    const auto gm = gps_metrics(g, g);
    EXPECT_EQ(gm.mae_m, 0.0);
    EXPECT_EQ(gm.rmse_m, 0.0);
    const auto cm = class_metrics({{0.9, 0.1}, {0.2, 0.8}}, {0, 1});
    EXPECT_EQ(cm.acc1, 1.0);
    EXPECT_EQ(cm.macro_recall, 1.0);
    const auto rm = regression_metrics({1, 2, 3}, {1, 2, 3});
    EXPECT_EQ(rm.mae, 0.0);
    EXPECT_EQ(rm.rmse, 0.0);
    EXPECT_EQ(rm.mape, 0.0);
    const auto km = ranking_metrics({1, 1, 1});
    EXPECT_EQ(km.acc1, 1.0);
    EXPECT_EQ(km.mean_rank, 1.0);
}

TEST(Metrics, MacroRecallTwoClasses) {
    // Class 0: 2/2 correct. Class 1: 1/2 correct.
    const std::vector<std::vector<double>> s{{1, 0}, {1, 0}, {0, 1}, {1, 0}};
    const auto m = class_metrics(s, {0, 0, 1, 1});
    EXPECT_DOUBLE_EQ(m.macro_recall, 0.75);
    EXPECT_DOUBLE_EQ(m.acc1, 0.75);
}

TEST(Metrics, MacroRecallIgnoresClassFrequency) {
    const std::vector<std::vector<double>> s{{1, 0}, {1, 0}, {0, 1}, {1, 0}};
    auto s2 = s;
    std::vector<std::size_t> y{0, 0, 1, 1}, y2 = y;
    // Tripling class 1 with the same per-class recall.
    for (int k = 0; k < 2; ++k) {
        s2.push_back({0, 1});
        s2.push_back({1, 0});
        y2.push_back(1);
        y2.push_back(1);
    }
    EXPECT_DOUBLE_EQ(class_metrics(s, y).macro_recall, class_metrics(s2, y2).macro_recall);
}

TEST(Metrics, TiedScoresRankAgainstTruth) {
    EXPECT_EQ(rank_of({0.5, 0.5, 0.5}, 1), 3u);
    EXPECT_EQ(rank_of({0.1, 0.9, 0.5}, 1), 1u);
}

TEST(Metrics, HaversineErrorOfOneDegreeLatitude) {
    const auto m = gps_metrics({{104.0, 31.0}}, {{104.0, 30.0}});
    EXPECT_NEAR(m.mae_m, kEarthRadiusM * std::numbers::pi / 180.0, 1e-6);
}

TEST(Metrics, RandomCaseMatchesRecomputation) {
    Rng rng(3);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t n = 20, classes = 7;
    std::vector<std::vector<double>> scores(n, std::vector<double>(classes));
    std::vector<std::size_t> truth(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : scores[i]) v = u(rng);
        truth[i] = static_cast<std::size_t>(rng() % classes);
    }
    // Oracle: sort class indices by score, read off the truth's position.
    double acc1 = 0, acc5 = 0;
    std::vector<double> hit(classes, 0), tot(classes, 0);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<std::size_t> order(classes);
        std::iota(order.begin(), order.end(), 0);
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return scores[i][a] > scores[i][b]; });
        const auto pos = std::find(order.begin(), order.end(), truth[i]) - order.begin();
        acc1 += pos == 0;
        acc5 += pos < 5;
        hit[truth[i]] += pos == 0;
        tot[truth[i]] += 1;
    }
    double recall = 0;
    int present = 0;
    for (std::size_t c = 0; c < classes; ++c)
        if (tot[c] > 0) {
            recall += hit[c] / tot[c];
            ++present;
        }
    const auto m = class_metrics(scores, truth);
    EXPECT_NEAR(m.acc1, acc1 / n, 1e-12);
    EXPECT_NEAR(m.acc5, acc5 / n, 1e-12);
    EXPECT_NEAR(m.macro_recall, recall / present, 1e-12);
    EXPECT_LE(m.acc1, m.acc5);

    std::vector<double> pred(n), y(n);
    for (std::size_t i = 0; i < n; ++i) {
        pred[i] = 100 * u(rng);
        y[i] = i == 4 ? 0.0 : 100 * u(rng);
    }
    double abs_sum = 0, sq_sum = 0, pct = 0;
    for (std::size_t i = 0; i < n; ++i) {
        abs_sum += std::fabs(pred[i] - y[i]);
        sq_sum += std::pow(pred[i] - y[i], 2);
        if (i != 4) pct += std::fabs(pred[i] - y[i]) / std::fabs(y[i]);
    }
    const auto r = regression_metrics(pred, y);
    EXPECT_NEAR(r.mae, abs_sum / n, 1e-12);
    EXPECT_NEAR(r.rmse, std::sqrt(sq_sum / n), 1e-12);
    EXPECT_NEAR(r.mape, 100 * pct / (n - 1), 1e-9);
}

TEST(Metrics, RankingInvariants) {
    Rng rng(5);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::size_t> ranks(1 + rng() % 30);
        for (auto& r : ranks) r = 1 + rng() % 20;
        const auto m = ranking_metrics(ranks);
        EXPECT_LE(m.acc1, m.acc5);
        EXPECT_GE(m.mean_rank, 1.0);
    }
    EXPECT_THROW(ranking_metrics({0}), ShapeError);
    EXPECT_THROW(class_metrics({{1.0}}, {1}), ShapeError);
}

// ---------------------------------------------------------------- search

TEST(StsSearch, QueryItselfRanksFirst) {
    const std::vector<double> q{0.3, -1.0, 2.0};
    const auto r = sts_search(q, {{1, 0, 0}, q, {0, 1, 0}}, {10, 11, 12});
    EXPECT_EQ(r.front(), 11);
}

TEST(StsSearch, OrthogonalDistractorsRankBelowTarget) {
    const std::vector<double> q{1, 0, 0, 0};
    const auto r = sts_search(q, {{0, 1, 0, 0}, {0, 0, 1, 0}, {0.1, 0, 0, 1}, {0, 0, 0, -1}}, {1, 2, 3, 4});
    EXPECT_EQ(r.front(), 3);
}

TEST(StsSearch, TiesBreakByAscendingId) {
    const auto r = sts_search({1, 0}, {{2, 0}, {1, 0}, {0, 1}}, {9, 4, 1});
    EXPECT_EQ(r, (std::vector<std::int64_t>{4, 9, 1}));
}

TEST(StsSearch, MatchesPairwiseCountOracleOn100Vectors) {
    Rng rng(17);
    std::normal_distribution<double> n01;
    const std::size_t n = 100, d = 6;
    std::vector<double> q(d);
    for (auto& v : q) v = n01(rng);
    std::vector<std::vector<double>> db(n, std::vector<double>(d));
    std::vector<std::int64_t> ids(n);
    for (std::size_t i = 0; i < n; ++i) {
        for (auto& v : db[i]) v = n01(rng);
        ids[i] = static_cast<std::int64_t>((i * 37) % 101);
    }
    db[7] = db[3];  // one exact tie
    // Oracle: the position of each entry is the number of entries that beat it.
    std::vector<double> sim(n);
    for (std::size_t i = 0; i < n; ++i) {
        double dot = 0, a = 0, b = 0;
        for (std::size_t k = 0; k < d; ++k) {
            dot += q[k] * db[i][k];
            a += q[k] * q[k];
            b += db[i][k] * db[i][k];
        }
        sim[i] = dot / std::sqrt(a * b);
    }
    std::vector<std::int64_t> expected(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::size_t beaten_by = 0;
        for (std::size_t j = 0; j < n; ++j)
            if (sim[j] > sim[i] || (sim[j] == sim[i] && ids[j] < ids[i])) ++beaten_by;
        expected[beaten_by] = ids[i];
    }
    EXPECT_EQ(sts_search(q, db, ids), expected);

    // Common positive scaling leaves the order unchanged.
    auto scaled = db;
    for (auto& row : scaled)
        for (auto& v : row) v *= 4.0;
    EXPECT_EQ(sts_search(q, scaled, ids), expected);
}

TEST(StsSearch, Errors) {
    EXPECT_THROW(sts_search({1.0}, {}, {}), DataError);
    EXPECT_THROW(sts_search({1.0}, {{1.0}}, {1, 2}), ShapeError);
}

// ---------------------------------------------------------------- STS labels

namespace {

// Ten trajectories spread about 1.1 km apart in longitude so all are mutual
// negatives under a 500 m radius, each with its own OD roads.
std::vector<Trajectory> spread_pool() {
    std::vector<Trajectory> pool;
    for (int i = 0; i < 10; ++i)
        pool.push_back(line_traj(i, 104.0 + 0.01 * i, 30.0, 8, 10 * i + 1, 10 * i + 2));
    return pool;
}

}  // namespace

TEST(StsLabels, NoCandidateGivesSelfPair) {
    StsConfig cfg;
    cfg.negatives = 3;
    const auto inst = sts_build_labels(spread_pool(), cfg);
    ASSERT_EQ(inst.size(), 10u);
    for (const auto& s : inst) {
        EXPECT_TRUE(s.self_pair);
        EXPECT_EQ(s.query, s.target);
        EXPECT_EQ(s.negatives.size(), 3u);
    }
}

TEST(StsLabels, DuplicateIsSelectedAsTarget) {
    auto pool = spread_pool();
    auto dup = pool[4];
    dup.id = 99;
    pool.push_back(dup);
    // A same-OD trajectory that takes a different path.
    auto other = pool[4];
    other.id = 98;
    for (std::size_t i = 1; i + 1 < other.size(); ++i) {
        other.points[i].lat += 0.004;
        other.points[i].road += 50;
    }
    pool.push_back(other);
    StsConfig cfg;
    cfg.negatives = 3;
    const auto inst = sts_build_labels(pool, cfg);
    EXPECT_FALSE(inst[4].self_pair);
    EXPECT_EQ(inst[4].target, 10u);
    EXPECT_EQ(inst[10].target, 4u);
    for (auto j : inst[4].negatives) EXPECT_TRUE(j != 4 && j != 10);
}

TEST(StsLabels, OddEvenHalves) {
    const auto [odd, even] = odd_even_halves(line_traj(1, 104.0, 30.0, 7, 1, 2));
    ASSERT_EQ(odd.size(), 4u);
    ASSERT_EQ(even.size(), 3u);
    EXPECT_DOUBLE_EQ(odd.points[1].lng, 104.002);
    EXPECT_DOUBLE_EQ(even.points[0].lng, 104.001);
}

TEST(StsLabels, NegativesRespectExclusionRadiusExhaustively) {
    WorldConfig wc;
    const auto world = generate_synthetic_world(wc);
    TrajectoryConfig tc;
    tc.count = 300;
    const auto pool = generate_trajectories(world, tc);
    StsConfig cfg;
    cfg.negatives = 40;
    const auto inst = sts_build_labels(pool, cfg);
    std::size_t non_self = 0;
    for (const auto& s : inst) {
        non_self += !s.self_pair;
        const auto& q = pool[s.query];
        if (!s.self_pair) {
            EXPECT_EQ(pool[s.target].points.front().road, q.points.front().road);
            EXPECT_EQ(pool[s.target].points.back().road, q.points.back().road);
        }
        std::set<std::size_t> seen;
        for (auto j : s.negatives) {
            EXPECT_TRUE(seen.insert(j).second);
            EXPECT_NE(j, s.query);
            EXPECT_NE(j, s.target);
            EXPECT_GE(haversine(pool[j].points.front().geo(), q.points.front().geo()), 500.0);
            EXPECT_GE(haversine(pool[j].points.back().geo(), q.points.back().geo()), 500.0);
        }
    }
    // Replayed routes make shared-OD pairs common.
    EXPECT_GT(static_cast<double>(non_self) / static_cast<double>(pool.size()), 0.2);
    EXPECT_EQ(sts_build_labels(pool, cfg)[17].negatives, inst[17].negatives);
}

TEST(StsLabels, InsufficientPoolNamesMinimum) {
    StsConfig cfg;
    cfg.negatives = 20;
    try {
        sts_build_labels(spread_pool(), cfg);
        FAIL() << "expected DataError";
    } catch (const DataError& e) {
        EXPECT_NE(std::string(e.what()).find("at least 22"), std::string::npos) << e.what();
    }
    cfg.negatives = 8;
    auto pool = spread_pool();
    // Trajectories 3 and 4 start and end where 2 does, leaving 2 with 7 negatives.
    for (int k : {3, 4}) {
        pool[k].points.front().lng = pool[2].points.front().lng;
        pool[k].points.back().lng = pool[2].points.back().lng;
    }
    EXPECT_THROW(sts_build_labels(pool, cfg), DataError);
}

// ---------------------------------------------------------------- heads

TEST(Heads, SeparableTwoClassToyReachesPerfectAccuracy) {
    Rng rng(1);
    std::normal_distribution<double> noise(0.0, 0.2);
    const std::size_t n = 64, e = 4;
    auto make = [&](std::size_t count) {
        std::vector<double> x(count * e);
        TaskLabels l{HeadKind::road, {}, {}};
        for (std::size_t i = 0; i < count; ++i) {
            const std::size_t c = i % 2;
            x[i * e] = (c == 0 ? 1.0 : -1.0) + noise(rng);
            for (std::size_t k = 1; k < e; ++k) x[i * e + k] = noise(rng);
            l.classes.push_back(c);
        }
        return std::pair{Tensor<double>::from({count, e}, std::move(x)), l};
    };
    auto [xt, yt] = make(n);
    auto [xv, yv] = make(32);
    auto [xs, ys] = make(32);
    PredictorHead<double> head(HeadKind::road, e, 2, rng);
    HeadTrainConfig cfg;
    cfg.max_epochs = 200;
    cfg.batch_size = 16;
    cfg.lr = 1e-2;
    cfg.patience = 30;
    train_head(head, constant_embeddings(xt), yt, constant_embeddings(xv), yv, cfg);
    const auto m = class_metrics(predict_rows(head, constant_embeddings(xs), 32), ys.classes);
    EXPECT_EQ(m.acc1, 1.0);
}

TEST(Heads, ConstantDestinationIsLearnedExactly) {
    Rng rng(2);
    const std::size_t n = 64, e = 8;
    const auto x = uniform_tensor<double>({n, e}, -1.0, 1.0, rng);
    TaskLabels l{HeadKind::gps, {}, {}};
    for (std::size_t i = 0; i < n; ++i) {
        l.values.push_back(0.3);
        l.values.push_back(-0.2);
    }
    PredictorHead<double> head(HeadKind::gps, e, 2, rng);
    HeadTrainConfig cfg;
    cfg.max_epochs = 400;
    cfg.batch_size = 64;
    cfg.lr = 1e-2;
    cfg.patience = 400;
    train_head(head, constant_embeddings(x), l, constant_embeddings(x), l, cfg);
    // Half-extent 0.01 degrees, as on a 2 km map.
    const std::array<double, 4> norm{104.0, 30.0, 0.01, 0.01};
    std::vector<GeoPoint> pred, truth;
    for (const auto& row : predict_rows(head, constant_embeddings(x), n)) {
        pred.push_back({row[0] * norm[2] + norm[0], row[1] * norm[3] + norm[1]});
        truth.push_back({0.3 * norm[2] + norm[0], -0.2 * norm[3] + norm[1]});
    }
    EXPECT_LT(gps_metrics(pred, truth).mae_m, 2.0);
}

TEST(Heads, EarlyStoppingRestoresBestEpoch) {
    Rng rng(4);
    const std::size_t e = 4;
    const auto xt = uniform_tensor<double>({40, e}, -1.0, 1.0, rng);
    const auto xv = uniform_tensor<double>({20, e}, -1.0, 1.0, rng);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    TaskLabels yt{HeadKind::time, {}, {}}, yv{HeadKind::time, {}, {}};
    for (int i = 0; i < 40; ++i) yt.values.push_back(u(rng));
    for (int i = 0; i < 20; ++i) yv.values.push_back(u(rng));
    PredictorHead<double> head(HeadKind::time, e, 1, rng);
    HeadTrainConfig cfg;
    cfg.max_epochs = 300;
    cfg.batch_size = 8;
    cfg.lr = 3e-2;
    cfg.patience = 3;
    const auto res = train_head(head, constant_embeddings(xt), yt, constant_embeddings(xv), yv, cfg);
    EXPECT_LT(res.epochs_run, cfg.max_epochs);  // noise labels: validation stops improving
    EXPECT_EQ(res.epochs_run, res.best_epoch + 1 + cfg.patience);
    EXPECT_EQ(evaluate_head_loss(head, constant_embeddings(xv), yv, cfg.batch_size), res.best_valid_loss);
    EXPECT_EQ(*std::min_element(res.valid_curve.begin(), res.valid_curve.end()), res.best_valid_loss);
}

TEST(Heads, LossGradients) {
    Rng rng(6);
    const auto x = uniform_tensor<double>({5, 3}, -1.0, 1.0, rng);
    const std::vector<std::size_t> rows{0, 1, 2, 3, 4};
    TaskLabels road{HeadKind::road, {}, {2, 0, 1, 3, 3}};
    TaskLabels gps{HeadKind::gps, {0.1, -0.3, 0.5, 0.2, -0.1, 0.0, 0.9, -0.4, 0.2, 0.2}, {}};
    for (auto* labels : {&road, &gps}) {
        PredictorHead<double> head(labels->kind, 3, labels->kind == HeadKind::road ? 4 : 2, rng);
        ParameterSet<double> ps;
        head.collect(ps, "head");
        const auto r = finite_difference_check([&] { return head_loss(head(x), *labels, rows); }, ps);
        EXPECT_TRUE(r.passed()) << head_kind_name(labels->kind) << " max rel " << r.max_rel_error();
    }
}

TEST(Heads, LossErrors) {
    const auto p = Tensor<double>::zeros({2, 3});
    EXPECT_THROW(head_loss(p, TaskLabels{HeadKind::road, {}, {0, 5}}, {0, 1}), DataError);
    EXPECT_THROW(head_loss(p, TaskLabels{HeadKind::gps, {0, 0, 0, 0}, {}}, {0, 1}), ShapeError);
    EXPECT_THROW(head_loss(p, TaskLabels{HeadKind::road, {}, {0, 1}}, {0}), ShapeError);
}

// ---------------------------------------------------------------- evaluation

class EvalTest : public ::testing::Test {
protected:
    void SetUp() override {
        world = tiny_world();
        TrajectoryConfig tc;
        tc.count = 60;
        tc.min_edges = 3;
        tc.max_edges = 5;
        split = chronological_split(generate_trajectories(world, tc));
        Rng rng(9);
        TrajMambaEncoder<double> teacher(tiny_encoder(), world.network, rng);
        model = init_student(teacher, tiny_mask(), world.network, rng);
        cfg.head = quick_head();
        cfg.warn = nullptr;
    }

    std::string model_bytes() { return encode_checkpoint(student_checkpoint(model, {})); }

    World world;
    Split split;
    StudentModel<double> model;
    EvalConfig cfg;
};

TEST_F(EvalTest, FrozenDestinationPredictionLeavesEncoderUntouched) {
    const auto before = git_blob_sha1(model_bytes());
    const auto r = run_destination_prediction(model, world.network, split, cfg);
    EXPECT_EQ(git_blob_sha1(model_bytes()), before);
    EXPECT_TRUE(r.contains("gps") && r.contains("road"));
    EXPECT_GE(r["road"]["acc5"].get<double>(), r["road"]["acc1"].get<double>());
    // Majority baseline recomputed from the destinations of usable trajectories.
    std::map<std::size_t, int> freq;
    for (const auto& t : split.train)
        if (t.size() >= 7) ++freq[t.points.back().road];
    std::size_t top = 0;
    int best = -1;
    for (const auto& [road, c] : freq)
        if (c > best) {
            best = c;
            top = road;
        }
    double hits = 0, usable = 0;
    for (const auto& t : split.test)
        if (t.size() >= 7) {
            usable += 1;
            hits += t.points.back().road == top;
        }
    EXPECT_DOUBLE_EQ(r["road"]["majority_acc1"].get<double>(), hits / usable);
    EXPECT_TRUE(std::isfinite(r["gps"]["mae_m"].get<double>()));
    EXPECT_EQ(run_destination_prediction(model, world.network, split, cfg), r);
}

TEST_F(EvalTest, FineTuneTrainsACopy) {
    const auto before = model_bytes();
    cfg.finetune = true;
    const auto ft = run_destination_prediction(model, world.network, split, cfg);
    EXPECT_EQ(model_bytes(), before);
    cfg.finetune = false;
    const auto frozen = run_destination_prediction(model, world.network, split, cfg);
    EXPECT_NE(ft["road"]["training"]["best_valid_loss"], frozen["road"]["training"]["best_valid_loss"]);
}

TEST_F(EvalTest, ArrivalTimeReportsSeconds) {
    const auto r = run_arrival_time(model, world.network, split, cfg);
    EXPECT_GT(r["time"]["mae"].get<double>(), 0.0);
    EXPECT_GE(r["time"]["rmse"].get<double>(), r["time"]["mae"].get<double>());
}

TEST_F(EvalTest, SimilaritySearchIsFrozenOnly) {
    cfg.sts.negatives = 2;
    cfg.sts.exclude_radius_m = 100.0;
    const auto r = run_similarity_search(model, split, cfg);
    EXPECT_EQ(r["sts"]["instances"].get<std::size_t>(), split.test.size());
    EXPECT_GE(r["sts"]["mean_rank"].get<double>(), 1.0);
    EXPECT_LE(r["sts"]["mean_rank"].get<double>(), 3.0);
    cfg.finetune = true;
    EXPECT_THROW(run_similarity_search(model, split, cfg), UsageError);
}

TEST(Report, GitBlobHashMatchesGit) {
    EXPECT_EQ(git_blob_sha1(""), "e69de29bb2d1d6434b8b29ae775ad8c2e48c5391");
    EXPECT_EQ(git_blob_sha1("hello\n"), "ce013625030ba8dba906f756967f9e9ca394464a");
}
