#include <gtest/gtest.h>

#include <algorithm>
#include <utility>

#include "drape/grad_check.hpp"
#include "drape/model.hpp"
#include "test_util.hpp"

using namespace drape;
using namespace drape::nn;
using detail::Init;
using detail::ParamAccess;

static const bool kFiniteChecks = [] {
    Tape::set_global_finite_checks(true);
    return true;
}();

namespace {

Tensor random_points(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
    Tensor t(n, 3);
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

std::vector<Vec3> random_cloud(Rng& rng, int n, double lo = -1.0, double hi = 1.0) {
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {rng.uniform(lo, hi), rng.uniform(lo, hi), rng.uniform(lo, hi)};
    return pts;
}

// finite-difference check over every parameter the builder touches
void check_param_grads(ParamStore& store, uint64_t seed,
                       const std::function<Value(Tape&, ParamAccess&)>& build,
                       double tol = 1e-4) {
    auto names = store.names();
    std::vector<Tensor> inputs;
    for (const auto& n : names) inputs.push_back(store.value(n));
    auto rep = grad_check(
        [&](Tape& t, const std::vector<Value>& in) {
            ParamAccess P(t, store, false, false, seed);
            for (size_t i = 0; i < names.size(); ++i) P.seed_cache(names[i], in[i]);
            return build(t, P);
        },
        std::move(inputs));
    EXPECT_LT(rep.max_rel_err, tol) << rep.worst;
}

} // namespace

TEST(StnTest, FreshNetworkIsExactIdentity) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kGlobal);
    Rng rng(11);
    Tensor x = random_points(rng, 5);
    ParamStore store;
    Tape t;
    ParamAccess P(t, store, false, true, cfg.init_seed);
    Value out = stn(t, P, "t", t.leaf(x), cfg);
    EXPECT_EQ(out.val().v, x.v);  // bit-equal
}

TEST(StnTest, PermutingRowsPermutesOutputIdentically) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kGlobal);
    Rng rng(12);
    Tensor x = random_points(rng, 6);
    ParamStore store;
    {
        Tape t;
        ParamAccess P(t, store, false, true, cfg.init_seed);
        stn(t, P, "t", t.leaf(x), cfg);
    }
    // make the learned transform non-trivial, then compare permuted runs
    for (double& v : store.value("t.final.w").v) v = rng.uniform(-0.5, 0.5);
    auto run = [&](const Tensor& input) {
        Tape t;
        ParamAccess P(t, store, false, false, cfg.init_seed);
        return stn(t, P, "t", t.leaf(input), cfg).val();
    };
    Tensor base = run(x);
    std::vector<int> perm = {3, 0, 5, 1, 4, 2};
    Tensor shuffled(6, 3);
    for (int i = 0; i < 6; ++i)
        for (int c = 0; c < 3; ++c) shuffled.at(i, c) = x.at(perm[i], c);
    Tensor got = run(shuffled);
    for (int i = 0; i < 6; ++i)
        for (int c = 0; c < 3; ++c) ASSERT_EQ(got.at(i, c), base.at(perm[i], c));
}

TEST(StnTest, GradientsMatchFiniteDifferences) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kGlobal);
    Rng rng(13);
    Tensor x = random_points(rng, 5);
    ParamStore store;
    {
        Tape t;
        ParamAccess P(t, store, false, true, cfg.init_seed);
        stn(t, P, "t", t.leaf(x), cfg);
    }
    for (const auto& n : store.names())  // move off the zero-init point
        for (double& v : store.value(n).v) v += rng.uniform(-0.3, 0.3);
    Tensor w = random_points(rng, 5);
    check_param_grads(store, cfg.init_seed, [&](Tape& t, ParamAccess& P) {
        Value out = stn(t, P, "t", t.constant(x), cfg);
        return t.sum_all(t.mul(out, t.constant(w)));
    });
}

TEST(BodyStreamTest, GlobalFeatureInvariantUnderPermutationAndDuplication) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kGlobal);
    Rng rng(14);
    Tensor body = random_points(rng, 30);
    ParamStore store;
    auto run = [&](const Tensor& pts, bool create) {
        Tape t;
        ParamAccess P(t, store, false, create, cfg.init_seed);
        return body_stream(t, P, t.constant(pts), cfg).global.val();
    };
    Tensor base = run(body, true);
    for (const auto& n : store.names())
        for (double& v : store.value(n).v) v += rng.uniform(-0.2, 0.2);
    base = run(body, false);

    std::vector<int> perm(30);
    for (int i = 0; i < 30; ++i) perm[i] = i;
    Rng(99).shuffle(perm);
    Tensor shuffled(30, 3);
    for (int i = 0; i < 30; ++i)
        for (int c = 0; c < 3; ++c) shuffled.at(i, c) = body.at(perm[i], c);
    EXPECT_EQ(run(shuffled, false).v, base.v);  // bit-equal

    Tensor doubled(60, 3);
    for (int i = 0; i < 60; ++i)
        for (int c = 0; c < 3; ++c) doubled.at(i, c) = body.at(i % 30, c);
    EXPECT_EQ(run(doubled, false).v, base.v);
}

TEST(BodyStreamTest, DifferentBodiesGiveDifferentGlobals) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kGlobal);
    Rng rng(15);
    Model m = init_model(cfg);
    auto run = [&](const Tensor& pts) {
        Tape t;
        ParamAccess P(t, m.params, false, false, cfg.init_seed);
        return body_stream(t, P, t.constant(pts), cfg).global.val();
    };
    Tensor a = run(random_points(rng, 25));
    Tensor b = run(random_points(rng, 25));
    double d = 0;
    for (size_t i = 0; i < a.v.size(); ++i) d += std::fabs(a.v[i] - b.v[i]);
    EXPECT_GT(d, 0.0);
}

TEST(MeshConvTest, ZeroWeightsGiveBiasEverywhere) {
    ParamStore store;
    std::vector<std::vector<int>> ring = {{1}, {0, 2}, {1}};
    Rng rng(16);
    Tensor feats = random_points(rng, 3);
    Tensor pos = random_points(rng, 3);
    {
        Tape t;
        ParamAccess P(t, store, false, true, 7);
        mesh_conv(t, P, "c", t.constant(feats), t.constant(pos), ring, 4, 1);
    }
    for (double& v : store.value("c.w0").v) v = 0.0;
    Tensor bias(1, 4);
    bias.v = {1.5, -2.0, 0.25, 3.0};
    store.value("c.b") = bias;
    Tape t;
    ParamAccess P(t, store, false, false, 7);
    Tensor out = mesh_conv(t, P, "c", t.constant(feats), t.constant(pos), ring, 4, 1).val();
    for (int i = 0; i < 3; ++i)
        for (int c = 0; c < 4; ++c) ASSERT_EQ(out.at(i, c), bias.v[c]);
}

TEST(MeshConvTest, IsolatedVertexIsLinearMapOfSelf) {
    ParamStore store;
    std::vector<std::vector<int>> ring = {{}};
    Rng rng(17);
    Tensor feats = random_points(rng, 1);
    Tensor pos = random_points(rng, 1);
    Tensor out;
    {
        Tape t;
        ParamAccess P(t, store, false, true, 8);
        out = mesh_conv(t, P, "c", t.constant(feats), t.constant(pos), ring, 5, 1).val();
    }
    // single head, self loop only: y = W·[feat,pos] + b
    const Tensor& W = store.value("c.w0");
    const Tensor& b = store.value("c.b");
    double x[6] = {feats.v[0], feats.v[1], feats.v[2], pos.v[0], pos.v[1], pos.v[2]};
    for (int o = 0; o < 5; ++o) {
        double acc = b.v[o];
        for (int k = 0; k < 6; ++k) acc += W.at(o, k) * x[k];
        ASSERT_NEAR(out.v[o], acc, 1e-12);
    }
}

TEST(MeshConvTest, GradientsMatchFiniteDifferences) {
    TriMesh m = testutil::grid_mesh(3, 3, 0.5);  // 9 vertices, 8 faces
    auto adj = build_adjacency(m);
    Rng rng(18);
    Tensor feats = random_points(rng, 9);
    Tensor pos = points_to_tensor(m.vertices);
    ParamStore store;
    {
        Tape t;
        ParamAccess P(t, store, false, true, 9);
        mesh_conv(t, P, "c", t.constant(feats), t.constant(pos), adj.one_ring, 4, 2);
    }
    for (const auto& n : store.names())
        for (double& v : store.value(n).v) v += rng.uniform(-0.3, 0.3);
    Tensor w = random_points(rng, 9, -1, 1);
    Tensor w4(9, 4);
    for (double& x : w4.v) x = rng.uniform(-1, 1);
    check_param_grads(store, 9, [&](Tape& t, ParamAccess& P) {
        Value y = mesh_conv(t, P, "c", t.constant(feats), t.constant(pos), adj.one_ring, 4, 2);
        return t.sum_all(t.mul(y, t.constant(w4)));
    });
}

TEST(LocalPoolingTest, ConstantFeaturesPoolToConstant) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kLocal);
    Rng rng(19);
    auto garment = random_cloud(rng, 12);
    auto body = random_cloud(rng, 60);
    Tape t;
    Value feats = t.constant(Tensor::full(60, 5, 2.75));
    auto seeds = pooling_seed_indices(60, cfg);
    EXPECT_EQ(seeds.size(), 6u);  // ceil(60/10)
    Tensor out = local_body_pooling(t, garment, body, feats, cfg, seeds).val();
    for (double v : out.v) ASSERT_EQ(v, 2.75);
}

TEST(LocalPoolingTest, MatchesBruteForceReference) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kLocal);
    Rng rng(20);
    const int nb = 200, ng = 50, d = 7;
    auto garment = random_cloud(rng, ng);
    auto body = random_cloud(rng, nb);
    Tensor feats(nb, d);
    for (double& x : feats.v) x = rng.uniform(-3, 3);

    auto seeds = pooling_seed_indices(nb, cfg);
    ASSERT_EQ(seeds.size(), 20u);

    // brute-force reference: sort-by-(distance,index) neighborhoods
    auto knn_brute = [](const std::vector<Vec3>& pts, const Vec3& q, int k) {
        std::vector<std::pair<double, int>> all;
        for (int i = 0; i < static_cast<int>(pts.size()); ++i)
            all.push_back({dist2(pts[i], q), i});
        std::sort(all.begin(), all.end());
        all.resize(k);
        return all;
    };
    int avg_k = std::min(cfg.downscale_pool_neighbors, nb);
    std::vector<Vec3> seed_pos(seeds.size());
    std::vector<std::vector<double>> seed_feat(seeds.size(), std::vector<double>(d, 0.0));
    for (size_t s = 0; s < seeds.size(); ++s) {
        auto nbr = knn_brute(body, body[seeds[s]], avg_k);
        for (auto [d2_, j] : nbr) {
            seed_pos[s] += body[j] / avg_k;
            for (int c = 0; c < d; ++c) seed_feat[s][c] += feats.at(j, c) / avg_k;
        }
    }
    int max_k = std::min(cfg.knn_k, static_cast<int>(seeds.size()));
    Tape t;
    Tensor got = local_body_pooling(t, garment, body, t.constant(feats), cfg, seeds).val();
    for (int v = 0; v < ng; ++v) {
        auto nbr = knn_brute(seed_pos, garment[v], max_k);
        for (int c = 0; c < d; ++c) {
            double best = -1e300;
            for (auto [d2_, s] : nbr) best = std::max(best, seed_feat[s][c]);
            ASSERT_NEAR(got.at(v, c), best, 1e-12) << "vertex " << v << " channel " << c;
        }
    }
}

TEST(LocalPoolingTest, ClampsNeighborhoodsOnTinyBodies) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kLocal);
    Rng rng(21);
    auto garment = random_cloud(rng, 4);
    auto body = random_cloud(rng, 5);  // fewer than 16 and 15
    Tape t;
    Tensor feats(5, 3);
    for (double& x : feats.v) x = rng.uniform(0, 1);
    auto seeds = pooling_seed_indices(5, cfg);
    EXPECT_EQ(seeds.size(), 1u);
    Tensor out = local_body_pooling(t, garment, body, t.constant(feats), cfg, seeds).val();
    EXPECT_EQ(out.rows, 4);
    EXPECT_EQ(out.cols, 3);
}

TEST(FusionTest, FreshFinalLayerPredictsZeroTranslations) {
    for (Variant v : {Variant::kLate, Variant::kGlobal, Variant::kLocal}) {
        ModelConfig cfg = ModelConfig::tiny(v);
        Model m = init_model(cfg);
        TriMesh g = testutil::grid_mesh(3, 3, 0.2);
        Rng rng(22);
        auto body = random_cloud(rng, 25);
        auto adj = build_adjacency(g);
        auto out = predict_from_skinned(m, g.vertices, adj, body);
        for (int i = 0; i < g.vertex_count(); ++i)
            ASSERT_EQ(dist(out[i], g.vertices[i]), 0.0) << to_string(v);
    }
}

TEST(FusionTest, ConditionVectorLengthEnforced) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kLate);
    cfg.condition_dim = 2;
    Model m = init_model(cfg);
    TriMesh g = testutil::grid_mesh(2, 2);
    Rng rng(23);
    auto body = random_cloud(rng, 10);
    auto adj = build_adjacency(g);
    EXPECT_NO_THROW(predict_from_skinned(m, g.vertices, adj, body, {0.5, -1.0}));
    EXPECT_THROW(predict_from_skinned(m, g.vertices, adj, body, {0.5}), Error);
    EXPECT_THROW(predict_from_skinned(m, g.vertices, adj, body, {}), Error);
}

TEST(VariantTest, LateUsesNoConvParameters) {
    Model late = init_model(ModelConfig::tiny(Variant::kLate));
    for (const auto& n : late.params.names())
        EXPECT_EQ(n.find(".conv"), std::string::npos) << n;
    Model global = init_model(ModelConfig::tiny(Variant::kGlobal));
    bool has_conv = false;
    for (const auto& n : global.params.names()) has_conv |= n.find(".conv") != std::string::npos;
    EXPECT_TRUE(has_conv);
}

TEST(VariantTest, AllVariantsProduceNx3) {
    Rng rng(24);
    TriMesh g = testutil::grid_mesh(4, 3, 0.15);
    auto adj = build_adjacency(g);
    auto body = random_cloud(rng, 35);
    for (Variant v : {Variant::kLate, Variant::kGlobal, Variant::kLocal}) {
        ModelConfig cfg = ModelConfig::tiny(v);
        Model m = init_model(cfg);
        // move params off init so translations are nonzero
        for (const auto& n : m.params.names())
            for (double& x : m.params.value(n).v) x += rng.uniform(-0.05, 0.05);
        auto out = predict_from_skinned(m, g.vertices, adj, body);
        ASSERT_EQ(out.size(), g.vertices.size());
        double moved = 0;
        for (size_t i = 0; i < out.size(); ++i) moved += dist(out[i], g.vertices[i]);
        EXPECT_GT(moved, 0.0) << to_string(v);
    }
}

TEST(VariantTest, GlobalPredictionBitIdenticalUnderBodyPermutation) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kGlobal);
    Model m = init_model(cfg);
    Rng rng(25);
    for (const auto& n : m.params.names())
        for (double& x : m.params.value(n).v) x += rng.uniform(-0.2, 0.2);
    TriMesh g = testutil::grid_mesh(4, 4, 0.1);
    auto adj = build_adjacency(g);
    auto body = random_cloud(rng, 40);
    auto base = predict_from_skinned(m, g.vertices, adj, body);
    for (int trial = 0; trial < 3; ++trial) {
        auto shuffled = body;
        Rng(1000 + trial).shuffle(shuffled);
        auto out = predict_from_skinned(m, g.vertices, adj, shuffled);
        for (size_t i = 0; i < out.size(); ++i) {
            ASSERT_EQ(out[i].x, base[i].x);
            ASSERT_EQ(out[i].y, base[i].y);
            ASSERT_EQ(out[i].z, base[i].z);
        }
    }
}

TEST(VariantTest, TranslationsChangeWhenGarmentMoves) {
    // positions feed the convs, so a rigid shift must change features
    ModelConfig cfg = ModelConfig::tiny(Variant::kGlobal);
    Model m = init_model(cfg);
    Rng rng(26);
    for (const auto& n : m.params.names())
        for (double& x : m.params.value(n).v) x += rng.uniform(-0.2, 0.2);
    TriMesh g = testutil::grid_mesh(3, 3, 0.2);
    auto adj = build_adjacency(g);
    auto body = random_cloud(rng, 20);
    auto base = predict_from_skinned(m, g.vertices, adj, body);
    auto shifted_verts = g.vertices;
    for (auto& v : shifted_verts) v += Vec3{0.5, 0, 0};
    auto shifted = predict_from_skinned(m, shifted_verts, adj, body);
    double delta = 0;
    for (size_t i = 0; i < base.size(); ++i)
        delta += dist(shifted[i] - Vec3{0.5, 0, 0}, base[i]);
    EXPECT_GT(delta, 1e-9);
}

TEST(ModelIoTest, CheckpointRoundTripPredictsIdentically) {
    ModelConfig cfg = ModelConfig::tiny(Variant::kLocal);
    Model m = init_model(cfg);
    Rng rng(27);
    for (const auto& n : m.params.names())
        for (double& x : m.params.value(n).v) x += rng.uniform(-0.2, 0.2);
    TriMesh g = testutil::grid_mesh(3, 3, 0.2);
    auto adj = build_adjacency(g);
    auto body = random_cloud(rng, 30);
    auto base = predict_from_skinned(m, g.vertices, adj, body);

    std::string path = testutil::temp_path("model-ckpt");
    m.params.save(path);
    Model back;
    back.config = cfg;
    back.params = nn::ParamStore::load(path);
    auto out = predict_from_skinned(back, g.vertices, adj, body);
    for (size_t i = 0; i < out.size(); ++i) ASSERT_EQ(dist(out[i], base[i]), 0.0);
    std::filesystem::remove(path);
}

TEST(ModelGradTest, FullForwardGradientsMatchFiniteDifferences) {
    // smallest meaningful end-to-end graph: all three variants
    Rng rng(28);
    TriMesh g = testutil::grid_mesh(2, 3, 0.3);  // 6 vertices
    auto adj = build_adjacency(g);
    auto body = random_cloud(rng, 12);
    for (Variant v : {Variant::kLate, Variant::kGlobal, Variant::kLocal}) {
        ModelConfig cfg = ModelConfig::tiny(v);
        cfg.body_mlp1 = {4};
        cfg.body_mlp2 = {5};
        cfg.global_body_dim = 5;
        cfg.stn_feat = {4};
        cfg.stn_head = {4};
        cfg.garment_pointwise = {5};
        cfg.garment_channels = 5;
        cfg.residual_blocks = 1;
        cfg.fusion = {6};
        Model m = init_model(cfg);
        for (const auto& n : m.params.names())
            for (double& x : m.params.value(n).v) x += rng.uniform(-0.2, 0.2);
        Tensor w(6, 3);
        for (double& x : w.v) x = rng.uniform(-1, 1);
        check_param_grads(m.params, cfg.init_seed, [&](Tape& t, ParamAccess& P) {
            ForwardResult fwd = forward_on_tape(t, P, g.vertices, adj, body, {}, cfg);
            return t.sum_all(t.mul(fwd.translations, t.constant(w)));
        });
    }
}
