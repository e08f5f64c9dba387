#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "drape/convert.hpp"
#include "drape/mesh.hpp"
#include "drape/optim.hpp"
#include "drape/rng.hpp"
#include "drape/skinning.hpp"
#include "drape/spatial.hpp"
#include "drape/tensor.hpp"

namespace drape {

enum class Variant { kLate, kGlobal, kLocal };

inline std::string to_string(Variant v) {
    switch (v) {
        case Variant::kLate: return "late";
        case Variant::kGlobal: return "global";
        case Variant::kLocal: return "local";
    }
    fail("bad variant value");
}

inline Variant variant_from_string(const std::string& s) {
    if (s == "late") return Variant::kLate;
    if (s == "global") return Variant::kGlobal;
    if (s == "local") return Variant::kLocal;
    fail("unknown variant '" + s + "' (expected late, global, or local)");
}

struct ModelConfig {
    Variant variant = Variant::kLocal;

    // body stream: pointwise chain body_mlp1 -> body_mlp2, pooled and
    // projected to a global descriptor
    std::vector<int> body_mlp1 = {64};
    std::vector<int> body_mlp2 = {128, 512};
    int global_body_dim = 512;

    // spatial-transformer internals (shared by both streams)
    std::vector<int> stn_feat = {32, 64};
    std::vector<int> stn_head = {32};

    // garment stream
    std::vector<int> garment_pointwise = {64};
    int garment_channels = 64;
    int residual_blocks = 6;
    int conv_heads = 8;
    int garment_global_dim = 128;

    // local body-feature pooling
    int body_downscale = 10;
    int downscale_pool_neighbors = 16;
    int knn_k = 15;
    uint64_t pool_seed = 17;
    std::vector<int> local_mlp = {64};  // pair embedding before the max-pool

    // fusion network: hidden widths, then a linear layer to 3
    std::vector<int> fusion = {512, 256, 128};

    int condition_dim = 0;
    double leaky_slope = 0.1;
    uint64_t init_seed = 1;

    void validate() const {
        auto all_positive = [](const std::vector<int>& ws, const char* what) {
            check(!ws.empty(), std::string(what) + ": needs at least one width");
            for (int w : ws) check(w > 0, std::string(what) + ": widths must be positive");
        };
        all_positive(body_mlp1, "body_mlp1");
        all_positive(body_mlp2, "body_mlp2");
        all_positive(stn_feat, "stn_feat");
        all_positive(stn_head, "stn_head");
        all_positive(garment_pointwise, "garment_pointwise");
        all_positive(fusion, "fusion");
        check(global_body_dim > 0 && garment_channels > 0 && garment_global_dim > 0,
              "feature dims must be positive");
        check(residual_blocks >= 1, "need at least one residual block");
        check(conv_heads >= 1, "need at least one conv head");
        check(body_downscale >= 1, "body_downscale must be >= 1");
        check(downscale_pool_neighbors >= 1 && knn_k >= 1, "pool sizes must be >= 1");
        all_positive(local_mlp, "local_mlp");
        check(condition_dim >= 0, "condition_dim must be >= 0");
    }

    /// Narrow configuration for fast tests; same topology, tiny widths.
    static ModelConfig tiny(Variant v) {
        ModelConfig c;
        c.variant = v;
        c.body_mlp1 = {8};
        c.body_mlp2 = {12};
        c.global_body_dim = 12;
        c.stn_feat = {6};
        c.stn_head = {6};
        c.garment_pointwise = {10};
        c.garment_channels = 10;
        c.residual_blocks = 2;
        c.conv_heads = 2;
        c.garment_global_dim = 8;
        c.local_mlp = {8};
        c.fusion = {16, 12};
        return c;
    }
};

struct Model {
    ModelConfig config;
    nn::ParamStore params;
};

namespace detail {

inline uint64_t fnv1a64(const std::string& s) {
    uint64_t h = 0xcbf29ce484222325ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 0x100000001b3ull;
    }
    return h;
}

enum class Init { kGlorot, kZero };

/// Hands parameters to the forward pass, creating and initializing missing
/// ones when allowed. Initialization depends only on (name, seed), never on
/// creation order.
class ParamAccess {
public:
    ParamAccess(nn::Tape& tape, nn::ParamStore& store, bool needs_grad, bool create_missing,
                uint64_t seed)
        : tape_(tape), store_(store), needs_grad_(needs_grad),
          create_missing_(create_missing), seed_(seed) {}

    nn::Value operator()(const std::string& name, int rows, int cols, Init init) {
        auto it = cache_.find(name);
        if (it != cache_.end()) return it->second;
        if (!store_.contains(name)) {
            check(create_missing_, "model parameter '" + name + "' missing from checkpoint");
            store_.add(name, make_tensor(name, rows, cols, init));
        }
        const nn::Tensor& t = store_.value(name);
        check(t.rows == rows && t.cols == cols,
              "parameter '" + name + "' has shape " + t.shape_str() + ", architecture wants " +
                  std::to_string(rows) + "x" + std::to_string(cols));
        nn::Value v = tape_.leaf(t, needs_grad_);
        cache_.emplace(name, v);
        return v;
    }

    const std::map<std::string, nn::Value>& lifted() const { return cache_; }

    /// Pre-binds a name to an existing tape value (used by gradient checks to
    /// route externally-owned leaves through the forward pass).
    void seed_cache(const std::string& name, nn::Value v) { cache_[name] = v; }

private:
    nn::Tensor make_tensor(const std::string& name, int rows, int cols, Init init) const {
        nn::Tensor t(rows, cols);
        if (init == Init::kGlorot) {
            Rng rng(fnv1a64(name) ^ seed_);
            double s = std::sqrt(6.0 / (rows + cols));
            for (double& x : t.v) x = rng.uniform(-s, s);
        }
        return t;
    }

    nn::Tape& tape_;
    nn::ParamStore& store_;
    bool needs_grad_;
    bool create_missing_;
    uint64_t seed_;
    std::map<std::string, nn::Value> cache_;
};

/// Chain of shared (per-row) linear layers, each followed by leaky ReLU.
inline nn::Value mlp_block(nn::Tape& t, ParamAccess& P, const std::string& prefix,
                           nn::Value x, const std::vector<int>& widths, double slope) {
    nn::Value h = x;
    for (size_t l = 0; l < widths.size(); ++l) {
        std::string base = prefix + ".l" + std::to_string(l);
        nn::Value W = P(base + ".w", widths[l], h.cols(), Init::kGlorot);
        nn::Value b = P(base + ".b", 1, widths[l], Init::kZero);
        h = t.leaky_relu(t.linear(h, W, b), slope);
    }
    return h;
}

/// Plain linear layer without activation.
inline nn::Value linear_layer(nn::Tape& t, ParamAccess& P, const std::string& base,
                              nn::Value x, int out_dim, Init init) {
    nn::Value W = P(base + ".w", out_dim, x.cols(), init);
    nn::Value b = P(base + ".b", 1, out_dim, Init::kZero);
    return t.linear(x, W, b);
}

} // namespace detail

/// Spatial transformer: learns a d×d matrix (identity plus a zero-initialized
/// residual) from the input rows and applies it, so a fresh network is an
/// exact identity map.
inline nn::Value stn(nn::Tape& t, detail::ParamAccess& P, const std::string& prefix,
                     nn::Value x, const ModelConfig& cfg) {
    using detail::Init;
    int d = x.cols();
    nn::Value feat = detail::mlp_block(t, P, prefix + ".feat", x, cfg.stn_feat, cfg.leaky_slope);
    nn::Value pooled = t.row_max_pool(feat);
    nn::Value head = detail::mlp_block(t, P, prefix + ".head", pooled, cfg.stn_head,
                                       cfg.leaky_slope);
    nn::Value residual = detail::linear_layer(t, P, prefix + ".final", head, d * d, Init::kZero);
    nn::Value matrix = t.add(t.constant(nn::Tensor::identity(d)), t.reshape(residual, d, d));
    return t.matmul(x, matrix);
}

struct BodyFeatures {
    nn::Value pointwise;  // N_B × d_b
    nn::Value global;     // 1 × global_body_dim
};

/// PointNet-style body encoder: STN on the raw points, a shared MLP, a second
/// STN in feature space, and a second MLP whose input carries a skip from the
/// first STN's output; the global descriptor is a projected row-max pool.
inline BodyFeatures body_stream(nn::Tape& t, detail::ParamAccess& P, nn::Value body_points,
                                const ModelConfig& cfg) {
    using detail::Init;
    nn::Value x0 = stn(t, P, "body.stn1", body_points, cfg);
    nn::Value h1 = detail::mlp_block(t, P, "body.mlp1", x0, cfg.body_mlp1, cfg.leaky_slope);
    nn::Value x2 = stn(t, P, "body.stn2", h1, cfg);
    nn::Value h2 = detail::mlp_block(t, P, "body.mlp2", t.concat_cols({x2, x0}), cfg.body_mlp2,
                                     cfg.leaky_slope);
    nn::Value global = detail::linear_layer(t, P, "body.global", t.row_max_pool(h2),
                                            cfg.global_body_dim, Init::kGlorot);
    return {h2, global};
}

/// Attention-weighted graph convolution over one-ring neighborhoods (plus a
/// self loop). Vertex 3D positions are concatenated to the feature rows.
/// Isolated vertices fall back to a self-only neighborhood.
///   y_i = b + (1/max(|Nbr_i|,1)) Σ_{j∈Nbr_i∪{i}} Σ_m q_m(x_i,x_j) · W_m · x_j
///   q(x_i,x_j) = softmax over heads of (U x_i + V x_j + c)
inline nn::Value mesh_conv(nn::Tape& t, detail::ParamAccess& P, const std::string& prefix,
                           nn::Value features, nn::Value positions,
                           const std::vector<std::vector<int>>& one_ring, int out_dim,
                           int heads) {
    using detail::Init;
    int n = features.rows();
    check(static_cast<int>(one_ring.size()) == n, "mesh_conv: one_ring size mismatch");
    check(positions.rows() == n && positions.cols() == 3, "mesh_conv: positions must be N×3");

    std::vector<int> center, neighbor;
    nn::Tensor inv_count(n, 1);
    for (int i = 0; i < n; ++i) {
        center.push_back(i);
        neighbor.push_back(i);  // self loop
        for (int j : one_ring[i]) {
            center.push_back(i);
            neighbor.push_back(j);
        }
        inv_count.v[i] = 1.0 / std::max<double>(one_ring[i].size(), 1.0);
    }

    nn::Value x = t.concat_cols({features, positions});
    int d_in = x.cols();
    nn::Value xi = t.gather_rows(x, center);
    nn::Value xj = t.gather_rows(x, neighbor);

    nn::Value U = P(prefix + ".u", heads, d_in, Init::kGlorot);
    nn::Value V = P(prefix + ".v", heads, d_in, Init::kGlorot);
    nn::Value c = P(prefix + ".c", 1, heads, Init::kZero);
    nn::Value zero_bias = t.constant(nn::Tensor(1, heads));
    nn::Value logits = t.add(t.linear(xi, U, zero_bias), t.linear(xj, V, c));
    nn::Value q = t.softmax_rows(logits);  // E × heads

    nn::Value acc{};
    for (int m = 0; m < heads; ++m) {
        nn::Value Wm = P(prefix + ".w" + std::to_string(m), out_dim, d_in, Init::kGlorot);
        nn::Value zb = t.constant(nn::Tensor(1, out_dim));
        nn::Value contrib = t.scale_rows(t.linear(xj, Wm, zb), t.slice_cols(q, m, m + 1));
        acc = m == 0 ? contrib : t.add(acc, contrib);
    }
    nn::Value summed = t.scale_rows(t.segment_sum_rows(acc, center, n), t.constant(inv_count));
    nn::Value bias = P(prefix + ".b", 1, out_dim, Init::kZero);
    return t.add(summed, t.repeat_row(bias, n));
}

struct GarmentFeatures {
    nn::Value pointwise;  // N × last(garment_pointwise)
    nn::Value patchwise;  // N × residual_blocks*garment_channels (invalid for Late)
    nn::Value global;     // 1 × garment_global_dim
};

/// Garment encoder: STN + pointwise MLP (with the global body descriptor
/// appended to every vertex row), then residual mesh-convolution blocks whose
/// outputs are all carried forward into the patchwise features and the global
/// pool. The Late variant stops after the pointwise stage.
inline GarmentFeatures garment_stream(nn::Tape& t, detail::ParamAccess& P, nn::Value positions,
                                      const std::vector<std::vector<int>>& one_ring,
                                      nn::Value body_global, const ModelConfig& cfg) {
    using detail::Init;
    int n = positions.rows();
    nn::Value x0 = stn(t, P, "garment.stn", positions, cfg);
    nn::Value body_rows = t.repeat_row(body_global, n);
    nn::Value pw = detail::mlp_block(t, P, "garment.pw", t.concat_cols({x0, body_rows}),
                                     cfg.garment_pointwise, cfg.leaky_slope);

    GarmentFeatures out;
    out.pointwise = pw;
    nn::Value pooled_input = pw;

    if (cfg.variant != Variant::kLate) {
        nn::Value h = pw;
        std::vector<nn::Value> stages;
        for (int k = 0; k < cfg.residual_blocks; ++k) {
            std::string base = "garment.res" + std::to_string(k);
            nn::Value c1 = mesh_conv(t, P, base + ".conv1", h, positions, one_ring,
                                     cfg.garment_channels, cfg.conv_heads);
            nn::Value c2 = mesh_conv(t, P, base + ".conv2", t.leaky_relu(c1, cfg.leaky_slope),
                                     positions, one_ring, cfg.garment_channels, cfg.conv_heads);
            nn::Value skip = h.cols() == cfg.garment_channels
                                 ? h
                                 : detail::linear_layer(t, P, base + ".proj", h,
                                                        cfg.garment_channels, Init::kGlorot);
            h = t.add(c2, skip);
            stages.push_back(h);
        }
        out.patchwise = stages.size() == 1 ? stages[0] : t.concat_cols(stages);
        pooled_input = t.concat_cols({pw, out.patchwise});
    }
    out.global = detail::linear_layer(t, P, "garment.global", t.row_max_pool(pooled_input),
                                      cfg.garment_global_dim, Init::kGlorot);
    return out;
}

/// Seed indices for the body downsampling: a seeded shuffle of the point
/// indices, strided by the downscale factor. Exposed so callers can hold the
/// assignment fixed while points are permuted.
inline std::vector<int> pooling_seed_indices(int n_body, const ModelConfig& cfg) {
    std::vector<int> order(n_body);
    for (int i = 0; i < n_body; ++i) order[i] = i;
    Rng rng(cfg.pool_seed);
    rng.shuffle(order);
    std::vector<int> seeds;
    for (int i = 0; i < n_body; i += cfg.body_downscale) seeds.push_back(order[i]);
    return seeds;
}

/// Local body features for each garment vertex: the body cloud is downsampled
/// to ⌈N_B/downscale⌉ seeds, each seed's position/feature is the average of
/// its nearest original points, and every garment vertex max-pools over its
/// nearest seeds. Each (vertex, seed) pair is embedded from the seed features
/// together with the seed's offset from the vertex before pooling — the
/// offset is what localizes the signal; seed features alone cannot tell the
/// vertex how far away the body surface is. Neighborhood sizes clamp to what
/// exists.
inline nn::Value local_body_pooling(nn::Tape& t, detail::ParamAccess& P,
                                    const std::vector<Vec3>& garment_vertices,
                                    const std::vector<Vec3>& body_points,
                                    nn::Value body_pointwise, const ModelConfig& cfg,
                                    const std::vector<int>& seed_indices) {
    int n_body = static_cast<int>(body_points.size());
    check(body_pointwise.rows() == n_body, "local_body_pooling: feature rows != body points");
    check(!seed_indices.empty(), "local_body_pooling: no seeds");
    int n_seeds = static_cast<int>(seed_indices.size());
    int avg_k = std::min(cfg.downscale_pool_neighbors, n_body);

    SpatialIndex body_index(body_points);
    nn::Tensor averaging(n_seeds, n_body);  // row-stochastic pooling matrix
    std::vector<Vec3> seed_pos(n_seeds);
    for (int s = 0; s < n_seeds; ++s) {
        auto nbr = body_index.knn(body_points[seed_indices[s]], avg_k);
        Vec3 p{};
        for (int j : nbr) {
            averaging.at(s, j) = 1.0 / avg_k;
            p += body_points[j];
        }
        seed_pos[s] = p / avg_k;
    }
    nn::Value seed_feats = t.matmul(t.constant(std::move(averaging)), body_pointwise);

    int max_k = std::min(cfg.knn_k, n_seeds);
    SpatialIndex seed_index(seed_pos);
    std::vector<int> gather, segment;
    std::vector<Vec3> offsets;
    for (int v = 0; v < static_cast<int>(garment_vertices.size()); ++v) {
        for (int s : seed_index.knn(garment_vertices[v], max_k)) {
            gather.push_back(s);
            segment.push_back(v);
            offsets.push_back(seed_pos[s] - garment_vertices[v]);
        }
    }
    nn::Value pairs = t.concat_cols(
        {t.gather_rows(seed_feats, gather), t.constant(points_to_tensor(offsets))});
    nn::Value embedded =
        detail::mlp_block(t, P, "local.pair", pairs, cfg.local_mlp, cfg.leaky_slope);
    return t.segment_max_rows(embedded, segment,
                              static_cast<int>(garment_vertices.size()));
}

/// Four shared MLP blocks ending in a zero-initialized linear layer, so a
/// fresh model predicts zero translations.
inline nn::Value fusion(nn::Tape& t, detail::ParamAccess& P, nn::Value per_vertex,
                        const std::vector<double>& condition, const ModelConfig& cfg) {
    using detail::Init;
    check(static_cast<int>(condition.size()) == cfg.condition_dim,
          "condition vector has " + std::to_string(condition.size()) + " entries, config wants " +
              std::to_string(cfg.condition_dim));
    nn::Value h = per_vertex;
    if (cfg.condition_dim > 0) {
        nn::Tensor c(1, cfg.condition_dim);
        c.v = condition;
        h = t.concat_cols({h, t.repeat_row(t.constant(std::move(c)), per_vertex.rows())});
    }
    h = detail::mlp_block(t, P, "fusion", h, cfg.fusion, cfg.leaky_slope);
    return detail::linear_layer(t, P, "fusion.final", h, 3, Init::kZero);
}

struct ForwardResult {
    nn::Value translations;  // N × 3
    nn::Value prediction;    // N × 3: skinned + translations
};

/// Full network graph on an existing tape. `skinned` are the dual-quaternion
/// skinned garment vertices (network input and output base), `body` the posed
/// body points.
inline ForwardResult forward_on_tape(nn::Tape& t, detail::ParamAccess& P,
                                     const std::vector<Vec3>& skinned,
                                     const AdjacencyTables& garment_adj,
                                     const std::vector<Vec3>& body,
                                     const std::vector<double>& condition,
                                     const ModelConfig& cfg) {
    cfg.validate();
    check(!skinned.empty(), "no garment vertices");
    check(!body.empty(), "no body points");
    int n = static_cast<int>(skinned.size());
    nn::Value garment_pos = t.constant(points_to_tensor(skinned));
    nn::Value body_pos = t.constant(points_to_tensor(body));

    BodyFeatures bf = body_stream(t, P, body_pos, cfg);
    GarmentFeatures gf = garment_stream(t, P, garment_pos, garment_adj.one_ring, bf.global, cfg);

    std::vector<nn::Value> rows{gf.pointwise};
    if (cfg.variant != Variant::kLate) rows.push_back(gf.patchwise);
    rows.push_back(t.repeat_row(gf.global, n));
    rows.push_back(t.repeat_row(bf.global, n));
    if (cfg.variant == Variant::kLocal)
        rows.push_back(local_body_pooling(t, P, skinned, body, bf.pointwise, cfg,
                                          pooling_seed_indices(static_cast<int>(body.size()),
                                                               cfg)));
    nn::Value translations = fusion(t, P, t.concat_cols(rows), condition, cfg);
    nn::Value prediction = t.add(garment_pos, translations);
    return {translations, prediction};
}

/// Creates and initializes every parameter the configured architecture uses
/// by running one dummy forward pass with the creating accessor. Widths are
/// therefore always consistent with the real forward pass.
inline Model init_model(const ModelConfig& cfg) {
    cfg.validate();
    Model m;
    m.config = cfg;
    nn::Tape tape;
    tape.set_finite_checks(false);
    detail::ParamAccess access(tape, m.params, false, true, cfg.init_seed);
    std::vector<Vec3> garment = {{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}};
    TriMesh g;
    g.vertices = garment;
    g.faces = {{0, 1, 2}};
    AdjacencyTables adj = build_adjacency(g);
    std::vector<Vec3> body = {{0, 0, 0.1}, {0.1, 0, 0.1}, {0, 0.1, 0.1}};
    std::vector<double> condition(cfg.condition_dim, 0.0);
    forward_on_tape(tape, access, garment, adj, body, condition, cfg);
    return m;
}

/// Inference: skin the template with the given pose, run the network, add the
/// predicted translations. Deterministic; does not touch gradients.
inline TriMesh predict(const Model& model, const TriMesh& garment_template,
                       const SkinWeights& weights, const Skeleton& skeleton, const Pose& pose,
                       const std::vector<Vec3>& body_points,
                       const std::vector<double>& condition = {}) {
    garment_template.validate();
    auto xf = pose_transforms(skeleton, pose);
    std::vector<Vec3> skinned = dual_quaternion_skin(garment_template.vertices, weights, xf);
    nn::Tape tape;
    detail::ParamAccess access(tape, const_cast<nn::ParamStore&>(model.params), false, false,
                               model.config.init_seed);
    AdjacencyTables adj = build_adjacency(garment_template);
    ForwardResult fwd = forward_on_tape(tape, access, skinned, adj, body_points, condition,
                                        model.config);
    TriMesh out;
    out.faces = garment_template.faces;
    const nn::Tensor& p = fwd.prediction.val();
    out.vertices.resize(skinned.size());
    for (int i = 0; i < p.rows; ++i) out.vertices[i] = {p.at(i, 0), p.at(i, 1), p.at(i, 2)};
    return out;
}

/// Convenience for callers that already have skinned vertices.
inline std::vector<Vec3> predict_from_skinned(const Model& model,
                                              const std::vector<Vec3>& skinned,
                                              const AdjacencyTables& adj,
                                              const std::vector<Vec3>& body_points,
                                              const std::vector<double>& condition = {}) {
    nn::Tape tape;
    detail::ParamAccess access(tape, const_cast<nn::ParamStore&>(model.params), false, false,
                               model.config.init_seed);
    ForwardResult fwd = forward_on_tape(tape, access, skinned, adj, body_points, condition,
                                        model.config);
    const nn::Tensor& p = fwd.prediction.val();
    std::vector<Vec3> out(skinned.size());
    for (int i = 0; i < p.rows; ++i) out[i] = {p.at(i, 0), p.at(i, 1), p.at(i, 2)};
    return out;
}

} // namespace drape
