#pragma once

#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "drape/convert.hpp"
#include "drape/grad_check.hpp"
#include "drape/loss.hpp"
#include "drape/mesh.hpp"
#include "drape/model.hpp"
#include "drape/rng.hpp"

namespace drape {

/// One row of the gradient suite: the registered op, the worst relative error
/// over every instance, and whether it stayed under the tolerance.
struct GradCaseResult {
    std::string name;
    double max_rel_err = 0.0;
    bool pass = false;
    std::string worst;
};

namespace gradsuite {

using nn::GradCheckReport;
using nn::Tape;
using nn::Tensor;
using nn::Value;

inline Tensor rand_tensor(Rng& rng, int r, int c, double lo = -1.0, double hi = 1.0) {
    Tensor t(r, c);
    for (double& x : t.v) x = rng.uniform(lo, hi);
    return t;
}

/// Values in ±[margin, 1]; keeps kinked ops (abs, relu, max pools) away from
/// their non-differentiable points under the finite-difference step.
inline Tensor rand_off_zero(Rng& rng, int r, int c, double margin = 0.05) {
    Tensor t(r, c);
    for (double& x : t.v) x = (rng.uniform() < 0.5 ? -1.0 : 1.0) * rng.uniform(margin, 1.0);
    return t;
}

/// Reduces any output to a scalar with fixed random weights, so every output
/// element carries gradient.
inline Value weigh(Tape& t, Value out, const Tensor& w) {
    return t.sum_all(t.mul(out, t.constant(w)));
}

/// Flat w×h grid mesh in the xy plane (two triangles per quad), used as
/// throwaway geometry for the mesh-dependent cases.
inline TriMesh flat_grid(int w, int h, double spacing) {
    TriMesh m;
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i) m.vertices.push_back({i * spacing, j * spacing, 0.0});
    auto id = [w](int i, int j) { return j * w + i; };
    for (int j = 0; j + 1 < h; ++j)
        for (int i = 0; i + 1 < w; ++i) {
            m.faces.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
            m.faces.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return m;
}

struct GradCase {
    std::string name;
    std::function<GradCheckReport(Rng&)> instance;
};

/// Gradient check over a parameterized sub-network: every parameter the
/// builder created becomes a finite-difference input, plus one data tensor.
inline GradCheckReport check_with_params(
    nn::ParamStore& store, uint64_t seed, Tensor data,
    const std::function<Value(Tape&, detail::ParamAccess&, Value)>& build) {
    auto names = store.names();
    std::vector<Tensor> inputs;
    for (const auto& n : names) inputs.push_back(store.value(n));
    inputs.push_back(std::move(data));
    return nn::grad_check(
        [&](Tape& t, const std::vector<Value>& in) {
            detail::ParamAccess P(t, store, false, false, seed);
            for (size_t i = 0; i < names.size(); ++i) P.seed_cache(names[i], in[i]);
            return build(t, P, in.back());
        },
        std::move(inputs));
}

/// Garment slab hovering in front of a flat body sheet: every loss term is
/// active (penetration gate open, some vertices behind the extended plane)
/// and no gate or nearest-vertex pairing sits near a decision boundary.
struct LossScene {
    TriMesh body;
    TriMesh garment;
    Tensor pred;
    Tensor gt;
    std::vector<std::pair<int, int>> two_ring;
};

inline LossScene make_loss_scene(Rng& rng) {
    LossScene s;
    s.body = flat_grid(5, 6, 1.0);
    double offset = 0.2 * avg_edge_length(s.body);
    s.garment = flat_grid(3, 4, 0.3);
    for (auto& v : s.garment.vertices) {
        v.x += 1.13;
        v.y += 1.17;
        v.z = offset - 0.03;
    }
    s.pred = points_to_tensor(s.garment.vertices);
    for (double& x : s.pred.v) x += rng.uniform(-0.004, 0.004);
    // gt = pred dilated about the slab centroid: pair distances differ from
    // pred's by ~6% (absolute-value terms stay off their kink under the
    // finite-difference step) while vertices move < 0.04, inside the 0.05
    // penetration gate.
    Tensor centroid(1, 3);
    for (int i = 0; i < s.pred.rows; ++i)
        for (int c = 0; c < 3; ++c) centroid.at(0, c) += s.pred.at(i, c) / s.pred.rows;
    s.gt = s.pred;
    for (int i = 0; i < s.gt.rows; ++i)
        for (int c = 0; c < 3; ++c)
            s.gt.at(i, c) = centroid.at(0, c) + 1.06 * (s.pred.at(i, c) - centroid.at(0, c)) +
                            rng.uniform(-0.002, 0.002);
    s.two_ring = two_ring_pairs(s.garment);
    return s;
}

inline std::vector<GradCase> cases() {
    std::vector<GradCase> out;
    auto add = [&](std::string name, std::function<GradCheckReport(Rng&)> fn) {
        out.push_back({std::move(name), std::move(fn)});
    };

    auto dims = [](Rng& rng) { return std::pair<int, int>{2 + rng.index(3), 2 + rng.index(3)}; };

    add("add", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.add(in[0], in[1]), w);
            },
            {rand_tensor(rng, r, c), rand_tensor(rng, r, c)});
    });
    add("sub", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.sub(in[0], in[1]), w);
            },
            {rand_tensor(rng, r, c), rand_tensor(rng, r, c)});
    });
    add("mul", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.mul(in[0], in[1]), w);
            },
            {rand_tensor(rng, r, c), rand_tensor(rng, r, c)});
    });
    add("scale", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        double k = rng.uniform(-2.0, 2.0);
        return nn::grad_check(
            [w, k](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.scale(in[0], k), w);
            },
            {rand_tensor(rng, r, c)});
    });
    add("abs", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.abs_val(in[0]), w);
            },
            {rand_off_zero(rng, r, c)});
    });
    add("leaky_relu", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.leaky_relu(in[0], 0.1), w);
            },
            {rand_off_zero(rng, r, c)});
    });
    add("relu", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.relu(in[0]), w);
            },
            {rand_off_zero(rng, r, c)});
    });
    add("matmul", [dims](Rng& rng) {
        auto [m, k] = dims(rng);
        int n = 2 + rng.index(3);
        Tensor w = rand_tensor(rng, m, n);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.matmul(in[0], in[1]), w);
            },
            {rand_tensor(rng, m, k), rand_tensor(rng, k, n)});
    });
    add("linear", [dims](Rng& rng) {
        auto [n, d] = dims(rng);
        int o = 2 + rng.index(3);
        Tensor w = rand_tensor(rng, n, o);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.linear(in[0], in[1], in[2]), w);
            },
            {rand_tensor(rng, n, d), rand_tensor(rng, o, d), rand_tensor(rng, 1, o)});
    });
    add("concat_cols", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        int c2 = 1 + rng.index(3);
        Tensor w = rand_tensor(rng, r, c + c2 + 1);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.concat_cols({in[0], in[1], in[2]}), w);
            },
            {rand_tensor(rng, r, c), rand_tensor(rng, r, c2), rand_tensor(rng, r, 1)});
    });
    add("slice_cols", [](Rng& rng) {
        int r = 2 + rng.index(3);
        Tensor w = rand_tensor(rng, r, 2);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.slice_cols(in[0], 1, 3), w);
            },
            {rand_tensor(rng, r, 4)});
    });
    add("reshape", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, c, r);
        return nn::grad_check(
            [w, r = r, c = c](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.reshape(in[0], c, r), w);
            },
            {rand_tensor(rng, r, c)});
    });
    add("gather_rows", [](Rng& rng) {
        int c = 2 + rng.index(3);
        std::vector<int> idx = {0, 2, 1, 2, 0, 3};
        Tensor w = rand_tensor(rng, static_cast<int>(idx.size()), c);
        return nn::grad_check(
            [w, idx](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.gather_rows(in[0], idx), w);
            },
            {rand_tensor(rng, 4, c)});
    });
    add("segment_sum_rows", [](Rng& rng) {
        int c = 2 + rng.index(3);
        std::vector<int> idx = {0, 0, 1, 2, 2, 2};
        Tensor w = rand_tensor(rng, 3, c);
        return nn::grad_check(
            [w, idx](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.segment_sum_rows(in[0], idx, 3), w);
            },
            {rand_tensor(rng, 6, c)});
    });
    add("segment_max_rows", [](Rng& rng) {
        int c = 2 + rng.index(3);
        std::vector<int> idx = {0, 0, 1, 2, 2, 2};
        Tensor w = rand_tensor(rng, 3, c);
        return nn::grad_check(
            [w, idx](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.segment_max_rows(in[0], idx, 3), w);
            },
            {rand_tensor(rng, 6, c)});
    });
    add("scale_rows", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.scale_rows(in[0], in[1]), w);
            },
            {rand_tensor(rng, r, c), rand_tensor(rng, r, 1)});
    });
    add("repeat_row", [](Rng& rng) {
        int c = 2 + rng.index(3);
        int n = 3 + rng.index(3);
        Tensor w = rand_tensor(rng, n, c);
        return nn::grad_check(
            [w, n](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.repeat_row(in[0], n), w);
            },
            {rand_tensor(rng, 1, c)});
    });
    add("row_max_pool", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, 1, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.row_max_pool(in[0]), w);
            },
            {rand_tensor(rng, r, c)});
    });
    add("row_avg_pool", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, 1, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.row_avg_pool(in[0]), w);
            },
            {rand_tensor(rng, r, c)});
    });
    add("softmax_rows", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        Tensor w = rand_tensor(rng, r, c);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.softmax_rows(in[0]), w);
            },
            {rand_tensor(rng, r, c, -2.0, 2.0)});
    });
    add("sum_all", [dims](Rng& rng) {
        auto [r, c] = dims(rng);
        return nn::grad_check(
            [](Tape& t, const std::vector<Value>& in) { return t.sum_all(in[0]); },
            {rand_tensor(rng, r, c)});
    });
    add("rowwise_dot", [](Rng& rng) {
        int r = 2 + rng.index(3);
        int c = 2 + rng.index(3);
        Tensor w = rand_tensor(rng, r, 1);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.rowwise_dot(in[0], in[1]), w);
            },
            {rand_tensor(rng, r, c), rand_tensor(rng, r, c)});
    });
    add("cross_rows", [](Rng& rng) {
        int r = 2 + rng.index(3);
        Tensor w = rand_tensor(rng, r, 3);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.cross_rows(in[0], in[1]), w);
            },
            {rand_tensor(rng, r, 3), rand_tensor(rng, r, 3)});
    });
    add("rowwise_norm", [](Rng& rng) {
        int r = 2 + rng.index(3);
        int c = 2 + rng.index(3);
        Tensor w = rand_tensor(rng, r, 1);
        Tensor x = rand_off_zero(rng, r, c, 0.2);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.rowwise_norm(in[0]), w);
            },
            {std::move(x)});
    });
    add("normalize_rows", [](Rng& rng) {
        int r = 2 + rng.index(3);
        int c = 2 + rng.index(3);
        Tensor w = rand_tensor(rng, r, c);
        Tensor x = rand_off_zero(rng, r, c, 0.2);
        return nn::grad_check(
            [w](Tape& t, const std::vector<Value>& in) {
                return weigh(t, t.normalize_rows(in[0], 1e-12), w);
            },
            {std::move(x)});
    });

    add("stn", [](Rng& rng) {
        ModelConfig cfg = ModelConfig::tiny(Variant::kGlobal);
        Tensor x = rand_tensor(rng, 5, 3);
        nn::ParamStore store;
        {
            Tape t;
            detail::ParamAccess P(t, store, false, true, cfg.init_seed);
            stn(t, P, "t", t.leaf(x), cfg);
        }
        for (const auto& n : store.names())  // move off the zero-init point
            for (double& v : store.value(n).v) v += rng.uniform(-0.3, 0.3);
        Tensor w = rand_tensor(rng, 5, 3);
        return check_with_params(store, cfg.init_seed, x,
                                 [&cfg, w](Tape& t, detail::ParamAccess& P, Value data) {
                                     return weigh(t, stn(t, P, "t", data, cfg), w);
                                 });
    });
    add("feastnet_conv", [](Rng& rng) {
        TriMesh mesh = flat_grid(3, 3, 0.4);
        AdjacencyTables adj = build_adjacency(mesh);
        Tensor pos = points_to_tensor(mesh.vertices);
        Tensor feats = rand_tensor(rng, mesh.vertex_count(), 4);
        const int out_dim = 3, heads = 2;
        nn::ParamStore store;
        {
            Tape t;
            detail::ParamAccess P(t, store, false, true, 7);
            mesh_conv(t, P, "c", t.leaf(feats), t.constant(pos), adj.one_ring, out_dim, heads);
        }
        for (const auto& n : store.names())
            for (double& v : store.value(n).v) v += rng.uniform(-0.3, 0.3);
        Tensor w = rand_tensor(rng, mesh.vertex_count(), out_dim);
        return check_with_params(
            store, 7, feats,
            [&adj, &pos, w](Tape& t, detail::ParamAccess& P, Value data) {
                return weigh(t, mesh_conv(t, P, "c", data, t.constant(pos), adj.one_ring, 3, 2),
                             w);
            });
    });

    add("vertex_loss", [](Rng& rng) {
        LossScene s = make_loss_scene(rng);
        return nn::grad_check(
            [&s](Tape& t, const std::vector<Value>& in) { return vertex_loss(t, in[0], s.gt); },
            {s.pred});
    });
    add("penetration_loss", [](Rng& rng) {
        LossScene s = make_loss_scene(rng);
        LossWeights w;
        return nn::grad_check(
            [&s, w](Tape& t, const std::vector<Value>& in) {
                return penetration_loss(t, in[0], s.body, s.gt, w);
            },
            {s.pred});
    });
    add("normal_loss", [](Rng& rng) {
        LossScene s = make_loss_scene(rng);
        return nn::grad_check(
            [&s](Tape& t, const std::vector<Value>& in) {
                return normal_loss(t, in[0], s.garment.faces, s.gt);
            },
            {s.pred});
    });
    add("bending_loss", [](Rng& rng) {
        LossScene s = make_loss_scene(rng);
        return nn::grad_check(
            [&s](Tape& t, const std::vector<Value>& in) {
                return bending_loss(t, in[0], s.gt, s.two_ring);
            },
            {s.pred});
    });
    add("total_loss", [](Rng& rng) {
        LossScene s = make_loss_scene(rng);
        LossWeights w;
        return nn::grad_check(
            [&s, w](Tape& t, const std::vector<Value>& in) {
                return total_loss(t, in[0], s.gt, s.garment.faces, s.two_ring, s.body, w);
            },
            {s.pred});
    });
    return out;
}

} // namespace gradsuite

/// Runs every registered gradient case `instances` times with derived seeds
/// and reports the worst relative error per case against `tol`.
inline std::vector<GradCaseResult> run_grad_suite(int instances, uint64_t seed,
                                                  double tol = 1e-4) {
    check(instances >= 1, "grad suite: instances must be >= 1");
    std::vector<GradCaseResult> results;
    auto cases = gradsuite::cases();
    for (size_t k = 0; k < cases.size(); ++k) {
        GradCaseResult row;
        row.name = cases[k].name;
        for (int i = 0; i < instances; ++i) {
            Rng rng(derive_seed(seed, k * 1000 + static_cast<uint64_t>(i)));
            nn::GradCheckReport rep = cases[k].instance(rng);
            if (rep.max_rel_err > row.max_rel_err) {
                row.max_rel_err = rep.max_rel_err;
                row.worst = rep.worst;
            }
        }
        row.pass = row.max_rel_err < tol;
        results.push_back(std::move(row));
    }
    return results;
}

} // namespace drape
