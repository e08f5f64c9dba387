#pragma once

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cstdint>
#include <limits>
#include <map>
#include <ostream>
#include <string>
#include <thread>
#include <utility>
#include <vector>

#include "drape/dataset.hpp"
#include "drape/loss.hpp"
#include "drape/metrics.hpp"
#include "drape/model.hpp"

namespace drape {

/// Derived per-sample buffers that stay fixed across epochs.
struct PreparedSample {
    const DrapeSample* sample = nullptr;
    AdjacencyTables adj;
    std::vector<std::pair<int, int>> two_ring;
    nn::Tensor gt;
};

inline std::vector<PreparedSample> prepare_samples(const std::vector<DrapeSample>& samples) {
    std::vector<PreparedSample> out;
    out.reserve(samples.size());
    for (const DrapeSample& s : samples) {
        PreparedSample p;
        p.sample = &s;
        p.adj = build_adjacency(s.rest);
        p.two_ring = two_ring_pairs(s.rest);
        p.gt = points_to_tensor(s.gt.vertices);
        out.push_back(std::move(p));
    }
    return out;
}

namespace detail {

inline void log_line(std::ostream* log, const Json& j) {
    if (log) *log << j.dump() << "\n";
}

inline double median(std::vector<double> xs) {
    check(!xs.empty(), "median of an empty set");
    std::sort(xs.begin(), xs.end());
    size_t n = xs.size();
    return n % 2 == 1 ? xs[n / 2] : 0.5 * (xs[n / 2 - 1] + xs[n / 2]);
}

} // namespace detail

// ---- training ----------------------------------------------------------------

struct TrainConfig {
    int epochs = 30;
    nn::AdamConfig adam;   // lr 0.001
    LossWeights loss;
    int grad_accum = 1;    // samples per optimizer step
    uint64_t seed = 1;

    void validate() const {
        check(epochs >= 1, "train: epochs must be >= 1");
        check(grad_accum >= 1, "train: grad_accum must be >= 1");
        check(adam.lr >= 0, "train: learning rate must be nonnegative");
        loss.validate();
    }
};

struct TrainResult {
    int steps = 0;          // optimizer steps taken
    int epochs_run = 0;
    double best_val_e_dist = std::numeric_limits<double>::infinity();
    int best_epoch = 0;     // 0 is the untrained model
    std::vector<double> val_curve;  // index 0: before training
};

/// Mean e_dist of the model's predictions over a prepared set.
inline double validation_e_dist(const Model& model, const std::vector<PreparedSample>& set) {
    check(!set.empty(), "validation set is empty");
    double sum = 0.0;
    for (const PreparedSample& p : set) {
        std::vector<Vec3> pred = predict_from_skinned(model, p.sample->skinned.vertices, p.adj,
                                                      p.sample->body.vertices,
                                                      p.sample->condition);
        sum += e_dist(pred, p.sample->gt.vertices);
    }
    return sum / static_cast<double>(set.size());
}

/// One-sample-per-step training with Adam. Per step the garment-body
/// correspondences are recomputed (inside the penetration term), the four
/// loss terms are logged, and gradients flow to every parameter. After each
/// epoch the validation e_dist is logged and the parameters are checkpointed
/// to `checkpoint_path` when it improves; the initial model is checkpointed
/// up front so a best checkpoint always exists. A non-finite loss aborts with
/// the last-good checkpoint left on disk. When the validation split is empty
/// the train split doubles as the checkpoint criterion.
inline TrainResult train(Model& model, const std::vector<DrapeSample>& train_set,
                         const std::vector<DrapeSample>& val_set, const TrainConfig& cfg,
                         const std::string& checkpoint_path, std::ostream* log = nullptr) {
    cfg.validate();
    model.config.validate();
    check(!train_set.empty(), "train: empty training split");

    std::vector<PreparedSample> prepared = prepare_samples(train_set);
    std::vector<PreparedSample> val_prepared =
        val_set.empty() ? prepare_samples(train_set) : prepare_samples(val_set);

    TrainResult result;
    result.best_val_e_dist = validation_e_dist(model, val_prepared);
    result.val_curve.push_back(result.best_val_e_dist);
    if (!checkpoint_path.empty()) model.params.save(checkpoint_path);
    detail::log_line(log, Json{{"type", "epoch"},
                               {"epoch", 0},
                               {"val_e_dist", result.best_val_e_dist},
                               {"checkpointed", !checkpoint_path.empty()}});

    std::map<std::string, nn::Tensor> acc;
    int acc_count = 0;
    auto flush = [&]() {
        if (acc_count == 0) return;
        if (acc_count > 1)
            for (auto& [_, g] : acc)
                for (double& x : g.v) x /= acc_count;
        model.params.adam_step(acc, cfg.adam);
        ++result.steps;
        acc.clear();
        acc_count = 0;
    };

    std::vector<int> order(train_set.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = static_cast<int>(i);

    for (int epoch = 1; epoch <= cfg.epochs; ++epoch) {
        Rng(derive_seed(cfg.seed, static_cast<uint64_t>(epoch))).shuffle(order);
        for (int idx : order) {
            const PreparedSample& p = prepared[static_cast<size_t>(idx)];
            nn::Tape tape;
            detail::ParamAccess access(tape, model.params, true, false,
                                       model.config.init_seed);
            ForwardResult fwd = forward_on_tape(tape, access, p.sample->skinned.vertices,
                                                p.adj, p.sample->body.vertices,
                                                p.sample->condition, model.config);
            LossBreakdown bd;
            nn::Value total = total_loss(tape, fwd.prediction, p.gt, p.sample->rest.faces,
                                         p.two_ring, p.sample->body, cfg.loss, &bd);
            detail::log_line(log, Json{{"type", "step"},
                                       {"epoch", epoch},
                                       {"sample", idx},
                                       {"loss", bd.total},
                                       {"vertex", bd.vertex},
                                       {"penetration", bd.penetration},
                                       {"normal", bd.normal},
                                       {"bending", bd.bending}});
            if (!is_finite(bd.total)) {
                detail::log_line(log, Json{{"type", "abort"},
                                           {"epoch", epoch},
                                           {"sample", idx},
                                           {"reason", "non-finite loss"}});
                fail("training diverged: non-finite loss at epoch " + std::to_string(epoch) +
                     (checkpoint_path.empty()
                          ? std::string()
                          : "; last-good checkpoint retained at " + checkpoint_path));
            }
            tape.backward(total);
            for (const auto& [name, leaf] : access.lifted()) {
                nn::Tensor g = tape.grad(leaf);
                auto it = acc.find(name);
                if (it == acc.end()) {
                    acc.emplace(name, std::move(g));
                } else {
                    for (size_t i = 0; i < g.v.size(); ++i) it->second.v[i] += g.v[i];
                }
            }
            if (++acc_count >= cfg.grad_accum) flush();
        }
        flush();  // partial accumulation at epoch end still steps

        double val = validation_e_dist(model, val_prepared);
        result.val_curve.push_back(val);
        bool improved = val < result.best_val_e_dist;
        if (improved) {
            result.best_val_e_dist = val;
            result.best_epoch = epoch;
            if (!checkpoint_path.empty()) model.params.save(checkpoint_path);
        }
        detail::log_line(log, Json{{"type", "epoch"},
                                   {"epoch", epoch},
                                   {"val_e_dist", val},
                                   {"checkpointed", improved && !checkpoint_path.empty()}});
        result.epochs_run = epoch;
    }
    return result;
}

// ---- evaluation --------------------------------------------------------------

struct EvalConfig {
    // thresholds for the pooled precision curves; must ascend
    std::vector<double> dist_thresholds;  // meters
    std::vector<double> norm_thresholds;  // degrees
    int threads = 1;
    std::string split = "test";  // which manifest split the eval command reads

    EvalConfig() {
        for (int i = 0; i <= 40; ++i) dist_thresholds.push_back(i * 0.0025);
        for (int i = 0; i <= 45; ++i) norm_thresholds.push_back(i * 2.0);
    }

    void validate() const {
        check(threads >= 1, "eval: threads must be >= 1");
        check(!dist_thresholds.empty() && !norm_thresholds.empty(),
              "eval: threshold lists must be non-empty");
        split_from_string(split);
    }
};

/// Metrics for one sample, for the model and for the skinning baseline (the
/// skinned garment taken as the prediction).
struct SampleEval {
    int index = 0;
    double model_e_dist = 0, model_e_norm_deg = 0, model_l2_pct = 0;
    double dqs_e_dist = 0, dqs_e_norm_deg = 0, dqs_l2_pct = 0;
};

struct SplitEval {
    std::vector<SampleEval> samples;
    double model_mean_e_dist = 0, model_mean_e_norm_deg = 0;
    double dqs_mean_e_dist = 0, dqs_mean_e_norm_deg = 0;
    std::vector<double> dist_thresholds, norm_thresholds;
    // pooled over every vertex / face of the split
    std::vector<double> model_precision_dist, model_precision_norm;
    std::vector<double> dqs_precision_dist, dqs_precision_norm;
};

/// Evaluates the model and the skinning baseline on a sample set. Samples are
/// processed in parallel; aggregation runs serially in sample order, so the
/// report does not depend on the thread count.
inline SplitEval evaluate(const Model& model, const std::vector<DrapeSample>& samples,
                          const EvalConfig& cfg = {}) {
    cfg.validate();
    check(!samples.empty(), "evaluate: empty sample set");

    struct PerSample {
        SampleEval eval;
        std::vector<double> model_dist, model_norm, dqs_dist, dqs_norm;
    };
    std::vector<PerSample> slots(samples.size());
    std::atomic<size_t> next{0};
    std::vector<std::string> worker_errors(static_cast<size_t>(cfg.threads));

    auto worker = [&](int w) {
        for (size_t i = next.fetch_add(1); i < samples.size(); i = next.fetch_add(1)) {
            try {
                const DrapeSample& s = samples[i];
                AdjacencyTables adj = build_adjacency(s.rest);
                std::vector<Vec3> pred = predict_from_skinned(model, s.skinned.vertices, adj,
                                                              s.body.vertices, s.condition);
                TriMesh pred_mesh;
                pred_mesh.vertices = pred;
                pred_mesh.faces = s.rest.faces;

                PerSample& out = slots[i];
                out.eval.index = static_cast<int>(i);
                out.model_dist = vertex_distances(pred, s.gt.vertices);
                out.model_norm = face_angle_errors_deg(pred_mesh, s.gt);
                out.dqs_dist = vertex_distances(s.skinned.vertices, s.gt.vertices);
                out.dqs_norm = face_angle_errors_deg(s.skinned, s.gt);

                auto mean = [](const std::vector<double>& xs) {
                    double sum = 0.0;
                    for (double x : xs) sum += x;
                    return xs.empty() ? 0.0 : sum / static_cast<double>(xs.size());
                };
                out.eval.model_e_dist = mean(out.model_dist);
                out.eval.model_e_norm_deg = mean(out.model_norm);
                out.eval.model_l2_pct = normalized_l2_percent(pred, s.gt.vertices);
                out.eval.dqs_e_dist = mean(out.dqs_dist);
                out.eval.dqs_e_norm_deg = mean(out.dqs_norm);
                out.eval.dqs_l2_pct = normalized_l2_percent(s.skinned.vertices, s.gt.vertices);
            } catch (const std::exception& e) {
                worker_errors[static_cast<size_t>(w)] =
                    "sample " + std::to_string(i) + ": " + e.what();
                return;
            }
        }
    };
    if (cfg.threads == 1) {
        worker(0);
    } else {
        std::vector<std::thread> pool;
        for (int w = 0; w < cfg.threads; ++w) pool.emplace_back(worker, w);
        for (auto& t : pool) t.join();
    }
    for (const std::string& e : worker_errors)
        if (!e.empty()) fail("evaluate failed: " + e);

    SplitEval report;
    report.dist_thresholds = cfg.dist_thresholds;
    report.norm_thresholds = cfg.norm_thresholds;
    std::vector<double> md, mn, dd, dn;
    for (const PerSample& p : slots) {
        report.samples.push_back(p.eval);
        report.model_mean_e_dist += p.eval.model_e_dist;
        report.model_mean_e_norm_deg += p.eval.model_e_norm_deg;
        report.dqs_mean_e_dist += p.eval.dqs_e_dist;
        report.dqs_mean_e_norm_deg += p.eval.dqs_e_norm_deg;
        md.insert(md.end(), p.model_dist.begin(), p.model_dist.end());
        mn.insert(mn.end(), p.model_norm.begin(), p.model_norm.end());
        dd.insert(dd.end(), p.dqs_dist.begin(), p.dqs_dist.end());
        dn.insert(dn.end(), p.dqs_norm.begin(), p.dqs_norm.end());
    }
    double n = static_cast<double>(samples.size());
    report.model_mean_e_dist /= n;
    report.model_mean_e_norm_deg /= n;
    report.dqs_mean_e_dist /= n;
    report.dqs_mean_e_norm_deg /= n;
    report.model_precision_dist = precision_curve(md, cfg.dist_thresholds);
    report.model_precision_norm = precision_curve(mn, cfg.norm_thresholds);
    report.dqs_precision_dist = precision_curve(dd, cfg.dist_thresholds);
    report.dqs_precision_norm = precision_curve(dn, cfg.norm_thresholds);
    return report;
}

// ---- timing ------------------------------------------------------------------

struct BenchReport {
    int garment_vertices = 0;
    int body_vertices = 0;
    int repetitions = 0;
    double predict_median_s = 0.0;
    double drape_median_s = 0.0;
    double ratio = 0.0;  // drape time / predict time
    std::vector<double> predict_times, drape_times;
};

/// Times model inference against the simulator on the same scene: identical
/// skinned start state, body, and rest template. One warm-up run of each is
/// excluded; medians over `repetitions` are reported.
inline BenchReport bench(const Model& model, const DrapeSample& scene, const SimConfig& sim,
                         const BodyTess& tess, int repetitions) {
    check(repetitions >= 1, "bench: repetitions must be >= 1");
    scene.validate();
    sim.validate();
    BodyProxy body = generate_body(scene.shape, scene.pose, tess);
    AdjacencyTables adj = build_adjacency(scene.rest);

    BenchReport report;
    report.garment_vertices = scene.rest.vertex_count();
    report.body_vertices = scene.body.vertex_count();
    report.repetitions = repetitions;

    using clock = std::chrono::steady_clock;
    auto timed = [](auto&& fn) {
        auto t0 = clock::now();
        fn();
        return std::chrono::duration<double>(clock::now() - t0).count();
    };

    predict_from_skinned(model, scene.skinned.vertices, adj, scene.body.vertices,
                         scene.condition);  // warm-up
    for (int r = 0; r < repetitions; ++r)
        report.predict_times.push_back(timed([&] {
            predict_from_skinned(model, scene.skinned.vertices, adj, scene.body.vertices,
                                 scene.condition);
        }));

    drape(scene.skinned, body, sim, &scene.rest);  // warm-up
    for (int r = 0; r < repetitions; ++r)
        report.drape_times.push_back(timed([&] { drape(scene.skinned, body, sim, &scene.rest); }));

    report.predict_median_s = detail::median(report.predict_times);
    report.drape_median_s = detail::median(report.drape_times);
    check(report.predict_median_s > 0, "bench: predict time measured as zero");
    report.ratio = report.drape_median_s / report.predict_median_s;
    return report;
}

} // namespace drape
