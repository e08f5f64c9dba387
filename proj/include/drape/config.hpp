#pragma once

#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "drape/dataset.hpp"
#include "drape/model.hpp"
#include "drape/pipeline.hpp"

namespace drape {

namespace nn {

inline void to_json(Json& j, const AdamConfig& a) {
    j = Json{{"lr", a.lr}, {"beta1", a.beta1}, {"beta2", a.beta2}, {"eps", a.eps}};
}
inline void from_json(const Json& j, AdamConfig& a) {
    detail::expect_keys(j, "adam config", {"lr", "beta1", "beta2", "eps"});
    detail::get_if(j, "lr", a.lr);
    detail::get_if(j, "beta1", a.beta1);
    detail::get_if(j, "beta2", a.beta2);
    detail::get_if(j, "eps", a.eps);
}

} // namespace nn

inline void to_json(Json& j, const LossWeights& w) {
    j = Json{{"lambda_pen", w.lambda_pen},
             {"lambda_norm", w.lambda_norm},
             {"lambda_bend", w.lambda_bend},
             {"d_tol", w.d_tol},
             {"normal_extension_frac", w.normal_extension_frac}};
}
inline void from_json(const Json& j, LossWeights& w) {
    detail::expect_keys(j, "loss weights",
                        {"lambda_pen", "lambda_norm", "lambda_bend", "d_tol",
                         "normal_extension_frac"});
    detail::get_if(j, "lambda_pen", w.lambda_pen);
    detail::get_if(j, "lambda_norm", w.lambda_norm);
    detail::get_if(j, "lambda_bend", w.lambda_bend);
    detail::get_if(j, "d_tol", w.d_tol);
    detail::get_if(j, "normal_extension_frac", w.normal_extension_frac);
}

inline void to_json(Json& j, const ModelConfig& c) {
    j = Json{{"variant", to_string(c.variant)},
             {"body_mlp1", c.body_mlp1},
             {"body_mlp2", c.body_mlp2},
             {"global_body_dim", c.global_body_dim},
             {"stn_feat", c.stn_feat},
             {"stn_head", c.stn_head},
             {"garment_pointwise", c.garment_pointwise},
             {"garment_channels", c.garment_channels},
             {"residual_blocks", c.residual_blocks},
             {"conv_heads", c.conv_heads},
             {"garment_global_dim", c.garment_global_dim},
             {"body_downscale", c.body_downscale},
             {"downscale_pool_neighbors", c.downscale_pool_neighbors},
             {"knn_k", c.knn_k},
             {"pool_seed", c.pool_seed},
             {"local_mlp", c.local_mlp},
             {"fusion", c.fusion},
             {"condition_dim", c.condition_dim},
             {"leaky_slope", c.leaky_slope},
             {"init_seed", c.init_seed}};
}
inline void from_json(const Json& j, ModelConfig& c) {
    detail::expect_keys(j, "model config",
                        {"variant", "body_mlp1", "body_mlp2", "global_body_dim", "stn_feat",
                         "stn_head", "garment_pointwise", "garment_channels", "residual_blocks",
                         "conv_heads", "garment_global_dim", "body_downscale",
                         "downscale_pool_neighbors", "knn_k", "pool_seed", "local_mlp",
                         "fusion", "condition_dim", "leaky_slope", "init_seed"});
    if (j.contains("variant")) c.variant = variant_from_string(j.at("variant"));
    detail::get_if(j, "body_mlp1", c.body_mlp1);
    detail::get_if(j, "body_mlp2", c.body_mlp2);
    detail::get_if(j, "global_body_dim", c.global_body_dim);
    detail::get_if(j, "stn_feat", c.stn_feat);
    detail::get_if(j, "stn_head", c.stn_head);
    detail::get_if(j, "garment_pointwise", c.garment_pointwise);
    detail::get_if(j, "garment_channels", c.garment_channels);
    detail::get_if(j, "residual_blocks", c.residual_blocks);
    detail::get_if(j, "conv_heads", c.conv_heads);
    detail::get_if(j, "garment_global_dim", c.garment_global_dim);
    detail::get_if(j, "body_downscale", c.body_downscale);
    detail::get_if(j, "downscale_pool_neighbors", c.downscale_pool_neighbors);
    detail::get_if(j, "knn_k", c.knn_k);
    detail::get_if(j, "pool_seed", c.pool_seed);
    detail::get_if(j, "local_mlp", c.local_mlp);
    detail::get_if(j, "fusion", c.fusion);
    detail::get_if(j, "condition_dim", c.condition_dim);
    detail::get_if(j, "leaky_slope", c.leaky_slope);
    detail::get_if(j, "init_seed", c.init_seed);
}

inline void to_json(Json& j, const TrainConfig& c) {
    j = Json{{"epochs", c.epochs},
             {"adam", c.adam},
             {"loss", c.loss},
             {"grad_accum", c.grad_accum},
             {"seed", c.seed}};
}
inline void from_json(const Json& j, TrainConfig& c) {
    detail::expect_keys(j, "train config", {"epochs", "adam", "loss", "grad_accum", "seed"});
    detail::get_if(j, "epochs", c.epochs);
    detail::get_if(j, "adam", c.adam);
    detail::get_if(j, "loss", c.loss);
    detail::get_if(j, "grad_accum", c.grad_accum);
    detail::get_if(j, "seed", c.seed);
}

inline void to_json(Json& j, const EvalConfig& c) {
    j = Json{{"dist_thresholds", c.dist_thresholds},
             {"norm_thresholds", c.norm_thresholds},
             {"threads", c.threads},
             {"split", c.split}};
}
inline void from_json(const Json& j, EvalConfig& c) {
    detail::expect_keys(j, "eval config",
                        {"dist_thresholds", "norm_thresholds", "threads", "split"});
    detail::get_if(j, "dist_thresholds", c.dist_thresholds);
    detail::get_if(j, "norm_thresholds", c.norm_thresholds);
    detail::get_if(j, "threads", c.threads);
    detail::get_if(j, "split", c.split);
}

/// Timing-run parameters (which scene, how many repetitions).
struct BenchConfig {
    int repetitions = 5;
    std::string split = "test";  // split the scene is taken from
    int sample_index = 0;        // index within that split

    void validate() const {
        check(repetitions >= 1, "bench: repetitions must be >= 1");
        check(sample_index >= 0, "bench: sample_index must be >= 0");
        split_from_string(split);
    }
};

inline void to_json(Json& j, const BenchConfig& c) {
    j = Json{{"repetitions", c.repetitions},
             {"split", c.split},
             {"sample_index", c.sample_index}};
}
inline void from_json(const Json& j, BenchConfig& c) {
    detail::expect_keys(j, "bench config", {"repetitions", "split", "sample_index"});
    detail::get_if(j, "repetitions", c.repetitions);
    detail::get_if(j, "split", c.split);
    detail::get_if(j, "sample_index", c.sample_index);
}

/// One fixed joint rotation for the infer command's pose.
struct JointRotation {
    std::string joint;
    Vec3 axis;
    double deg = 0.0;
};

inline void to_json(Json& j, const JointRotation& r) {
    j = Json{{"joint", r.joint}, {"axis", r.axis}, {"deg", r.deg}};
}
inline void from_json(const Json& j, JointRotation& r) {
    detail::expect_keys(j, "joint rotation", {"joint", "axis", "deg"});
    check(j.contains("joint") && j.contains("axis") && j.contains("deg"),
          "joint rotation: joint, axis, and deg are required");
    j.at("joint").get_to(r.joint);
    j.at("axis").get_to(r.axis);
    j.at("deg").get_to(r.deg);
}

/// Scene for the infer command: the garment template comes from the dataset
/// section; body shape and pose are fixed here.
struct InferConfig {
    BodyShape shape;
    std::vector<JointRotation> pose;
    Vec3 root_translation;

    Pose build_pose(const Skeleton& skel) const {
        Pose p = Pose::identity(skel.joint_count());
        for (const JointRotation& r : pose) {
            int jix = skel.find(r.joint);
            p.rotations[jix] = p.rotations[jix] * Quat::from_axis_angle(r.axis,
                                                                        deg_to_rad(r.deg));
        }
        p.root_translation = root_translation;
        return p;
    }
};

inline void to_json(Json& j, const InferConfig& c) {
    j = Json{{"shape", c.shape}, {"pose", c.pose}, {"root_translation", c.root_translation}};
}
inline void from_json(const Json& j, InferConfig& c) {
    detail::expect_keys(j, "infer config", {"shape", "pose", "root_translation"});
    detail::get_if(j, "shape", c.shape);
    detail::get_if(j, "pose", c.pose);
    detail::get_if(j, "root_translation", c.root_translation);
}

/// Everything a command run needs, loadable from one JSON file; command-line
/// flags override individual fields after loading.
struct RunConfig {
    std::string dataset_dir;  // gen-data output directory; train/eval/bench input
    std::string checkpoint;   // parameter file; its sibling .json holds the model config
    GenConfig dataset;
    ModelConfig model;
    TrainConfig train;
    EvalConfig eval;
    BenchConfig bench;
    InferConfig infer;
};

inline void to_json(Json& j, const RunConfig& c) {
    j = Json{{"dataset_dir", c.dataset_dir},
             {"checkpoint", c.checkpoint},
             {"dataset", c.dataset},
             {"model", c.model},
             {"train", c.train},
             {"eval", c.eval},
             {"bench", c.bench},
             {"infer", c.infer}};
}
inline void from_json(const Json& j, RunConfig& c) {
    detail::expect_keys(j, "config",
                        {"dataset_dir", "checkpoint", "dataset", "model", "train", "eval",
                         "bench", "infer"});
    detail::get_if(j, "dataset_dir", c.dataset_dir);
    detail::get_if(j, "checkpoint", c.checkpoint);
    detail::get_if(j, "dataset", c.dataset);
    detail::get_if(j, "model", c.model);
    detail::get_if(j, "train", c.train);
    detail::get_if(j, "eval", c.eval);
    detail::get_if(j, "bench", c.bench);
    detail::get_if(j, "infer", c.infer);
}

inline RunConfig load_run_config(const std::string& path) {
    std::ifstream f(path);
    check(f.good(), "cannot open config: " + path);
    Json j;
    RunConfig c;
    try {
        f >> j;
        j.get_to(c);
    } catch (const Json::exception& e) {
        fail("config " + path + ": " + e.what());
    }
    return c;
}

inline void save_json(const Json& j, const std::string& path) {
    std::ofstream f(path);
    check(f.good(), "cannot open for writing: " + path);
    f << j.dump(2) << "\n";
    check(f.good(), "write failed: " + path);
}

// ---- model checkpoints ---------------------------------------------------------
// Parameters go into the tensor container; the architecture lives in a JSON
// sibling (same path, .json extension), so checkpoints stay self-describing.

inline std::string checkpoint_config_path(const std::string& ckpt_path) {
    return std::filesystem::path(ckpt_path).replace_extension(".json").string();
}

inline void save_model(const Model& m, const std::string& ckpt_path) {
    m.config.validate();
    m.params.save(ckpt_path);
    save_json(Json(m.config), checkpoint_config_path(ckpt_path));
}

inline Model load_model(const std::string& ckpt_path) {
    std::string cfg_path = checkpoint_config_path(ckpt_path);
    std::ifstream f(cfg_path);
    check(f.good(), "cannot open model config " + cfg_path + " (expected next to " +
                        ckpt_path + ")");
    Json j;
    try {
        f >> j;
    } catch (const Json::exception& e) {
        fail("model config " + cfg_path + ": " + e.what());
    }
    Model m;
    j.get_to(m.config);
    m.config.validate();
    m.params = nn::ParamStore::load(ckpt_path);

    // dry-run the architecture against the loaded tensors so shape or naming
    // drift fails here, not mid-evaluation
    nn::Tape tape;
    tape.set_finite_checks(false);
    detail::ParamAccess access(tape, m.params, false, false, m.config.init_seed);
    TriMesh g;
    g.vertices = {{0, 0, 0}, {0.1, 0, 0}, {0, 0.1, 0}};
    g.faces = {{0, 1, 2}};
    AdjacencyTables adj = build_adjacency(g);
    std::vector<Vec3> body = {{0, 0, 0.1}, {0.1, 0, 0.1}, {0, 0.1, 0.1}};
    std::vector<double> condition(static_cast<size_t>(m.config.condition_dim), 0.0);
    forward_on_tape(tape, access, g.vertices, adj, body, condition, m.config);
    return m;
}

} // namespace drape
