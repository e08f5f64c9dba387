#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "drape/config.hpp"
#include "drape/dataset.hpp"
#include "drape/grad_suite.hpp"
#include "drape/obj_io.hpp"
#include "drape/pipeline.hpp"

namespace fs = std::filesystem;
using drape::Json;

namespace {

struct Flags {
    std::string config;
    std::string out;
    std::int64_t seed = -1;  // negative: keep the config's seeds
    std::string variant;
    int threads = 0;         // 0: keep the config's thread counts
    std::string data;
    std::string checkpoint;
};

void add_common(CLI::App* sub, Flags& f) {
    sub->add_option("--config", f.config, "JSON run configuration")
        ->check(CLI::ExistingFile);
    sub->add_option("--out", f.out, "output directory (default out/<command>)");
    sub->add_option("--seed", f.seed, "override every seed in the config");
    sub->add_option("--variant", f.variant, "model variant")
        ->check(CLI::IsMember({"late", "global", "local"}));
    sub->add_option("--threads", f.threads, "worker cap for generation and evaluation")
        ->check(CLI::PositiveNumber);
    sub->add_option("--data", f.data, "dataset directory (overrides config dataset_dir)");
    sub->add_option("--checkpoint", f.checkpoint,
                    "model checkpoint (overrides config checkpoint)");
}

/// Config file merged with flag overrides (flags win), echoed into the output
/// directory so every run is reproducible from its artifacts alone.
drape::RunConfig effective_config(const Flags& f, const std::string& default_out,
                                  std::string& out_dir) {
    drape::RunConfig cfg;
    if (!f.config.empty()) cfg = drape::load_run_config(f.config);
    if (f.seed >= 0) {
        cfg.dataset.seed = static_cast<uint64_t>(f.seed);
        cfg.train.seed = static_cast<uint64_t>(f.seed);
        cfg.model.init_seed = static_cast<uint64_t>(f.seed);
    }
    if (!f.variant.empty()) cfg.model.variant = drape::variant_from_string(f.variant);
    if (f.threads > 0) {
        cfg.dataset.threads = f.threads;
        cfg.eval.threads = f.threads;
    }
    if (!f.data.empty()) cfg.dataset_dir = f.data;
    if (!f.checkpoint.empty()) cfg.checkpoint = f.checkpoint;

    out_dir = f.out.empty() ? default_out : f.out;
    fs::create_directories(out_dir);
    drape::save_json(Json(cfg), (fs::path(out_dir) / "config.json").string());
    return cfg;
}

std::string manifest_path(const drape::RunConfig& cfg) {
    drape::check(!cfg.dataset_dir.empty(),
                 "no dataset: set dataset_dir in the config or pass --data");
    return (fs::path(cfg.dataset_dir) / "manifest.json").string();
}

std::vector<drape::DrapeSample> load_named_split(const drape::RunConfig& cfg,
                                                 const std::string& name) {
    std::string mpath = manifest_path(cfg);
    drape::DatasetManifest manifest = drape::DatasetManifest::load(mpath);
    return drape::load_split(manifest, mpath, drape::split_from_string(name));
}

drape::Model make_model(const drape::RunConfig& cfg) {
    if (!cfg.checkpoint.empty()) return drape::load_model(cfg.checkpoint);
    return drape::init_model(cfg.model);
}

int cmd_gen_data(const Flags& f) {
    std::string out;
    drape::RunConfig cfg = effective_config(f, "out/gen-data", out);

    std::vector<drape::GenRecord> records;
    drape::generate_dataset(cfg.dataset, out, &records);

    // Re-read everything we just wrote; a sample that does not parse and
    // validate is a failed run, not a warning.
    std::string mpath = (fs::path(out) / "manifest.json").string();
    drape::DatasetManifest manifest = drape::DatasetManifest::load(mpath);
    size_t kept = 0;
    std::string sizes;
    for (auto split : {drape::Split::kTrain, drape::Split::kVal, drape::Split::kTest}) {
        size_t n = drape::load_split(manifest, mpath, split).size();
        kept += n;
        sizes += (sizes.empty() ? "" : "/") + std::to_string(n);
    }
    int dropped = 0;
    for (const drape::GenRecord& r : records)
        if (!r.converged) ++dropped;
    std::printf("gen-data: %zu samples (train/val/test %s), %d attempt%s dropped -> %s\n",
                kept, sizes.c_str(), dropped, dropped == 1 ? "" : "s", out.c_str());
    return 0;
}

int cmd_train(const Flags& f) {
    std::string out;
    drape::RunConfig cfg = effective_config(f, "out/train", out);

    std::string mpath = manifest_path(cfg);
    drape::DatasetManifest manifest = drape::DatasetManifest::load(mpath);
    auto train_set = drape::load_split(manifest, mpath, drape::Split::kTrain);
    auto val_set = drape::load_split(manifest, mpath, drape::Split::kVal);

    drape::Model model = drape::init_model(cfg.model);
    std::string ckpt = (fs::path(out) / "checkpoint.ckpt").string();
    // Architecture sidecar first: the checkpoint train() rewrites on each
    // improvement stays loadable even if the run is killed.
    drape::save_json(Json(model.config), drape::checkpoint_config_path(ckpt));

    std::string log_path = (fs::path(out) / "train_log.jsonl").string();
    std::ofstream log(log_path);
    drape::check(log.good(), "cannot open for writing: " + log_path);

    drape::TrainResult res = drape::train(model, train_set, val_set, cfg.train, ckpt, &log);
    log.close();
    drape::check(log.good(), "write failed: " + log_path);

    drape::save_json(Json{{"steps", res.steps},
                          {"epochs_run", res.epochs_run},
                          {"best_val_e_dist", res.best_val_e_dist},
                          {"best_epoch", res.best_epoch},
                          {"val_curve", res.val_curve}},
                     (fs::path(out) / "train_summary.json").string());

    drape::load_model(ckpt);  // proves the artifact round-trips before exit 0
    std::printf("train: %d steps, best val e_dist %.6f (epoch %d) -> %s\n", res.steps,
                res.best_val_e_dist, res.best_epoch, ckpt.c_str());
    return 0;
}

void write_precision_csv(const std::string& path, const std::string& threshold_header,
                         const std::vector<double>& thresholds,
                         const std::vector<double>& model,
                         const std::vector<double>& dqs) {
    std::ofstream f(path);
    drape::check(f.good(), "cannot open for writing: " + path);
    f << threshold_header << ",model,dqs\n";
    for (size_t i = 0; i < thresholds.size(); ++i)
        f << thresholds[i] << "," << model[i] << "," << dqs[i] << "\n";
    drape::check(f.good(), "write failed: " + path);
}

int cmd_eval(const Flags& f) {
    std::string out;
    drape::RunConfig cfg = effective_config(f, "out/eval", out);
    drape::check(!cfg.checkpoint.empty(),
                 "no model: set checkpoint in the config or pass --checkpoint");

    drape::Model model = drape::load_model(cfg.checkpoint);
    auto samples = load_named_split(cfg, cfg.eval.split);
    drape::SplitEval ev = drape::evaluate(model, samples, cfg.eval);

    Json per_sample = Json::array();
    for (const drape::SampleEval& s : ev.samples)
        per_sample.push_back({{"index", s.index},
                              {"model_e_dist", s.model_e_dist},
                              {"model_e_norm_deg", s.model_e_norm_deg},
                              {"model_l2_pct", s.model_l2_pct},
                              {"dqs_e_dist", s.dqs_e_dist},
                              {"dqs_e_norm_deg", s.dqs_e_norm_deg},
                              {"dqs_l2_pct", s.dqs_l2_pct}});
    drape::save_json(
        Json{{"split", cfg.eval.split},
             {"sample_count", ev.samples.size()},
             {"model", {{"mean_e_dist", ev.model_mean_e_dist},
                        {"mean_e_norm_deg", ev.model_mean_e_norm_deg}}},
             {"dqs", {{"mean_e_dist", ev.dqs_mean_e_dist},
                      {"mean_e_norm_deg", ev.dqs_mean_e_norm_deg}}},
             {"samples", per_sample}},
        (fs::path(out) / "report.json").string());
    write_precision_csv((fs::path(out) / "precision_dist.csv").string(), "threshold_m",
                        ev.dist_thresholds, ev.model_precision_dist, ev.dqs_precision_dist);
    write_precision_csv((fs::path(out) / "precision_norm.csv").string(), "threshold_deg",
                        ev.norm_thresholds, ev.model_precision_norm, ev.dqs_precision_norm);

    std::printf("eval[%s]: model e_dist %.6f / e_norm %.2f deg, dqs e_dist %.6f / e_norm "
                "%.2f deg (%zu samples) -> %s\n",
                cfg.eval.split.c_str(), ev.model_mean_e_dist, ev.model_mean_e_norm_deg,
                ev.dqs_mean_e_dist, ev.dqs_mean_e_norm_deg, ev.samples.size(), out.c_str());
    return 0;
}

int cmd_infer(const Flags& f) {
    std::string out;
    drape::RunConfig cfg = effective_config(f, "out/infer", out);

    const drape::BodyShape& shape = cfg.infer.shape;
    drape::Skeleton skel = drape::humanoid_skeleton(shape);
    drape::Pose pose = cfg.infer.build_pose(skel);
    drape::GarmentTemplate tmpl = drape::generate_garment_template(
        cfg.dataset.kind, cfg.dataset.template_params, shape);
    drape::BodyProxy body = drape::generate_body(shape, pose, cfg.dataset.tess);
    std::vector<drape::Vec3> skinned = drape::dual_quaternion_skin(
        tmpl.mesh.vertices, tmpl.weights, drape::pose_transforms(skel, pose));

    drape::Model model = make_model(cfg);
    std::vector<double> condition;
    if (model.config.condition_dim > 0) {
        condition = cfg.dataset.shape_ranges.normalize(shape);
        drape::check(static_cast<int>(condition.size()) == model.config.condition_dim,
                     "model wants a " + std::to_string(model.config.condition_dim) +
                         "-dim condition; body-shape conditioning provides " +
                         std::to_string(condition.size()));
    }

    drape::AdjacencyTables adj = drape::build_adjacency(tmpl.mesh);
    std::vector<drape::Vec3> pred =
        drape::predict_from_skinned(model, skinned, adj, body.mesh.vertices, condition);

    drape::TriMesh out_mesh;
    out_mesh.faces = tmpl.mesh.faces;
    out_mesh.vertices = pred;
    drape::obj_write(out_mesh, (fs::path(out) / "predicted.obj").string());
    out_mesh.vertices = skinned;
    drape::obj_write(out_mesh, (fs::path(out) / "skinned.obj").string());
    drape::obj_write(body.mesh, (fs::path(out) / "body.obj").string());
    for (const char* name : {"predicted.obj", "skinned.obj", "body.obj"})
        drape::obj_read((fs::path(out) / name).string()).validate();

    std::printf("infer: %d garment vertices, %d body vertices -> %s\n",
                tmpl.mesh.vertex_count(), body.mesh.vertex_count(), out.c_str());
    return 0;
}

int cmd_bench(const Flags& f) {
    std::string out;
    drape::RunConfig cfg = effective_config(f, "out/bench", out);

    auto samples = load_named_split(cfg, cfg.bench.split);
    drape::check(cfg.bench.sample_index < static_cast<int>(samples.size()),
                 "bench: sample_index " + std::to_string(cfg.bench.sample_index) +
                     " out of range (split has " + std::to_string(samples.size()) +
                     " samples)");
    const drape::DrapeSample& scene = samples[static_cast<size_t>(cfg.bench.sample_index)];

    drape::Model model = make_model(cfg);
    drape::BenchReport rep =
        drape::bench(model, scene, cfg.dataset.sim, cfg.dataset.tess, cfg.bench.repetitions);

    drape::save_json(Json{{"garment_vertices", rep.garment_vertices},
                          {"body_vertices", rep.body_vertices},
                          {"repetitions", rep.repetitions},
                          {"predict_median_s", rep.predict_median_s},
                          {"drape_median_s", rep.drape_median_s},
                          {"ratio", rep.ratio},
                          {"predict_times_s", rep.predict_times},
                          {"drape_times_s", rep.drape_times}},
                     (fs::path(out) / "bench.json").string());

    std::printf("bench: %d vertices, predict %.4fs vs drape %.4fs median, ratio %.1fx -> %s\n",
                rep.garment_vertices, rep.predict_median_s, rep.drape_median_s, rep.ratio,
                out.c_str());
    return 0;
}

int cmd_grad_check(const Flags& f) {
    std::string out;
    drape::RunConfig cfg = effective_config(f, "out/grad-check", out);
    const int instances = 10;
    const double tol = 1e-4;
    uint64_t seed = f.seed >= 0 ? static_cast<uint64_t>(f.seed) : cfg.train.seed;

    std::vector<drape::GradCaseResult> rows = drape::run_grad_suite(instances, seed, tol);
    Json report = Json::array();
    bool all_pass = true;
    std::printf("%-20s %-6s %s\n", "op", "status", "max rel err");
    for (const drape::GradCaseResult& r : rows) {
        std::printf("%-20s %-6s %.3e\n", r.name.c_str(), r.pass ? "PASS" : "FAIL",
                    r.max_rel_err);
        if (!r.pass) std::printf("  worst: %s\n", r.worst.c_str());
        report.push_back({{"op", r.name},
                          {"pass", r.pass},
                          {"max_rel_err", r.max_rel_err},
                          {"worst", r.worst}});
        all_pass = all_pass && r.pass;
    }
    drape::save_json(Json{{"instances", instances},
                          {"seed", seed},
                          {"tolerance", tol},
                          {"all_pass", all_pass},
                          {"cases", report}},
                     (fs::path(out) / "grad_check.json").string());
    std::printf("grad-check: %zu ops, %s (tol %.0e, %d instances each)\n", rows.size(),
                all_pass ? "all pass" : "FAILURES", tol, instances);
    return all_pass ? 0 : 1;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"garment draping toolkit"};
    app.require_subcommand(1);

    Flags f;
    CLI::App* gen = app.add_subcommand("gen-data", "generate a synthetic dataset");
    CLI::App* train = app.add_subcommand("train", "train a draping model");
    CLI::App* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dataset split");
    CLI::App* infer = app.add_subcommand("infer", "drape one garment with a trained model");
    CLI::App* bench = app.add_subcommand("bench", "time model prediction against the simulator");
    CLI::App* grad = app.add_subcommand("grad-check", "run the finite-difference gradient suite");
    for (CLI::App* sub : {gen, train, eval, infer, bench, grad}) add_common(sub, f);

    CLI11_PARSE(app, argc, argv);

    try {
        if (gen->parsed()) return cmd_gen_data(f);
        if (train->parsed()) return cmd_train(f);
        if (eval->parsed()) return cmd_eval(f);
        if (infer->parsed()) return cmd_infer(f);
        if (bench->parsed()) return cmd_bench(f);
        if (grad->parsed()) return cmd_grad_check(f);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return 1;
    }
    return 2;  // unreachable: require_subcommand guarantees one branch
}
