#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <string>
#include <vector>

#include "drape/common.hpp"
#include "drape/tensor.hpp"

namespace drape::nn {

struct AdamConfig {
    double lr = 0.001;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

/// Named parameter tensors plus Adam moment buffers and a step counter.
/// Iteration order is the lexicographic name order of std::map, which keeps
/// every pass over the parameters deterministic.
class ParamStore {
public:
    void add(const std::string& name, Tensor init) {
        check(!params_.count(name), "parameter '" + name + "' already registered");
        Entry e;
        e.m = Tensor::zeros(init.rows, init.cols);
        e.v = Tensor::zeros(init.rows, init.cols);
        e.value = std::move(init);
        params_.emplace(name, std::move(e));
    }

    bool contains(const std::string& name) const { return params_.count(name) != 0; }

    Tensor& value(const std::string& name) { return entry(name).value; }
    const Tensor& value(const std::string& name) const { return entry(name).value; }

    std::vector<std::string> names() const {
        std::vector<std::string> out;
        out.reserve(params_.size());
        for (const auto& [k, _] : params_) out.push_back(k);
        return out;
    }

    size_t count() const { return params_.size(); }
    int64_t step() const { return step_; }

    size_t scalar_count() const {
        size_t n = 0;
        for (const auto& [_, e] : params_) n += e.value.size();
        return n;
    }

    /// One Adam update with bias correction. Parameters missing from `grads`
    /// are treated as zero-gradient (their moments still decay).
    void adam_step(const std::map<std::string, Tensor>& grads, const AdamConfig& cfg) {
        for (const auto& [name, g] : grads)
            check(params_.count(name), "adam_step: gradient for unknown parameter '" + name + "'");
        ++step_;
        double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(step_));
        double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(step_));
        for (auto& [name, e] : params_) {
            auto it = grads.find(name);
            const Tensor* g = it == grads.end() ? nullptr : &it->second;
            if (g)
                check(g->same_shape(e.value), "adam_step: gradient shape " + g->shape_str() +
                                                  " != parameter '" + name + "' shape " +
                                                  e.value.shape_str());
            for (size_t i = 0; i < e.value.size(); ++i) {
                double gi = g ? g->v[i] : 0.0;
                e.m.v[i] = cfg.beta1 * e.m.v[i] + (1.0 - cfg.beta1) * gi;
                e.v.v[i] = cfg.beta2 * e.v.v[i] + (1.0 - cfg.beta2) * gi * gi;
                double mhat = e.m.v[i] / bc1;
                double vhat = e.v.v[i] / bc2;
                e.value.v[i] -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            }
        }
    }

    // ---- checkpoint container ---------------------------------------------
    // Layout (little-endian):
    //   magic "DRCP", u32 version=1, i64 step, u32 entry count, then per entry:
    //   u32 name length, name bytes, u32 rows, u32 cols,
    //   rows*cols f64 values, rows*cols f64 m, rows*cols f64 v.

    void save(const std::string& path) const {
        std::ofstream f(path, std::ios::binary);
        check(f.good(), "cannot open checkpoint for writing: " + path);
        f.write(kMagic, 4);
        write_u32(f, kVersion);
        write_i64(f, step_);
        write_u32(f, static_cast<uint32_t>(params_.size()));
        for (const auto& [name, e] : params_) {
            write_u32(f, static_cast<uint32_t>(name.size()));
            f.write(name.data(), static_cast<std::streamsize>(name.size()));
            write_u32(f, static_cast<uint32_t>(e.value.rows));
            write_u32(f, static_cast<uint32_t>(e.value.cols));
            write_doubles(f, e.value.v);
            write_doubles(f, e.m.v);
            write_doubles(f, e.v.v);
        }
        check(f.good(), "checkpoint write failed: " + path);
    }

    static ParamStore load(const std::string& path) {
        std::ifstream f(path, std::ios::binary);
        check(f.good(), "cannot open checkpoint: " + path);
        char magic[4] = {};
        f.read(magic, 4);
        check(f.good() && std::memcmp(magic, kMagic, 4) == 0,
              "not a checkpoint file (bad magic): " + path);
        uint32_t version = read_u32(f, path);
        check(version == kVersion,
              path + ": unsupported checkpoint version " + std::to_string(version));
        ParamStore out;
        out.step_ = read_i64(f, path);
        uint32_t n = read_u32(f, path);
        for (uint32_t i = 0; i < n; ++i) {
            uint32_t len = read_u32(f, path);
            check(len <= 4096, path + ": implausible name length");
            std::string name(len, '\0');
            f.read(name.data(), len);
            uint32_t rows = read_u32(f, path), cols = read_u32(f, path);
            Entry e;
            e.value = Tensor(static_cast<int>(rows), static_cast<int>(cols));
            e.m = e.value;
            e.v = e.value;
            read_doubles(f, e.value.v, path);
            read_doubles(f, e.m.v, path);
            read_doubles(f, e.v.v, path);
            check(!out.params_.count(name), path + ": duplicate parameter '" + name + "'");
            out.params_.emplace(std::move(name), std::move(e));
        }
        check(f.good(), "truncated checkpoint: " + path);
        return out;
    }

private:
    struct Entry {
        Tensor value, m, v;
    };

    Entry& entry(const std::string& name) {
        auto it = params_.find(name);
        check(it != params_.end(), "unknown parameter '" + name + "'");
        return it->second;
    }
    const Entry& entry(const std::string& name) const {
        auto it = params_.find(name);
        check(it != params_.end(), "unknown parameter '" + name + "'");
        return it->second;
    }

    static void write_u32(std::ofstream& f, uint32_t x) {
        f.write(reinterpret_cast<const char*>(&x), sizeof x);
    }
    static void write_i64(std::ofstream& f, int64_t x) {
        f.write(reinterpret_cast<const char*>(&x), sizeof x);
    }
    static void write_doubles(std::ofstream& f, const std::vector<double>& xs) {
        f.write(reinterpret_cast<const char*>(xs.data()),
                static_cast<std::streamsize>(xs.size() * sizeof(double)));
    }
    static uint32_t read_u32(std::ifstream& f, const std::string& path) {
        uint32_t x = 0;
        f.read(reinterpret_cast<char*>(&x), sizeof x);
        check(f.good(), "truncated checkpoint: " + path);
        return x;
    }
    static int64_t read_i64(std::ifstream& f, const std::string& path) {
        int64_t x = 0;
        f.read(reinterpret_cast<char*>(&x), sizeof x);
        check(f.good(), "truncated checkpoint: " + path);
        return x;
    }
    static void read_doubles(std::ifstream& f, std::vector<double>& xs, const std::string& path) {
        f.read(reinterpret_cast<char*>(xs.data()),
               static_cast<std::streamsize>(xs.size() * sizeof(double)));
        check(f.good(), "truncated checkpoint: " + path);
    }

    static constexpr const char kMagic[5] = "DRCP";
    static constexpr uint32_t kVersion = 1;

    std::map<std::string, Entry> params_;
    int64_t step_ = 0;
};

} // namespace drape::nn
