#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <deque>
#include <functional>
#include <memory>
#include <string>
#include <vector>

#include "drape/common.hpp"

namespace drape::nn {

/// Dense row-major matrix of doubles. Vectors are 1×c or r×1.
struct Tensor {
    int rows = 0, cols = 0;
    std::vector<double> v;

    Tensor() = default;
    Tensor(int r, int c) : rows(r), cols(c), v(static_cast<size_t>(r) * c, 0.0) {}

    static Tensor zeros(int r, int c) { return Tensor(r, c); }
    static Tensor full(int r, int c, double x) {
        Tensor t(r, c);
        std::fill(t.v.begin(), t.v.end(), x);
        return t;
    }
    static Tensor identity(int n) {
        Tensor t(n, n);
        for (int i = 0; i < n; ++i) t.at(i, i) = 1.0;
        return t;
    }
    static Tensor row3(double x, double y, double z) {
        Tensor t(1, 3);
        t.v = {x, y, z};
        return t;
    }

    double& at(int r, int c) { return v[static_cast<size_t>(r) * cols + c]; }
    double at(int r, int c) const { return v[static_cast<size_t>(r) * cols + c]; }
    double* row(int r) { return v.data() + static_cast<size_t>(r) * cols; }
    const double* row(int r) const { return v.data() + static_cast<size_t>(r) * cols; }

    size_t size() const { return v.size(); }
    bool empty() const { return v.empty(); }
    bool same_shape(const Tensor& o) const { return rows == o.rows && cols == o.cols; }
    std::string shape_str() const {
        return std::to_string(rows) + "x" + std::to_string(cols);
    }
    bool all_finite() const {
        for (double x : v)
            if (!std::isfinite(x)) return false;
        return true;
    }
};

class Tape;

/// Handle to a node on a tape.
struct Value {
    Tape* tape = nullptr;
    int id = -1;

    bool valid() const { return tape != nullptr && id >= 0; }
    const Tensor& val() const;
    int rows() const { return val().rows; }
    int cols() const { return val().cols; }
};

/// Eager reverse-mode tape. Each op computes its forward value immediately
/// and registers a closure that accumulates gradients into its parents.
class Tape {
public:
    Tape() : check_finite_(global_finite_checks_) {}

    /// When on, every op verifies its output (and backward its gradients)
    /// contains no NaN/Inf. Test suites enable this globally.
    static void set_global_finite_checks(bool on) { global_finite_checks_ = on; }
    void set_finite_checks(bool on) { check_finite_ = on; }

    int node_count() const { return static_cast<int>(nodes_.size()); }
    const Tensor& value(int id) const { return nodes_[id].value; }

    /// Gradient accumulated for a node (zeros if none reached it).
    Tensor grad(const Value& v) const {
        const Node& n = nodes_[v.id];
        return n.grad.empty() ? Tensor::zeros(n.value.rows, n.value.cols) : n.grad;
    }

    // ---- leaves ----------------------------------------------------------

    Value leaf(Tensor t, bool needs_grad = false) {
        return make(std::move(t), {}, nullptr, needs_grad, "leaf");
    }
    Value constant(Tensor t) { return leaf(std::move(t), false); }

    // ---- elementwise -----------------------------------------------------

    Value add(Value a, Value b) {
        const Tensor &ta = val(a), &tb = val(b);
        require(ta.same_shape(tb), "add", {&ta, &tb});
        Tensor out = ta;
        for (size_t i = 0; i < out.size(); ++i) out.v[i] += tb.v[i];
        return make(std::move(out), {a.id, b.id},
                    [](Tape& t, int self) {
                        const Tensor& g = t.nodes_[self].grad;
                        t.accumulate(t.nodes_[self].parents[0], g, +1.0);
                        t.accumulate(t.nodes_[self].parents[1], g, +1.0);
                    },
                    needs(a, b), "add");
    }

    Value sub(Value a, Value b) {
        const Tensor &ta = val(a), &tb = val(b);
        require(ta.same_shape(tb), "sub", {&ta, &tb});
        Tensor out = ta;
        for (size_t i = 0; i < out.size(); ++i) out.v[i] -= tb.v[i];
        return make(std::move(out), {a.id, b.id},
                    [](Tape& t, int self) {
                        const Tensor& g = t.nodes_[self].grad;
                        t.accumulate(t.nodes_[self].parents[0], g, +1.0);
                        t.accumulate(t.nodes_[self].parents[1], g, -1.0);
                    },
                    needs(a, b), "sub");
    }

    Value mul(Value a, Value b) {
        const Tensor &ta = val(a), &tb = val(b);
        require(ta.same_shape(tb), "mul", {&ta, &tb});
        Tensor out = ta;
        for (size_t i = 0; i < out.size(); ++i) out.v[i] *= tb.v[i];
        return make(std::move(out), {a.id, b.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        const Tensor& g = n.grad;
                        const Tensor& va = t.nodes_[n.parents[0]].value;
                        const Tensor& vb = t.nodes_[n.parents[1]].value;
                        if (t.wants_grad(n.parents[0])) {
                            Tensor& ga = t.grad_buf(n.parents[0]);
                            for (size_t i = 0; i < g.size(); ++i) ga.v[i] += g.v[i] * vb.v[i];
                        }
                        if (t.wants_grad(n.parents[1])) {
                            Tensor& gb = t.grad_buf(n.parents[1]);
                            for (size_t i = 0; i < g.size(); ++i) gb.v[i] += g.v[i] * va.v[i];
                        }
                    },
                    needs(a, b), "mul");
    }

    Value scale(Value a, double c) {
        Tensor out = val(a);
        for (double& x : out.v) x *= c;
        return make(std::move(out), {a.id},
                    [c](Tape& t, int self) {
                        t.accumulate(t.nodes_[self].parents[0], t.nodes_[self].grad, c);
                    },
                    needs(a), "scale");
    }

    Value abs_val(Value a) {
        Tensor out = val(a);
        for (double& x : out.v) x = std::fabs(x);
        return make(std::move(out), {a.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        const Tensor& x = t.nodes_[n.parents[0]].value;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        // subgradient 0 at x == 0
                        for (size_t i = 0; i < g.size(); ++i)
                            gx.v[i] += g.v[i] * (x.v[i] > 0 ? 1.0 : (x.v[i] < 0 ? -1.0 : 0.0));
                    },
                    needs(a), "abs");
    }

    Value leaky_relu(Value a, double slope) {
        Tensor out = val(a);
        for (double& x : out.v)
            if (x < 0) x *= slope;
        return make(std::move(out), {a.id},
                    [slope](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        const Tensor& x = t.nodes_[n.parents[0]].value;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (size_t i = 0; i < g.size(); ++i)
                            gx.v[i] += g.v[i] * (x.v[i] > 0 ? 1.0 : slope);
                    },
                    needs(a), "leaky_relu");
    }

    Value relu(Value a) { return leaky_relu(a, 0.0); }

    // ---- linear algebra --------------------------------------------------

    Value matmul(Value a, Value b) {
        const Tensor &ta = val(a), &tb = val(b);
        require(ta.cols == tb.rows, "matmul", {&ta, &tb});
        Tensor out = mm(ta, tb);
        return make(std::move(out), {a.id, b.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        const Tensor& g = n.grad;
                        const Tensor& va = t.nodes_[n.parents[0]].value;
                        const Tensor& vb = t.nodes_[n.parents[1]].value;
                        if (t.wants_grad(n.parents[0]))
                            mm_add_nt(g, vb, t.grad_buf(n.parents[0]));  // g * b^T
                        if (t.wants_grad(n.parents[1]))
                            mm_add_tn(va, g, t.grad_buf(n.parents[1]));  // a^T * g
                    },
                    needs(a, b), "matmul");
    }

    /// y = x·Wᵀ + b with x: N×din, W: dout×din, b: 1×dout.
    Value linear(Value x, Value W, Value b) {
        const Tensor &tx = val(x), &tw = val(W), &tb = val(b);
        require(tx.cols == tw.cols && tb.rows == 1 && tb.cols == tw.rows, "linear",
                {&tx, &tw, &tb});
        Tensor out(tx.rows, tw.rows);
        for (int i = 0; i < tx.rows; ++i) {
            const double* xr = tx.row(i);
            double* yr = out.row(i);
            for (int o = 0; o < tw.rows; ++o) {
                const double* wr = tw.row(o);
                double acc = tb.v[o];
                for (int k = 0; k < tx.cols; ++k) acc += xr[k] * wr[k];
                yr[o] = acc;
            }
        }
        return make(std::move(out), {x.id, W.id, b.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        const Tensor& g = n.grad;  // N×dout
                        const Tensor& vx = t.nodes_[n.parents[0]].value;
                        const Tensor& vw = t.nodes_[n.parents[1]].value;
                        if (t.wants_grad(n.parents[0]))
                            mm_add_nn(g, vw, t.grad_buf(n.parents[0]));  // g · W
                        if (t.wants_grad(n.parents[1]))
                            mm_add_tn(g, vx, t.grad_buf(n.parents[1]));  // gᵀ · x
                        if (t.wants_grad(n.parents[2])) {
                            Tensor& gb = t.grad_buf(n.parents[2]);
                            for (int i = 0; i < g.rows; ++i)
                                for (int j = 0; j < g.cols; ++j) gb.v[j] += g.at(i, j);
                        }
                    },
                    needs(x, W, b), "linear");
    }

    // ---- structure -------------------------------------------------------

    Value concat_cols(const std::vector<Value>& xs) {
        check(!xs.empty(), "concat_cols: no inputs");
        int rows = val(xs[0]).rows, cols = 0;
        for (const Value& x : xs) {
            require(val(x).rows == rows, "concat_cols", {&val(xs[0]), &val(x)});
            cols += val(x).cols;
        }
        Tensor out(rows, cols);
        std::vector<int> parents, offsets;
        int off = 0;
        for (const Value& x : xs) {
            const Tensor& t = val(x);
            for (int i = 0; i < rows; ++i)
                std::copy(t.row(i), t.row(i) + t.cols, out.row(i) + off);
            parents.push_back(x.id);
            offsets.push_back(off);
            off += t.cols;
        }
        bool ng = false;
        for (const Value& x : xs) ng = ng || wants_grad(x.id);
        return make(std::move(out), std::move(parents),
                    [offsets](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        const Tensor& g = n.grad;
                        for (size_t p = 0; p < n.parents.size(); ++p) {
                            int pid = n.parents[p];
                            if (!t.wants_grad(pid)) continue;
                            Tensor& gp = t.grad_buf(pid);
                            for (int i = 0; i < g.rows; ++i)
                                for (int j = 0; j < gp.cols; ++j)
                                    gp.at(i, j) += g.at(i, offsets[p] + j);
                        }
                    },
                    ng, "concat_cols");
    }

    Value slice_cols(Value x, int c0, int c1) {
        const Tensor& tx = val(x);
        check(0 <= c0 && c0 < c1 && c1 <= tx.cols, "slice_cols: bad range on " + tx.shape_str());
        Tensor out(tx.rows, c1 - c0);
        for (int i = 0; i < tx.rows; ++i)
            std::copy(tx.row(i) + c0, tx.row(i) + c1, out.row(i));
        return make(std::move(out), {x.id},
                    [c0](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (int i = 0; i < g.rows; ++i)
                            for (int j = 0; j < g.cols; ++j) gx.at(i, c0 + j) += g.at(i, j);
                    },
                    needs(x), "slice_cols");
    }

    Value reshape(Value x, int r, int c) {
        const Tensor& tx = val(x);
        check(static_cast<size_t>(r) * c == tx.size(),
              "reshape: size mismatch " + tx.shape_str() + " -> " + std::to_string(r) + "x" +
                  std::to_string(c));
        Tensor out(r, c);
        out.v = tx.v;
        return make(std::move(out), {x.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (size_t i = 0; i < g.size(); ++i) gx.v[i] += g.v[i];
                    },
                    needs(x), "reshape");
    }

    Value gather_rows(Value x, std::vector<int> idx) {
        const Tensor& tx = val(x);
        Tensor out(static_cast<int>(idx.size()), tx.cols);
        for (size_t i = 0; i < idx.size(); ++i) {
            check(idx[i] >= 0 && idx[i] < tx.rows, "gather_rows: index out of range");
            std::copy(tx.row(idx[i]), tx.row(idx[i]) + tx.cols, out.row(static_cast<int>(i)));
        }
        auto ids = std::make_shared<const std::vector<int>>(std::move(idx));
        return make(std::move(out), {x.id},
                    [ids](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (size_t i = 0; i < ids->size(); ++i) {
                            double* dst = gx.row((*ids)[i]);
                            const double* src = g.row(static_cast<int>(i));
                            for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
                        }
                    },
                    needs(x), "gather_rows");
    }

    /// Sums input rows into out_rows buckets given by idx.
    Value segment_sum_rows(Value x, std::vector<int> idx, int out_rows) {
        const Tensor& tx = val(x);
        check(static_cast<int>(idx.size()) == tx.rows, "segment_sum_rows: index count mismatch");
        Tensor out(out_rows, tx.cols);
        for (int i = 0; i < tx.rows; ++i) {
            check(idx[i] >= 0 && idx[i] < out_rows, "segment_sum_rows: index out of range");
            double* dst = out.row(idx[i]);
            const double* src = tx.row(i);
            for (int j = 0; j < tx.cols; ++j) dst[j] += src[j];
        }
        auto ids = std::make_shared<const std::vector<int>>(std::move(idx));
        return make(std::move(out), {x.id},
                    [ids](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (size_t i = 0; i < ids->size(); ++i) {
                            double* dst = gx.row(static_cast<int>(i));
                            const double* src = g.row((*ids)[i]);
                            for (int j = 0; j < g.cols; ++j) dst[j] += src[j];
                        }
                    },
                    needs(x), "segment_sum_rows");
    }

    /// Per-bucket elementwise max; empty buckets yield 0 and receive no
    /// gradient. Ties route to the lowest input row index.
    Value segment_max_rows(Value x, std::vector<int> idx, int out_rows) {
        const Tensor& tx = val(x);
        check(static_cast<int>(idx.size()) == tx.rows, "segment_max_rows: index count mismatch");
        Tensor out(out_rows, tx.cols);
        std::vector<int> argmax(static_cast<size_t>(out_rows) * tx.cols, -1);
        for (int i = 0; i < tx.rows; ++i) {
            check(idx[i] >= 0 && idx[i] < out_rows, "segment_max_rows: index out of range");
            for (int j = 0; j < tx.cols; ++j) {
                int& am = argmax[static_cast<size_t>(idx[i]) * tx.cols + j];
                if (am < 0 || tx.at(i, j) > out.at(idx[i], j)) {
                    out.at(idx[i], j) = tx.at(i, j);
                    am = i;
                }
            }
        }
        auto am = std::make_shared<const std::vector<int>>(std::move(argmax));
        return make(std::move(out), {x.id},
                    [am](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (int r = 0; r < g.rows; ++r)
                            for (int j = 0; j < g.cols; ++j) {
                                int src = (*am)[static_cast<size_t>(r) * g.cols + j];
                                if (src >= 0) gx.at(src, j) += g.at(r, j);
                            }
                    },
                    needs(x), "segment_max_rows");
    }

    /// Scales row i of x by s(i,0); s is R×1.
    Value scale_rows(Value x, Value s) {
        const Tensor &tx = val(x), &ts = val(s);
        require(ts.rows == tx.rows && ts.cols == 1, "scale_rows", {&tx, &ts});
        Tensor out = tx;
        for (int i = 0; i < tx.rows; ++i) {
            double f = ts.v[i];
            double* r = out.row(i);
            for (int j = 0; j < tx.cols; ++j) r[j] *= f;
        }
        return make(std::move(out), {x.id, s.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        const Tensor& g = n.grad;
                        const Tensor& vx = t.nodes_[n.parents[0]].value;
                        const Tensor& vs = t.nodes_[n.parents[1]].value;
                        if (t.wants_grad(n.parents[0])) {
                            Tensor& gx = t.grad_buf(n.parents[0]);
                            for (int i = 0; i < g.rows; ++i) {
                                double f = vs.v[i];
                                for (int j = 0; j < g.cols; ++j) gx.at(i, j) += g.at(i, j) * f;
                            }
                        }
                        if (t.wants_grad(n.parents[1])) {
                            Tensor& gs = t.grad_buf(n.parents[1]);
                            for (int i = 0; i < g.rows; ++i) {
                                double acc = 0.0;
                                for (int j = 0; j < g.cols; ++j) acc += g.at(i, j) * vx.at(i, j);
                                gs.v[i] += acc;
                            }
                        }
                    },
                    needs(x, s), "scale_rows");
    }

    Value repeat_row(Value x, int n) {
        const Tensor& tx = val(x);
        require(tx.rows == 1, "repeat_row", {&tx});
        Tensor out(n, tx.cols);
        for (int i = 0; i < n; ++i) std::copy(tx.v.begin(), tx.v.end(), out.row(i));
        return make(std::move(out), {x.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (int i = 0; i < g.rows; ++i)
                            for (int j = 0; j < g.cols; ++j) gx.v[j] += g.at(i, j);
                    },
                    needs(x), "repeat_row");
    }

    // ---- reductions ------------------------------------------------------

    /// Column-wise max over rows -> 1×c. Gradient routes to the arg-max row,
    /// ties to the lowest row index.
    Value row_max_pool(Value x) {
        const Tensor& tx = val(x);
        require(tx.rows >= 1, "row_max_pool", {&tx});
        Tensor out(1, tx.cols);
        std::vector<int> argmax(tx.cols, 0);
        std::copy(tx.row(0), tx.row(0) + tx.cols, out.v.begin());
        for (int i = 1; i < tx.rows; ++i)
            for (int j = 0; j < tx.cols; ++j)
                if (tx.at(i, j) > out.v[j]) {
                    out.v[j] = tx.at(i, j);
                    argmax[j] = i;
                }
        auto am = std::make_shared<const std::vector<int>>(std::move(argmax));
        return make(std::move(out), {x.id},
                    [am](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (int j = 0; j < g.cols; ++j) gx.at((*am)[j], j) += g.v[j];
                    },
                    needs(x), "row_max_pool");
    }

    Value row_avg_pool(Value x) {
        const Tensor& tx = val(x);
        require(tx.rows >= 1, "row_avg_pool", {&tx});
        Tensor out(1, tx.cols);
        for (int i = 0; i < tx.rows; ++i)
            for (int j = 0; j < tx.cols; ++j) out.v[j] += tx.at(i, j);
        double inv = 1.0 / tx.rows;
        for (double& x_ : out.v) x_ *= inv;
        return make(std::move(out), {x.id},
                    [inv](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (int i = 0; i < gx.rows; ++i)
                            for (int j = 0; j < g.cols; ++j) gx.at(i, j) += g.v[j] * inv;
                    },
                    needs(x), "row_avg_pool");
    }

    Value softmax_rows(Value x) {
        const Tensor& tx = val(x);
        Tensor out = tx;
        for (int i = 0; i < tx.rows; ++i) {
            double* r = out.row(i);
            double mx = *std::max_element(r, r + tx.cols);
            double sum = 0.0;
            for (int j = 0; j < tx.cols; ++j) {
                r[j] = std::exp(r[j] - mx);
                sum += r[j];
            }
            for (int j = 0; j < tx.cols; ++j) r[j] /= sum;
        }
        return make(std::move(out), {x.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        const Tensor& y = n.value;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (int i = 0; i < g.rows; ++i) {
                            double dot = 0.0;
                            for (int j = 0; j < g.cols; ++j) dot += g.at(i, j) * y.at(i, j);
                            for (int j = 0; j < g.cols; ++j)
                                gx.at(i, j) += y.at(i, j) * (g.at(i, j) - dot);
                        }
                    },
                    needs(x), "softmax_rows");
    }

    Value sum_all(Value x) {
        const Tensor& tx = val(x);
        Tensor out(1, 1);
        for (double v : tx.v) out.v[0] += v;
        return make(std::move(out), {x.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        double g = n.grad.v[0];
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (double& v : gx.v) v += g;
                    },
                    needs(x), "sum_all");
    }

    // ---- rowwise geometry ------------------------------------------------

    Value rowwise_dot(Value a, Value b) {
        const Tensor &ta = val(a), &tb = val(b);
        require(ta.same_shape(tb), "rowwise_dot", {&ta, &tb});
        Tensor out(ta.rows, 1);
        for (int i = 0; i < ta.rows; ++i) {
            double acc = 0.0;
            for (int j = 0; j < ta.cols; ++j) acc += ta.at(i, j) * tb.at(i, j);
            out.v[i] = acc;
        }
        return make(std::move(out), {a.id, b.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        const Tensor& g = n.grad;
                        const Tensor& va = t.nodes_[n.parents[0]].value;
                        const Tensor& vb = t.nodes_[n.parents[1]].value;
                        if (t.wants_grad(n.parents[0])) {
                            Tensor& ga = t.grad_buf(n.parents[0]);
                            for (int i = 0; i < va.rows; ++i)
                                for (int j = 0; j < va.cols; ++j)
                                    ga.at(i, j) += g.v[i] * vb.at(i, j);
                        }
                        if (t.wants_grad(n.parents[1])) {
                            Tensor& gb = t.grad_buf(n.parents[1]);
                            for (int i = 0; i < va.rows; ++i)
                                for (int j = 0; j < va.cols; ++j)
                                    gb.at(i, j) += g.v[i] * va.at(i, j);
                        }
                    },
                    needs(a, b), "rowwise_dot");
    }

    Value cross_rows(Value a, Value b) {
        const Tensor &ta = val(a), &tb = val(b);
        require(ta.same_shape(tb) && ta.cols == 3, "cross_rows", {&ta, &tb});
        Tensor out(ta.rows, 3);
        for (int i = 0; i < ta.rows; ++i) {
            const double *x = ta.row(i), *y = tb.row(i);
            double* o = out.row(i);
            o[0] = x[1] * y[2] - x[2] * y[1];
            o[1] = x[2] * y[0] - x[0] * y[2];
            o[2] = x[0] * y[1] - x[1] * y[0];
        }
        return make(std::move(out), {a.id, b.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        const Tensor& g = n.grad;
                        const Tensor& va = t.nodes_[n.parents[0]].value;
                        const Tensor& vb = t.nodes_[n.parents[1]].value;
                        auto cross_into = [](const double* p, const double* q, double* dst) {
                            dst[0] += p[1] * q[2] - p[2] * q[1];
                            dst[1] += p[2] * q[0] - p[0] * q[2];
                            dst[2] += p[0] * q[1] - p[1] * q[0];
                        };
                        if (t.wants_grad(n.parents[0])) {
                            Tensor& ga = t.grad_buf(n.parents[0]);
                            for (int i = 0; i < g.rows; ++i)
                                cross_into(vb.row(i), g.row(i), ga.row(i));  // b × g
                        }
                        if (t.wants_grad(n.parents[1])) {
                            Tensor& gb = t.grad_buf(n.parents[1]);
                            for (int i = 0; i < g.rows; ++i)
                                cross_into(g.row(i), va.row(i), gb.row(i));  // g × a
                        }
                    },
                    needs(a, b), "cross_rows");
    }

    Value rowwise_norm(Value x) {
        const Tensor& tx = val(x);
        Tensor out(tx.rows, 1);
        for (int i = 0; i < tx.rows; ++i) {
            double acc = 0.0;
            for (int j = 0; j < tx.cols; ++j) acc += tx.at(i, j) * tx.at(i, j);
            out.v[i] = std::sqrt(acc);
        }
        return make(std::move(out), {x.id},
                    [](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        const Tensor& vx = t.nodes_[n.parents[0]].value;
                        const Tensor& y = n.value;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (int i = 0; i < vx.rows; ++i) {
                            double inv = y.v[i] > 1e-30 ? g.v[i] / y.v[i] : 0.0;
                            for (int j = 0; j < vx.cols; ++j) gx.at(i, j) += inv * vx.at(i, j);
                        }
                    },
                    needs(x), "rowwise_norm");
    }

    /// Row-wise x / max(‖x‖, eps).
    Value normalize_rows(Value x, double eps) {
        const Tensor& tx = val(x);
        Tensor out = tx;
        std::vector<double> norms(tx.rows);
        for (int i = 0; i < tx.rows; ++i) {
            double acc = 0.0;
            for (int j = 0; j < tx.cols; ++j) acc += tx.at(i, j) * tx.at(i, j);
            norms[i] = std::sqrt(acc);
            double inv = 1.0 / std::max(norms[i], eps);
            for (int j = 0; j < tx.cols; ++j) out.at(i, j) *= inv;
        }
        auto ns = std::make_shared<const std::vector<double>>(std::move(norms));
        return make(std::move(out), {x.id},
                    [ns, eps](Tape& t, int self) {
                        Node& n = t.nodes_[self];
                        if (!t.wants_grad(n.parents[0])) return;
                        const Tensor& g = n.grad;
                        const Tensor& y = n.value;
                        Tensor& gx = t.grad_buf(n.parents[0]);
                        for (int i = 0; i < g.rows; ++i) {
                            double norm = (*ns)[i];
                            if (norm > eps) {
                                double dot = 0.0;
                                for (int j = 0; j < g.cols; ++j) dot += g.at(i, j) * y.at(i, j);
                                for (int j = 0; j < g.cols; ++j)
                                    gx.at(i, j) += (g.at(i, j) - dot * y.at(i, j)) / norm;
                            } else {
                                for (int j = 0; j < g.cols; ++j) gx.at(i, j) += g.at(i, j) / eps;
                            }
                        }
                    },
                    needs(x), "normalize_rows");
    }

    // ---- backward --------------------------------------------------------

    /// Reverse pass from a scalar root; accumulates gradients into every
    /// reachable node that wants them.
    void backward(Value root) {
        check(root.tape == this, "backward: value from another tape");
        const Tensor& rv = nodes_[root.id].value;
        check(rv.rows == 1 && rv.cols == 1,
              "backward: root must be scalar, got " + rv.shape_str());
        grad_buf(root.id).v[0] += 1.0;
        for (int id = root.id; id >= 0; --id) {
            Node& n = nodes_[id];
            if (!n.needs_grad || n.grad.empty() || !n.backward) continue;
            n.backward(*this, id);
            if (check_finite_)
                for (int pid : n.parents)
                    if (!nodes_[pid].grad.empty())
                        check(nodes_[pid].grad.all_finite(),
                              "backward: non-finite gradient out of op '" + n.op + "'");
        }
    }

private:
    friend struct Value;

    struct Node {
        Tensor value;
        Tensor grad;
        std::vector<int> parents;
        std::function<void(Tape&, int)> backward;
        bool needs_grad = false;
        std::string op;
    };

    const Tensor& val(const Value& v) const {
        check(v.tape == this && v.id >= 0 && v.id < node_count(), "value from another tape");
        return nodes_[v.id].value;
    }

    bool wants_grad(int id) const { return nodes_[id].needs_grad; }
    static bool needs(Value a) { return a.tape->wants_grad(a.id); }
    static bool needs(Value a, Value b) {
        return a.tape->wants_grad(a.id) || b.tape->wants_grad(b.id);
    }
    static bool needs(Value a, Value b, Value c) {
        return needs(a, b) || c.tape->wants_grad(c.id);
    }

    Tensor& grad_buf(int id) {
        Node& n = nodes_[id];
        if (n.grad.empty()) n.grad = Tensor::zeros(n.value.rows, n.value.cols);
        return n.grad;
    }

    void accumulate(int id, const Tensor& g, double factor) {
        if (!wants_grad(id)) return;
        Tensor& dst = grad_buf(id);
        for (size_t i = 0; i < g.size(); ++i) dst.v[i] += factor * g.v[i];
    }

    Value make(Tensor value, std::vector<int> parents,
               std::function<void(Tape&, int)> backward, bool needs_grad,
               const char* op) {
        if (check_finite_)
            check(value.all_finite(), std::string("op '") + op + "' produced non-finite values");
        Node n;
        n.value = std::move(value);
        n.parents = std::move(parents);
        n.backward = std::move(backward);
        n.needs_grad = needs_grad;
        n.op = op;
        nodes_.push_back(std::move(n));
        return Value{this, node_count() - 1};
    }

    static void require(bool ok, const char* op, std::initializer_list<const Tensor*> ts) {
        if (ok) return;
        std::string msg = std::string("op '") + op + "': incompatible shapes";
        for (const Tensor* t : ts) msg += " " + t->shape_str();
        fail(msg);
    }

    static Tensor mm(const Tensor& a, const Tensor& b) {
        Tensor out(a.rows, b.cols);
        for (int i = 0; i < a.rows; ++i) {
            const double* ar = a.row(i);
            double* orow = out.row(i);
            for (int k = 0; k < a.cols; ++k) {
                double f = ar[k];
                const double* br = b.row(k);
                for (int j = 0; j < b.cols; ++j) orow[j] += f * br[j];
            }
        }
        return out;
    }
    // dst += a · bᵀ
    static void mm_add_nt(const Tensor& a, const Tensor& b, Tensor& dst) {
        for (int i = 0; i < a.rows; ++i) {
            const double* ar = a.row(i);
            double* dr = dst.row(i);
            for (int j = 0; j < b.rows; ++j) {
                const double* br = b.row(j);
                double acc = 0.0;
                for (int k = 0; k < a.cols; ++k) acc += ar[k] * br[k];
                dr[j] += acc;
            }
        }
    }
    // dst += aᵀ · b
    static void mm_add_tn(const Tensor& a, const Tensor& b, Tensor& dst) {
        for (int k = 0; k < a.rows; ++k) {
            const double* ar = a.row(k);
            const double* br = b.row(k);
            for (int i = 0; i < a.cols; ++i) {
                double f = ar[i];
                double* dr = dst.row(i);
                for (int j = 0; j < b.cols; ++j) dr[j] += f * br[j];
            }
        }
    }
    // dst += a · b
    static void mm_add_nn(const Tensor& a, const Tensor& b, Tensor& dst) {
        for (int i = 0; i < a.rows; ++i) {
            const double* ar = a.row(i);
            double* dr = dst.row(i);
            for (int k = 0; k < a.cols; ++k) {
                double f = ar[k];
                const double* br = b.row(k);
                for (int j = 0; j < b.cols; ++j) dr[j] += f * br[j];
            }
        }
    }

    // deque keeps node (and value) references stable while new ops are added
    std::deque<Node> nodes_;
    bool check_finite_ = false;
    inline static bool global_finite_checks_ = false;
};

inline const Tensor& Value::val() const { return tape->value(id); }

// Convenience operators for graph code.
inline Value operator+(Value a, Value b) { return a.tape->add(a, b); }
inline Value operator-(Value a, Value b) { return a.tape->sub(a, b); }
inline Value operator*(Value a, Value b) { return a.tape->mul(a, b); }

} // namespace drape::nn
