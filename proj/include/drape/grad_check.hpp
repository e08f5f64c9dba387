#pragma once

#include <functional>
#include <string>
#include <vector>

#include "drape/common.hpp"
#include "drape/tensor.hpp"

namespace drape::nn {

/// Builds a scalar-valued graph from one leaf per input tensor.
using ScalarFn = std::function<Value(Tape&, const std::vector<Value>&)>;

struct GradCheckReport {
    double max_rel_err = 0.0;
    std::string worst;  // element where the worst error occurred

    bool ok(double tol) const { return max_rel_err < tol; }
};

inline double eval_scalar(const ScalarFn& fn, const std::vector<Tensor>& inputs) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, false));
    Value out = fn(tape, leaves);
    const Tensor& v = out.val();
    check(v.rows == 1 && v.cols == 1, "grad check function must return a scalar");
    return v.v[0];
}

/// Compares reverse-mode gradients against central finite differences for
/// every element of every input. Relative error uses max(|a|, |n|, 1) as the
/// denominator so near-zero gradients are judged on absolute error.
inline GradCheckReport grad_check(const ScalarFn& fn, std::vector<Tensor> inputs,
                                  double step = 1e-5) {
    Tape tape;
    std::vector<Value> leaves;
    leaves.reserve(inputs.size());
    for (const Tensor& t : inputs) leaves.push_back(tape.leaf(t, true));
    Value out = fn(tape, leaves);
    tape.backward(out);

    GradCheckReport rep;
    for (size_t p = 0; p < inputs.size(); ++p) {
        Tensor analytic = tape.grad(leaves[p]);
        for (size_t i = 0; i < inputs[p].size(); ++i) {
            double keep = inputs[p].v[i];
            inputs[p].v[i] = keep + step;
            double fp = eval_scalar(fn, inputs);
            inputs[p].v[i] = keep - step;
            double fm = eval_scalar(fn, inputs);
            inputs[p].v[i] = keep;
            double numeric = (fp - fm) / (2.0 * step);
            double a = analytic.v[i];
            double rel = std::fabs(a - numeric) /
                         std::max({std::fabs(a), std::fabs(numeric), 1.0});
            if (rel > rep.max_rel_err) {
                rep.max_rel_err = rel;
                rep.worst = "input " + std::to_string(p) + " elem " + std::to_string(i) +
                            " analytic=" + std::to_string(a) +
                            " numeric=" + std::to_string(numeric);
            }
        }
    }
    return rep;
}

} // namespace drape::nn
