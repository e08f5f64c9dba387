#pragma once

#include <vector>

#include "drape/tensor.hpp"
#include "drape/vec3.hpp"

namespace drape {

inline nn::Tensor points_to_tensor(const std::vector<Vec3>& pts) {
    nn::Tensor t(static_cast<int>(pts.size()), 3);
    for (int i = 0; i < t.rows; ++i) {
        t.at(i, 0) = pts[i].x;
        t.at(i, 1) = pts[i].y;
        t.at(i, 2) = pts[i].z;
    }
    return t;
}

inline std::vector<Vec3> tensor_to_points(const nn::Tensor& t) {
    check(t.cols == 3, "tensor_to_points: want N×3, got " + t.shape_str());
    std::vector<Vec3> pts(t.rows);
    for (int i = 0; i < t.rows; ++i) pts[i] = {t.at(i, 0), t.at(i, 1), t.at(i, 2)};
    return pts;
}

} // namespace drape
