#pragma once

#include <unistd.h>

#include <atomic>
#include <filesystem>
#include <string>

#include "drape/mesh.hpp"

namespace testutil {

using drape::TriMesh;
using drape::Vec3;

/// Flat w×h vertex grid in the xy plane, two CCW (+z) triangles per quad.
inline TriMesh grid_mesh(int w, int h, double spacing = 1.0) {
    TriMesh m;
    for (int j = 0; j < h; ++j)
        for (int i = 0; i < w; ++i)
            m.vertices.push_back({i * spacing, j * spacing, 0.0});
    auto id = [w](int i, int j) { return j * w + i; };
    for (int j = 0; j + 1 < h; ++j)
        for (int i = 0; i + 1 < w; ++i) {
            m.faces.push_back({id(i, j), id(i + 1, j), id(i, j + 1)});
            m.faces.push_back({id(i + 1, j), id(i + 1, j + 1), id(i, j + 1)});
        }
    return m;
}

/// Regular icosahedron centered at the origin, outward winding.
inline TriMesh icosahedron(double scale = 1.0) {
    const double p = (1.0 + std::sqrt(5.0)) / 2.0;
    TriMesh m;
    m.vertices = {{-1, p, 0},  {1, p, 0},  {-1, -p, 0}, {1, -p, 0},
                  {0, -1, p},  {0, 1, p},  {0, -1, -p}, {0, 1, -p},
                  {p, 0, -1},  {p, 0, 1},  {-p, 0, -1}, {-p, 0, 1}};
    for (auto& v : m.vertices) v *= scale;
    m.faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
               {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
               {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
               {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    return m;
}

inline std::string temp_path(const std::string& stem) {
    static std::atomic<int> counter{0};
    auto dir = std::filesystem::temp_directory_path();
    return (dir / (stem + "-" + std::to_string(::getpid()) + "-" +
                   std::to_string(counter++)))
        .string();
}

} // namespace testutil
