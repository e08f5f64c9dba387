#pragma once

#include <algorithm>
#include <array>
#include <cstdint>
#include <set>
#include <utility>
#include <vector>

#include "drape/vec3.hpp"

namespace drape {

/// Triangle mesh. Faces are CCW when viewed from outside (outward normals).
struct TriMesh {
    std::vector<Vec3> vertices;
    std::vector<std::array<int, 3>> faces;

    int vertex_count() const { return static_cast<int>(vertices.size()); }
    int face_count() const { return static_cast<int>(faces.size()); }

    void validate() const {
        const int n = vertex_count();
        for (size_t f = 0; f < faces.size(); ++f) {
            const auto& t = faces[f];
            for (int c = 0; c < 3; ++c)
                check(t[c] >= 0 && t[c] < n,
                      "TriMesh: face " + std::to_string(f) + " index out of range");
            check(t[0] != t[1] && t[1] != t[2] && t[0] != t[2],
                  "TriMesh: face " + std::to_string(f) + " repeats a vertex");
        }
        for (size_t v = 0; v < vertices.size(); ++v)
            check(vertices[v].finite(),
                  "TriMesh: vertex " + std::to_string(v) + " is not finite");
    }
};

struct FaceNormals {
    std::vector<Vec3> normals;          // unit, or zero when degenerate
    std::vector<uint8_t> degenerate;    // 1 where cross-product norm < threshold
};

constexpr double kDegenerateFaceThreshold = 1e-12;  // on the cross-product norm (m^2)

inline FaceNormals face_normals(const TriMesh& mesh) {
    FaceNormals out;
    out.normals.reserve(mesh.faces.size());
    out.degenerate.reserve(mesh.faces.size());
    for (const auto& f : mesh.faces) {
        const Vec3& v0 = mesh.vertices[f[0]];
        Vec3 c = (mesh.vertices[f[1]] - v0).cross(mesh.vertices[f[2]] - v0);
        double n = c.norm();
        if (n < kDegenerateFaceThreshold) {
            out.normals.push_back(Vec3{});
            out.degenerate.push_back(1);
        } else {
            out.normals.push_back(c / n);
            out.degenerate.push_back(0);
        }
    }
    return out;
}

/// Area-weighted vertex normals; isolated vertices get the zero vector.
inline std::vector<Vec3> vertex_normals(const TriMesh& mesh) {
    std::vector<Vec3> acc(mesh.vertices.size());
    for (const auto& f : mesh.faces) {
        const Vec3& v0 = mesh.vertices[f[0]];
        // cross-product magnitude is twice the face area, so this is area weighting
        Vec3 c = (mesh.vertices[f[1]] - v0).cross(mesh.vertices[f[2]] - v0);
        acc[f[0]] += c;
        acc[f[1]] += c;
        acc[f[2]] += c;
    }
    for (auto& n : acc) n = n.normalized();
    return acc;
}

/// Unique undirected edges, each as (min,max) vertex pair, sorted.
inline std::vector<std::pair<int, int>> unique_edges(const TriMesh& mesh) {
    std::vector<std::pair<int, int>> edges;
    edges.reserve(mesh.faces.size() * 3);
    for (const auto& f : mesh.faces) {
        for (int c = 0; c < 3; ++c) {
            int a = f[c], b = f[(c + 1) % 3];
            edges.emplace_back(std::min(a, b), std::max(a, b));
        }
    }
    std::sort(edges.begin(), edges.end());
    edges.erase(std::unique(edges.begin(), edges.end()), edges.end());
    return edges;
}

inline double avg_edge_length(const TriMesh& mesh) {
    auto edges = unique_edges(mesh);
    check(!edges.empty(), "avg_edge_length: mesh has no edges");
    double sum = 0.0;
    for (const auto& [a, b] : edges) sum += dist(mesh.vertices[a], mesh.vertices[b]);
    return sum / static_cast<double>(edges.size());
}

/// Per-vertex one-ring neighborhoods and the vertex pairs at edge-graph
/// distance exactly two (the support of the bending term).
struct AdjacencyTables {
    std::vector<std::vector<int>> one_ring;              // sorted, symmetric
    std::vector<std::pair<int, int>> two_ring_pairs;     // (i,k) with i<k, sorted
};

inline AdjacencyTables build_adjacency(const TriMesh& mesh) {
    AdjacencyTables adj;
    adj.one_ring.assign(mesh.vertices.size(), {});
    for (const auto& [a, b] : unique_edges(mesh)) {
        adj.one_ring[a].push_back(b);
        adj.one_ring[b].push_back(a);
    }
    for (auto& ring : adj.one_ring) std::sort(ring.begin(), ring.end());

    std::set<std::pair<int, int>> pairs;
    for (int i = 0; i < mesh.vertex_count(); ++i) {
        const auto& ring = adj.one_ring[i];
        for (int j : ring) {
            for (int k : adj.one_ring[j]) {
                if (k == i) continue;
                if (std::binary_search(ring.begin(), ring.end(), k)) continue;  // distance 1
                pairs.emplace(std::min(i, k), std::max(i, k));
            }
        }
    }
    adj.two_ring_pairs.assign(pairs.begin(), pairs.end());
    return adj;
}

inline std::vector<std::pair<int, int>> two_ring_pairs(const TriMesh& mesh) {
    return build_adjacency(mesh).two_ring_pairs;
}

} // namespace drape
