#pragma once

#include <algorithm>
#include <cmath>
#include <vector>

#include "drape/vec3.hpp"

namespace drape {

/// Uniform-grid index over a fixed point set. Queries return exactly what a
/// brute-force scan would, with distance ties broken by lower point index.
class SpatialIndex {
public:
    explicit SpatialIndex(std::vector<Vec3> points) : points_(std::move(points)) {
        check(!points_.empty(), "SpatialIndex: empty point set");
        lo_ = hi_ = points_[0];
        for (const Vec3& p : points_) {
            lo_.x = std::min(lo_.x, p.x); lo_.y = std::min(lo_.y, p.y); lo_.z = std::min(lo_.z, p.z);
            hi_.x = std::max(hi_.x, p.x); hi_.y = std::max(hi_.y, p.y); hi_.z = std::max(hi_.z, p.z);
        }
        int target = static_cast<int>(std::ceil(std::cbrt(static_cast<double>(points_.size()))));
        res_ = std::clamp(target, 1, 64);
        Vec3 extent = hi_ - lo_;
        cell_ = {extent.x > 0 ? extent.x / res_ : 1.0,
                 extent.y > 0 ? extent.y / res_ : 1.0,
                 extent.z > 0 ? extent.z / res_ : 1.0};
        cells_.assign(static_cast<size_t>(res_) * res_ * res_, {});
        for (int i = 0; i < static_cast<int>(points_.size()); ++i)
            cells_[cell_id(coords(points_[i]))].push_back(i);
    }

    int size() const { return static_cast<int>(points_.size()); }
    const std::vector<Vec3>& points() const { return points_; }

    /// k nearest point indices, ascending by (distance, index).
    std::vector<int> knn(const Vec3& query, int k) const {
        check(k >= 1, "knn: k must be positive");
        check(k <= size(), "knn: k=" + std::to_string(k) + " exceeds point count " +
                               std::to_string(size()));
        // best kept as a max-heap on (d2, index); worst element on top
        std::vector<std::pair<double, int>> best;
        best.reserve(k + 1);
        auto worse = [](const std::pair<double, int>& a, const std::pair<double, int>& b) {
            return a < b;  // max-heap
        };

        auto [cx, cy, cz] = coords(query);
        int max_ring = 0;
        max_ring = std::max({cx, res_ - 1 - cx, cy, res_ - 1 - cy, cz, res_ - 1 - cz});

        for (int r = 0; r <= max_ring; ++r) {
            scan_ring(query, cx, cy, cz, r, k, best, worse);
            if (static_cast<int>(best.size()) == k) {
                double bound = ring_clearance(query, cx, cy, cz, r);
                if (bound > 0.0 && bound * bound > best.front().first) break;
            }
        }
        std::sort(best.begin(), best.end());
        std::vector<int> out;
        out.reserve(best.size());
        for (const auto& [d2, idx] : best) out.push_back(idx);
        return out;
    }

    int nearest(const Vec3& query) const { return knn(query, 1)[0]; }

private:
    struct Cell { int x, y, z; };

    Cell coords(const Vec3& p) const {
        auto axis = [](double v, double lo, double cell, int res) {
            int c = static_cast<int>(std::floor((v - lo) / cell));
            return std::clamp(c, 0, res - 1);
        };
        return {axis(p.x, lo_.x, cell_.x, res_),
                axis(p.y, lo_.y, cell_.y, res_),
                axis(p.z, lo_.z, cell_.z, res_)};
    }

    size_t cell_id(const Cell& c) const {
        return (static_cast<size_t>(c.z) * res_ + c.y) * res_ + c.x;
    }

    template <typename Worse>
    void consider(const Vec3& query, int idx, int k,
                  std::vector<std::pair<double, int>>& best, Worse worse) const {
        std::pair<double, int> cand{dist2(points_[idx], query), idx};
        if (static_cast<int>(best.size()) < k) {
            best.push_back(cand);
            std::push_heap(best.begin(), best.end(), worse);
        } else if (cand < best.front()) {
            std::pop_heap(best.begin(), best.end(), worse);
            best.back() = cand;
            std::push_heap(best.begin(), best.end(), worse);
        }
    }

    template <typename Worse>
    void scan_ring(const Vec3& query, int cx, int cy, int cz, int r, int k,
                   std::vector<std::pair<double, int>>& best, Worse worse) const {
        int x0 = std::max(cx - r, 0), x1 = std::min(cx + r, res_ - 1);
        int y0 = std::max(cy - r, 0), y1 = std::min(cy + r, res_ - 1);
        int z0 = std::max(cz - r, 0), z1 = std::min(cz + r, res_ - 1);
        for (int z = z0; z <= z1; ++z)
            for (int y = y0; y <= y1; ++y)
                for (int x = x0; x <= x1; ++x) {
                    int cheb = std::max({std::abs(x - cx), std::abs(y - cy), std::abs(z - cz)});
                    if (cheb != r) continue;
                    for (int idx : cells_[cell_id({x, y, z})])
                        consider(query, idx, k, best, worse);
                }
    }

    /// Lower bound on the distance from the query to any point in a cell at
    /// ring > r (world-space distance to the boundary of the ring-r box).
    double ring_clearance(const Vec3& query, int cx, int cy, int cz, int r) const {
        double lx = lo_.x + (cx - r) * cell_.x, hx = lo_.x + (cx + r + 1) * cell_.x;
        double ly = lo_.y + (cy - r) * cell_.y, hy = lo_.y + (cy + r + 1) * cell_.y;
        double lz = lo_.z + (cz - r) * cell_.z, hz = lo_.z + (cz + r + 1) * cell_.z;
        double d = std::min({query.x - lx, hx - query.x, query.y - ly, hy - query.y,
                             query.z - lz, hz - query.z});
        return std::max(d, 0.0);
    }

    std::vector<Vec3> points_;
    Vec3 lo_, hi_, cell_;
    int res_ = 1;
    std::vector<std::vector<int>> cells_;
};

} // namespace drape
