#pragma once

#include <cstdio>
#include <fstream>
#include <sstream>
#include <string>

#include "drape/mesh.hpp"

namespace drape {

/// Wavefront OBJ reader. Accepts `v x y z` and triangular `f a b c` records
/// (1-based; `a/vt/vn` suffixes ignored). Anything malformed raises an Error
/// naming the line.
inline TriMesh obj_read(const std::string& path) {
    std::ifstream in(path);
    check(in.good(), "obj_read: cannot open " + path);
    TriMesh mesh;
    std::string line;
    int lineno = 0;
    auto bad = [&](const std::string& why) {
        fail("obj_read: " + path + ":" + std::to_string(lineno) + ": " + why);
    };
    while (std::getline(in, line)) {
        ++lineno;
        std::istringstream ls(line);
        std::string tag;
        if (!(ls >> tag) || tag[0] == '#') continue;
        if (tag == "v") {
            Vec3 p;
            if (!(ls >> p.x >> p.y >> p.z)) bad("malformed vertex record");
            mesh.vertices.push_back(p);
        } else if (tag == "f") {
            std::array<int, 3> f{};
            int count = 0;
            std::string tok;
            while (ls >> tok) {
                if (count >= 3) bad("non-triangular face");
                // keep only the vertex index before any '/'
                size_t slash = tok.find('/');
                std::string head = slash == std::string::npos ? tok : tok.substr(0, slash);
                int idx = 0;
                try {
                    size_t used = 0;
                    idx = std::stoi(head, &used);
                    if (used != head.size()) throw std::invalid_argument(head);
                } catch (const std::exception&) {
                    bad("malformed face index '" + tok + "'");
                }
                if (idx < 1 || idx > mesh.vertex_count()) bad("face index out of range");
                f[count++] = idx - 1;
            }
            if (count != 3) bad("face with " + std::to_string(count) + " vertices");
            mesh.faces.push_back(f);
        }
        // other record types (vn, vt, o, g, s, usemtl, ...) are ignored
    }
    mesh.validate();
    return mesh;
}

inline void obj_write(const TriMesh& mesh, const std::string& path) {
    std::ofstream out(path);
    check(out.good(), "obj_write: cannot open " + path);
    char buf[128];
    for (const Vec3& v : mesh.vertices) {
        std::snprintf(buf, sizeof(buf), "v %.17g %.17g %.17g\n", v.x, v.y, v.z);
        out << buf;
    }
    for (const auto& f : mesh.faces)
        out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
    check(out.good(), "obj_write: write failed for " + path);
}

} // namespace drape
