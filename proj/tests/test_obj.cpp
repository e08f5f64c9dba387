#include <gtest/gtest.h>

#include <filesystem>
#include <fstream>

#include "drape/obj_io.hpp"
#include "drape/rng.hpp"
#include "test_util.hpp"

using namespace drape;
using testutil::temp_path;

namespace {

std::string write_text(const std::string& body) {
    std::string path = temp_path("obj");
    std::ofstream f(path);
    f << body;
    return path;
}

void expect_error_mentions(const std::string& path, const std::string& needle) {
    try {
        obj_read(path);
        FAIL() << "expected Error for " << needle;
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find(needle), std::string::npos) << e.what();
    }
    std::filesystem::remove(path);
}

} // namespace

TEST(ObjIoTest, RoundTripPreservesGeometry) {
    Rng rng(4242);
    TriMesh m = testutil::icosahedron(0.731);
    for (auto& v : m.vertices) v += Vec3{rng.uniform(-1, 1) * 1e-7, 0.123456789012345, -3.25};
    std::string path = temp_path("roundtrip") + ".obj";
    obj_write(m, path);
    TriMesh back = obj_read(path);
    ASSERT_EQ(back.vertex_count(), m.vertex_count());
    ASSERT_EQ(back.face_count(), m.face_count());
    for (int i = 0; i < m.vertex_count(); ++i)
        EXPECT_LE(dist(back.vertices[i], m.vertices[i]), 1e-6);
    EXPECT_EQ(back.faces, m.faces);
    std::filesystem::remove(path);
}

TEST(ObjIoTest, ParsesCommentsBlanksAndTextureSuffixes) {
    std::string path = write_text(
        "# a comment\n"
        "\n"
        "v 0 0 0\n"
        "v 1 0 0\n"
        "v 0 1 0\n"
        "vn 0 0 1\n"
        "vt 0.5 0.5\n"
        "s off\n"
        "f 1/1/1 2/2/1 3/3/1\n");
    TriMesh m = obj_read(path);
    EXPECT_EQ(m.vertex_count(), 3);
    ASSERT_EQ(m.face_count(), 1);
    EXPECT_EQ(m.faces[0], (std::array<int, 3>{0, 1, 2}));
    std::filesystem::remove(path);
}

TEST(ObjIoTest, ErrorsNameTheLine) {
    expect_error_mentions(write_text("v 0 0 0\nv 1 0\n"), ":2:");
    expect_error_mentions(write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 4\n"), ":4:");
}

TEST(ObjIoTest, RejectsMalformedVertex) {
    expect_error_mentions(write_text("v 1 two 3\n"), "malformed vertex");
}

TEST(ObjIoTest, RejectsNonTriangularFace) {
    expect_error_mentions(
        write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nv 1 1 0\nf 1 2 3 4\n"),
        "non-triangular");
}

TEST(ObjIoTest, RejectsFaceIndexOutOfRange) {
    expect_error_mentions(write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 9\n"),
                          "face index out of range");
    expect_error_mentions(write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 0 1 2\n"),
                          "face index out of range");
}

TEST(ObjIoTest, RejectsJunkFaceToken) {
    expect_error_mentions(write_text("v 0 0 0\nv 1 0 0\nv 0 1 0\nf 1 2 x\n"),
                          "malformed face index");
}

TEST(ObjIoTest, MissingFileNamesPath) {
    try {
        obj_read("/nonexistent/mesh.obj");
        FAIL();
    } catch (const Error& e) {
        EXPECT_NE(std::string(e.what()).find("/nonexistent/mesh.obj"), std::string::npos);
    }
}

TEST(ObjIoTest, WriteRejectsBadPath) {
    EXPECT_THROW(obj_write(testutil::grid_mesh(2, 2), "/nonexistent/dir/out.obj"), Error);
}
