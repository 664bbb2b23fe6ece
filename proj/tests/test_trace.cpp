#include <catch2/catch_amalgamated.hpp>

#include <filesystem>
#include <fstream>

#include "redtest/rng.hpp"
#include "redtest/trace.hpp"

using namespace redtest;
namespace fs = std::filesystem;

namespace {

fs::path fresh_dir(const std::string &name) {
    const fs::path dir = fs::temp_directory_path() / "redtest_trace_tests" / name;
    fs::remove_all(dir);
    fs::create_directories(dir);
    return dir;
}

RawTensor gaussian_tensor(std::vector<std::size_t> shape, std::uint64_t seed) {
    RawTensor t;
    t.shape = std::move(shape);
    t.data.resize(t.size());
    GaussianSource g(seed);
    for (double &v : t.data) v = g.next();
    return t;
}

void write_manifest(const fs::path &dir, const std::string &body) {
    std::ofstream out(dir / "manifest.json");
    out << body;
}

}  // namespace

TEST_CASE("flatten follows the row-major definition") {
    RawTensor t;
    t.shape = {2, 2, 2};
    t.data = {1, 2, 3, 4, 5, 6, 7, 8};
    const Matrix m = flatten(t);
    REQUIRE(m.rows() == 2);
    REQUIRE(m.cols() == 4);
    REQUIRE(m.data() == std::vector<double>{1, 2, 3, 4, 5, 6, 7, 8});
}

TEST_CASE("flatten is the identity on 2-D input") {
    const RawTensor t = gaussian_tensor({4, 7}, 11);
    const Matrix m = flatten(t);
    REQUIRE(m.rows() == 4);
    REQUIRE(m.cols() == 7);
    REQUIRE(m.data() == t.data);
}

TEST_CASE("flatten of a conv-shaped tensor matches index arithmetic") {
    const RawTensor t = gaussian_tensor({4, 3, 28, 28}, 99);
    const Matrix m = flatten(t);
    REQUIRE(m.rows() == 4);
    REQUIRE(m.cols() == 2352);
    // sample s, channel c, row r, col q maps to column c*784 + r*28 + q
    auto orig = [&](std::size_t s, std::size_t c, std::size_t r, std::size_t q) {
        return t.data[((s * 3 + c) * 28 + r) * 28 + q];
    };
    for (auto [s, c, r, q] : {std::array<std::size_t, 4>{0, 0, 0, 0},
                              std::array<std::size_t, 4>{3, 2, 27, 27},
                              std::array<std::size_t, 4>{1, 1, 13, 5},
                              std::array<std::size_t, 4>{2, 0, 7, 19}}) {
        REQUIRE(m(s, c * 784 + r * 28 + q) == orig(s, c, r, q));
    }
}

TEST_CASE("flatten rejects zero axes") {
    RawTensor t;
    t.shape = {0, 3};
    REQUIRE_THROWS_MATCHES(flatten(t), Error, Catch::Matchers::Predicate<Error>([](const Error &e) {
                               return e.code() == ErrorCode::EmptyTensor;
                           }));
}

TEST_CASE("single-layer manifest loads") {
    const fs::path dir = fresh_dir("single");
    write_tensor(dir / "l1.npy", gaussian_tensor({4, 3}, 1));
    write_manifest(dir, R"({"model": "tiny", "batch_size": 4, "structure_family": "plain",
        "layers": [{"name": "l1", "file": "l1.npy", "shape": [4, 3]}]})");
    const ModelTrace trace = load_trace(dir / "manifest.json");
    REQUIRE(trace.layer_count() == 1);
    REQUIRE(trace.batch_size == 4);
    REQUIRE(trace.model_name == "tiny");
    REQUIRE(trace.layers[0].p() == 3);
}

TEST_CASE("manifest shape disagreement raises ManifestMismatch") {
    const fs::path dir = fresh_dir("mismatch");
    write_tensor(dir / "l1.npy", gaussian_tensor({4, 5}, 2));
    write_manifest(dir, R"({"model": "m", "batch_size": 4, "structure_family": "plain",
        "layers": [{"name": "l1", "file": "l1.npy", "shape": [4, 3]}]})");
    REQUIRE_THROWS_MATCHES(load_trace(dir / "manifest.json"), Error,
                           Catch::Matchers::Predicate<Error>([](const Error &e) {
                               return e.code() == ErrorCode::ManifestMismatch;
                           }));
}

TEST_CASE("layers flatten in manifest order with the right widths") {
    const fs::path dir = fresh_dir("widths");
    write_tensor(dir / "a.npy", gaussian_tensor({8, 2}, 3));
    write_tensor(dir / "b.npy", gaussian_tensor({8, 3, 3}, 4));
    write_tensor(dir / "c.npy", gaussian_tensor({8, 4}, 5));
    write_manifest(dir, R"({"model": "m", "batch_size": 8, "structure_family": "block",
        "layers": [{"name": "a", "file": "a.npy", "shape": [8, 2]},
                   {"name": "b", "file": "b.npy", "shape": [8, 3, 3]},
                   {"name": "c", "file": "c.npy", "shape": [8, 4]}]})");
    const ModelTrace trace = load_trace(dir / "manifest.json");
    REQUIRE(trace.layer_count() == 3);
    REQUIRE(trace.structure_family == StructureFamily::block);
    REQUIRE(trace.layers[0].p() == 2);
    REQUIRE(trace.layers[1].p() == 9);
    REQUIRE(trace.layers[2].p() == 4);
    REQUIRE(trace.layers[0].layer_name == "a");
    REQUIRE(trace.layers[2].layer_name == "c");
}

TEST_CASE("batch size disagreement raises ManifestMismatch") {
    const fs::path dir = fresh_dir("batch");
    write_tensor(dir / "l1.npy", gaussian_tensor({6, 3}, 6));
    write_manifest(dir, R"({"model": "m", "batch_size": 4, "structure_family": "plain",
        "layers": [{"name": "l1", "file": "l1.npy", "shape": [6, 3]}]})");
    REQUIRE_THROWS_MATCHES(load_trace(dir / "manifest.json"), Error,
                           Catch::Matchers::Predicate<Error>([](const Error &e) {
                               return e.code() == ErrorCode::ManifestMismatch;
                           }));
}

TEST_CASE("tensor errors carry the failing layer's name") {
    const fs::path dir = fresh_dir("missing");
    write_manifest(dir, R"({"model": "m", "batch_size": 4, "structure_family": "plain",
        "layers": [{"name": "ghost", "file": "ghost.npy", "shape": [4, 3]}]})");
    try {
        load_trace(dir / "manifest.json");
        FAIL("expected an error");
    } catch (const Error &e) {
        REQUIRE(std::string(e.what()).find("ghost") != std::string::npos);
    }
}

TEST_CASE("save_trace then load_trace round-trips") {
    std::vector<ActivationMatrix> layers;
    GaussianSource g(77);
    for (int i = 0; i < 3; ++i) {
        Matrix m(5, 4);
        for (double &v : m.data()) v = g.next();
        layers.emplace_back("layer_" + std::to_string(i + 1), std::move(m));
    }
    const ModelTrace trace("demo", StructureFamily::block, std::move(layers));
    const fs::path dir = fresh_dir("roundtrip");
    const fs::path manifest = save_trace(dir, trace);
    const ModelTrace back = load_trace(manifest);
    REQUIRE(back.model_name == "demo");
    REQUIRE(back.structure_family == StructureFamily::block);
    REQUIRE(back.layer_count() == 3);
    for (std::size_t i = 0; i < 3; ++i)
        REQUIRE(back.layers[i].data.same_bits(trace.layers[i].data));
}
