#pragma once

#include <filesystem>
#include <random>
#include <string>
#include <vector>

#include "conductor/synthetic.hpp"
#include "conductor/voldata.hpp"

namespace fixtures {

using namespace conductor;

/// Scratch directory removed on destruction.
struct TempDir {
    std::filesystem::path path;

    TempDir() {
        std::random_device rd;
        path = std::filesystem::temp_directory_path() / ("conductor-" + std::to_string(rd()) + std::to_string(rd()));
        std::filesystem::create_directories(path);
    }
    ~TempDir() {
        std::error_code ec;
        std::filesystem::remove_all(path, ec);
    }
    TempDir(const TempDir&) = delete;
    TempDir& operator=(const TempDir&) = delete;
};

inline AttributeSchema scalarSchema(int columns) {
    std::vector<AttributeDef> defs;
    for (int c = 0; c < columns; ++c) defs.push_back({"a" + std::to_string(c), AttributeKind::Scalar});
    return AttributeSchema(std::move(defs));
}

/// Instance table with ids 1..n and integer-valued attributes in [0, 10), so
/// interval boundaries are hit often.
inline InstanceTable randomTable(std::mt19937_64& rng, int instances, int columns) {
    InstanceTable table(scalarSchema(columns));
    std::uniform_int_distribution<int> value(0, 9);
    for (int id = 1; id <= instances; ++id) {
        std::vector<double> row;
        for (int c = 0; c < columns; ++c) row.push_back(value(rng));
        table.addRow(static_cast<std::uint32_t>(id), row);
    }
    return table;
}

/// n^3 scene of random overlapping boxes painted with ids 1..instances,
/// random raw values and a two-column table. Later boxes overwrite earlier
/// ones, so some ids may end up without voxels.
inline Dataset fuzzScene(std::uint64_t seed, int n = 16, int instances = 12) {
    std::mt19937_64 rng(seed);
    Dataset ds;
    const GridDims dims{n, n, n, {1.0, 1.0, 1.0}};
    ds.raw.dims = dims;
    ds.seg.dims = dims;
    ds.raw.values.resize(dims.voxelCount());
    ds.seg.ids.assign(dims.voxelCount(), 0);
    std::uniform_real_distribution<float> unit(0.0f, 1.0f);
    for (float& v : ds.raw.values) v = unit(rng);
    std::uniform_int_distribution<int> corner(0, n - 1);
    std::uniform_int_distribution<int> extent(1, std::max(1, n / 3));
    for (int id = 1; id <= instances; ++id) {
        const int x0 = corner(rng), y0 = corner(rng), z0 = corner(rng);
        const int ex = extent(rng), ey = extent(rng), ez = extent(rng);
        for (int z = z0; z < std::min(n, z0 + ez); ++z) {
            for (int y = y0; y < std::min(n, y0 + ey); ++y) {
                for (int x = x0; x < std::min(n, x0 + ex); ++x) ds.seg.ids[dims.index(x, y, z)] = static_cast<std::uint32_t>(id);
            }
        }
    }
    ds.table = randomTable(rng, instances, 2);
    return ds;
}

inline Primitive sphere(const Vec3& center, double radius) {
    Primitive p;
    p.shape = Shape::Sphere;
    p.center = center;
    p.radii = {radius, radius, radius};
    return p;
}

/// Noise-free synthetic scene holding exactly the given primitives (ids in order).
inline Dataset primitiveScene(const GridDims& dims, std::vector<Primitive> primitives) {
    SceneSpec spec;
    spec.dims = dims;
    spec.fixed = std::move(primitives);
    spec.noiseAmplitude = 0.0;
    spec.gap = 0.0;
    return generateSynthetic(spec, 1);
}

} // namespace fixtures
