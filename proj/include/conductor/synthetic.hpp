#pragma once

#include <array>
#include <cstdint>
#include <vector>

#include "conductor/vec.hpp"
#include "conductor/voldata.hpp"
#include "json.hpp"

namespace conductor {

enum class Shape { Box = 0, Sphere = 1, Ellipsoid = 2 };

/// A placed primitive. `radii` are half-extents along the local axes; `axes`
/// is an orthonormal frame whose first vector is the major axis.
struct Primitive {
    Shape shape = Shape::Sphere;
    Vec3 center;
    Vec3 radii{1.0, 1.0, 1.0};
    std::array<Vec3, 3> axes{Vec3{1, 0, 0}, Vec3{0, 1, 0}, Vec3{0, 0, 1}};

    double boundingRadius() const;
    /// Normalized distance from the center: < 1 inside, 1 on the surface.
    double normalizedDistance(const Vec3& world) const;
};

struct PrimitiveClass {
    int count = 0;
    /// World-unit range for radii / half-extents.
    double minSize = 2.0;
    double maxSize = 4.0;
};

struct SceneSpec {
    GridDims dims{32, 32, 32, {1.0, 1.0, 1.0}};
    PrimitiveClass boxes;
    PrimitiveClass spheres;
    PrimitiveClass ellipsoids;
    /// Places ellipsoids along the volume's main diagonal, oriented with it.
    bool ellipsoidsOnDiagonal = false;
    /// Placed first, in order, before any random primitive.
    std::vector<Primitive> fixed;
    double noiseAmplitude = 0.02;
    /// Minimum clearance between bounding spheres, world units.
    double gap = 1.0;
    int maxAttempts = 2000;

    /// Uniform boxes and spheres, diagonal ellipsoids and one large central
    /// sphere, scaled to an n^3 grid.
    static SceneSpec preset(int n);
};

SceneSpec sceneSpecFromJson(const nlohmann::json& doc);
nlohmann::json sceneSpecToJson(const SceneSpec& spec);

/// Deterministic for a fixed seed. Attributes per instance: shape (0 box,
/// 1 sphere, 2 ellipsoid), volume, centroid, orientation (unit principal axis),
/// elongation and surface_voxels. Throws conductor::Error when a primitive
/// cannot be placed within maxAttempts.
Dataset generateSynthetic(const SceneSpec& spec, std::uint64_t seed);

/// The attribute schema produced by generateSynthetic.
AttributeSchema syntheticSchema();

} // namespace conductor
