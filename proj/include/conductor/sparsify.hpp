#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "conductor/grouping.hpp"
#include "conductor/vec.hpp"
#include "conductor/voldata.hpp"
#include "json.hpp"

namespace conductor {

enum class SparsifyMode { Uniform, Depth, ContextPreserving };

/// Blinn-Phong terms of the context-preserving shading factor.
struct ShadingCoefficients {
    double ambient = 0.1;
    double diffuse = 0.7;
    double specular = 0.2;
    double shininess = 32.0;
};

struct SparsifyParams {
    SparsifyMode mode = SparsifyMode::Uniform;
    /// Camera (and headlight) position used by the depth and context modes.
    Vec3 cameraPos;
    /// Cut depth.
    double kappaT = 1.0;
    /// Cut sharpness.
    double kappaS = 1.0;
    std::uint64_t rngSeed = 0;
    ShadingCoefficients shading;

    /// Throws conductor::Error on negative or non-finite kappas.
    void validate() const;
};

/// Mean per-voxel importance, indexed by table row.
struct ImportanceTable {
    std::vector<double> importance;
};

double importanceUniform(const Vec3& x);

/// Distance to the camera divided by `normalizer`.
double importanceDepth(const Vec3& x, const Vec3& camera, double normalizer = 1.0);

/// Headlight Blinn-Phong intensity at x, clamped to [0, 1]. The light sits at
/// the camera, so the half vector equals the light direction. Gradients are
/// treated as two-sided normals; a zero gradient yields the ambient term only.
double headlightShading(const Vec3& gradient, const Vec3& x, const Vec3& camera, const ShadingCoefficients& k);

/// g^((kappaT * s * pd)^kappaS) with 0^0 = 1. All inputs normalized.
double contextImportance(double gradientMagnitude, double shading, double depth, double kappaT, double kappaS);

/// Context-preserving importance of a voxel. The gradient magnitude is divided
/// by `maxMagnitude` and the depth term by `depthNormalizer` (clamped to 1).
double importanceContext(const Vec3& x, const Vec3& gradient, double maxMagnitude, const Vec3& camera, double kappaT,
                         double kappaS, double depthNormalizer, const ShadingCoefficients& k = {});

/// Diameter of the volume's bounding sphere.
double sceneDiameter(const GridDims& dims);

/// Arithmetic mean of the per-voxel importance over each instance's voxels.
/// Instances without voxels get 0. `gradients` is required for the context
/// mode only. Summation order is fixed, so results do not depend on the
/// number of worker threads.
ImportanceTable aggregateImportance(const SegmentationVolume& seg, const InstanceTable& table,
                                    const SparsifyParams& params, const GradientField* gradients);

/// floor((1 - f) * size), tolerant of round-off just below an integer.
std::size_t hideCount(double visibleFraction, std::size_t groupSize);

/// Hides the lowest-importance instances of every group until exactly
/// hideCount(f, |G|) are hidden, giving previously hidden instances priority.
/// Sort key is (importance, shuffle rank). Background instances are untouched.
/// Returns the hidden count per group (index 0 unused).
std::vector<std::size_t> sparsifyGroups(const std::vector<LinearPredicate>& predicates, const GroupAssignment& assignment,
                                        const ImportanceTable& importances, InstanceTable& table);

SparsifyParams sparsifyParamsFromJson(const nlohmann::json& doc, const SparsifyParams& base = {});
nlohmann::json sparsifyParamsToJson(const SparsifyParams& params);
const char* sparsifyModeName(SparsifyMode mode);

} // namespace conductor
