#include "conductor/synthetic.hpp"

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <string>

#include "conductor/error.hpp"

namespace conductor {

using nlohmann::json;

namespace {

/// 53-bit uniform in [0, 1); std distributions are implementation-defined.
double unitDouble(std::mt19937_64& rng) { return static_cast<double>(rng() >> 11) * 0x1.0p-53; }

double uniform(std::mt19937_64& rng, double lo, double hi) { return lo + (hi - lo) * unitDouble(rng); }

Vec3 randomUnitVector(std::mt19937_64& rng) {
    const double z = uniform(rng, -1.0, 1.0);
    const double phi = uniform(rng, 0.0, 2.0 * std::numbers::pi);
    const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
    return {r * std::cos(phi), r * std::sin(phi), z};
}

std::array<Vec3, 3> frameFromMajor(const Vec3& major, double roll) {
    const Vec3 a = normalize(major);
    const Vec3 helper = std::abs(a.x) < 0.9 ? Vec3{1, 0, 0} : Vec3{0, 1, 0};
    const Vec3 u = normalize(cross(a, helper));
    const Vec3 v = cross(a, u);
    const Vec3 b = u * std::cos(roll) + v * std::sin(roll);
    return {a, b, cross(a, b)};
}

Vec3 canonicalAxis(Vec3 a) {
    if (a.z < 0.0 || (a.z == 0.0 && (a.y < 0.0 || (a.y == 0.0 && a.x < 0.0)))) a = -a;
    return a;
}

Vec3 jsonVec3(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3) throw Error(where + ": expected [x, y, z]");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

Shape parseShape(const std::string& name, const std::string& where) {
    if (name == "box") return Shape::Box;
    if (name == "sphere") return Shape::Sphere;
    if (name == "ellipsoid") return Shape::Ellipsoid;
    throw Error(where + ": unknown shape '" + name + "'");
}

const char* shapeName(Shape s) {
    switch (s) {
    case Shape::Box: return "box";
    case Shape::Sphere: return "sphere";
    case Shape::Ellipsoid: return "ellipsoid";
    }
    return "sphere";
}

PrimitiveClass parseClass(const json& doc, const char* key, const PrimitiveClass& base) {
    PrimitiveClass c = base;
    if (!doc.contains(key)) return c;
    const json& j = doc.at(key);
    c.count = j.value("count", c.count);
    if (j.contains("size")) {
        const json& s = j.at("size");
        if (!s.is_array() || s.size() != 2) throw Error(std::string("scene.") + key + ".size: expected [min, max]");
        c.minSize = s[0].get<double>();
        c.maxSize = s[1].get<double>();
    }
    if (c.count < 0 || !(c.minSize > 0.0) || c.maxSize < c.minSize) {
        throw Error(std::string("scene.") + key + ": count must be >= 0 and 0 < min <= max");
    }
    return c;
}

} // namespace

double Primitive::boundingRadius() const {
    if (shape == Shape::Box) return length(radii);
    return std::max({radii.x, radii.y, radii.z});
}

double Primitive::normalizedDistance(const Vec3& world) const {
    const Vec3 d = world - center;
    const Vec3 local{dot(d, axes[0]) / radii.x, dot(d, axes[1]) / radii.y, dot(d, axes[2]) / radii.z};
    if (shape == Shape::Box) return std::max({std::abs(local.x), std::abs(local.y), std::abs(local.z)});
    return length(local);
}

SceneSpec SceneSpec::preset(int n) {
    SceneSpec s;
    const double size = n;
    s.dims = GridDims{n, n, n, {1.0, 1.0, 1.0}};
    // Sizes grow with sqrt(scale) and counts with scale^1.5, so the occupied
    // volume fraction stays that of the 64^3 scene.
    const double scale = size / 64.0;
    const double grow = std::sqrt(scale);
    const int count = std::max(1, static_cast<int>(std::lround(40.0 * scale * grow)));
    s.boxes = {count, 1.5 * grow, 3.0 * grow};
    s.spheres = {count, 1.5 * grow, 3.5 * grow};
    s.ellipsoids = {std::max(2, static_cast<int>(std::lround(6.0 * grow))), 2.5 * grow, 4.0 * grow};
    s.ellipsoidsOnDiagonal = true;
    Primitive center;
    center.shape = Shape::Sphere;
    center.center = {size / 2, size / 2, size / 2};
    const double r = size / 8.0;
    center.radii = {r, r, r};
    s.fixed.push_back(center);
    s.gap = std::max(1.0, grow);
    return s;
}

SceneSpec sceneSpecFromJson(const json& doc) {
    if (!doc.is_object()) throw Error("scene: expected an object");
    SceneSpec s;
    try {
        if (doc.contains("preset")) {
            const int n = doc.at("preset").get<int>();
            if (n < 8) throw Error("scene.preset: grid size must be >= 8");
            s = SceneSpec::preset(n);
        }
        if (doc.contains("dims")) {
            const json& d = doc.at("dims");
            if (!d.is_array() || d.size() != 3) throw Error("scene.dims: expected [nx, ny, nz]");
            s.dims.nx = d[0].get<int>();
            s.dims.ny = d[1].get<int>();
            s.dims.nz = d[2].get<int>();
        }
        if (doc.contains("spacing")) s.dims.spacing = jsonVec3(doc.at("spacing"), "scene.spacing");
        s.dims.validate();
        s.boxes = parseClass(doc, "boxes", s.boxes);
        s.spheres = parseClass(doc, "spheres", s.spheres);
        s.ellipsoids = parseClass(doc, "ellipsoids", s.ellipsoids);
        if (doc.contains("ellipsoids")) s.ellipsoidsOnDiagonal = doc.at("ellipsoids").value("diagonal", s.ellipsoidsOnDiagonal);
        s.noiseAmplitude = doc.value("noise", s.noiseAmplitude);
        s.gap = doc.value("gap", s.gap);
        s.maxAttempts = doc.value("max_attempts", s.maxAttempts);
        for (const json& f : doc.value("fixed", json::array())) {
            Primitive p;
            p.shape = parseShape(f.value("shape", std::string("sphere")), "scene.fixed.shape");
            p.center = jsonVec3(f.at("center"), "scene.fixed.center");
            if (f.contains("radius")) {
                const double r = f.at("radius").get<double>();
                p.radii = {r, r, r};
            } else {
                p.radii = jsonVec3(f.at("radii"), "scene.fixed.radii");
            }
            if (f.contains("axis")) p.axes = frameFromMajor(jsonVec3(f.at("axis"), "scene.fixed.axis"), 0.0);
            if (!(p.radii.x > 0 && p.radii.y > 0 && p.radii.z > 0)) throw Error("scene.fixed.radii: must be > 0");
            s.fixed.push_back(p);
        }
    } catch (const json::exception& e) {
        throw Error(std::string("scene: ") + e.what());
    }
    if (s.maxAttempts < 1) throw Error("scene.max_attempts: must be >= 1");
    return s;
}

json sceneSpecToJson(const SceneSpec& s) {
    auto cls = [](const PrimitiveClass& c) { return json{{"count", c.count}, {"size", {c.minSize, c.maxSize}}}; };
    json doc;
    doc["dims"] = {s.dims.nx, s.dims.ny, s.dims.nz};
    doc["spacing"] = {s.dims.spacing.x, s.dims.spacing.y, s.dims.spacing.z};
    doc["boxes"] = cls(s.boxes);
    doc["spheres"] = cls(s.spheres);
    doc["ellipsoids"] = cls(s.ellipsoids);
    doc["ellipsoids"]["diagonal"] = s.ellipsoidsOnDiagonal;
    doc["noise"] = s.noiseAmplitude;
    doc["gap"] = s.gap;
    doc["max_attempts"] = s.maxAttempts;
    json fixed = json::array();
    for (const auto& p : s.fixed) {
        fixed.push_back({{"shape", shapeName(p.shape)},
                         {"center", {p.center.x, p.center.y, p.center.z}},
                         {"radii", {p.radii.x, p.radii.y, p.radii.z}},
                         {"axis", {p.axes[0].x, p.axes[0].y, p.axes[0].z}}});
    }
    doc["fixed"] = fixed;
    return doc;
}

AttributeSchema syntheticSchema() {
    return AttributeSchema({{"shape", AttributeKind::Scalar},
                            {"volume", AttributeKind::Scalar},
                            {"centroid", AttributeKind::Vector3},
                            {"orientation", AttributeKind::Vector3},
                            {"elongation", AttributeKind::Scalar},
                            {"surface_voxels", AttributeKind::Scalar}});
}

Dataset generateSynthetic(const SceneSpec& spec, std::uint64_t seed) {
    spec.dims.validate();
    const GridDims& dims = spec.dims;
    std::mt19937_64 rng(seed);
    const Vec3 extent = dims.extent();

    std::vector<Primitive> placed;
    auto overlaps = [&](const Primitive& p) {
        for (const auto& q : placed) {
            if (length(p.center - q.center) < p.boundingRadius() + q.boundingRadius() + spec.gap) return true;
        }
        return false;
    };
    for (const auto& f : spec.fixed) placed.push_back(f);

    auto placeClass = [&](const PrimitiveClass& cls, Shape shape) {
        for (int i = 0; i < cls.count; ++i) {
            bool ok = false;
            for (int attempt = 0; attempt < spec.maxAttempts && !ok; ++attempt) {
                Primitive p;
                p.shape = shape;
                const double size = uniform(rng, cls.minSize, cls.maxSize);
                if (shape == Shape::Sphere) {
                    p.radii = {size, size, size};
                } else if (shape == Shape::Box) {
                    p.radii = {size, uniform(rng, cls.minSize, size), uniform(rng, cls.minSize, size)};
                    p.axes = frameFromMajor(randomUnitVector(rng), uniform(rng, 0.0, 2.0 * std::numbers::pi));
                } else {
                    const double minor = size * uniform(rng, 0.3, 0.55);
                    p.radii = {size, minor, minor * uniform(rng, 0.8, 1.0)};
                    const Vec3 major = spec.ellipsoidsOnDiagonal ? normalize(extent) : randomUnitVector(rng);
                    p.axes = frameFromMajor(major, uniform(rng, 0.0, 2.0 * std::numbers::pi));
                }
                const double r = p.boundingRadius();
                bool fits = true;
                for (int a = 0; a < 3; ++a) fits = fits && extent[a] > 2.0 * r;
                if (!fits) continue;
                if (shape == Shape::Ellipsoid && spec.ellipsoidsOnDiagonal) {
                    const double t = uniform(rng, 0.0, 1.0);
                    const double jitter = 0.08 * length(extent);
                    p.center = extent * t + Vec3{uniform(rng, -jitter, jitter), uniform(rng, -jitter, jitter),
                                                 uniform(rng, -jitter, jitter)};
                    bool inside = true;
                    for (int a = 0; a < 3; ++a) inside = inside && p.center[a] >= r && p.center[a] <= extent[a] - r;
                    if (!inside) continue;
                } else {
                    p.center = {uniform(rng, r, extent.x - r), uniform(rng, r, extent.y - r), uniform(rng, r, extent.z - r)};
                }
                if (overlaps(p)) continue;
                placed.push_back(p);
                ok = true;
            }
            if (!ok) {
                throw Error(std::string("scene: placement failed for ") + shapeName(shape) + " #" + std::to_string(i) +
                            " after " + std::to_string(spec.maxAttempts) + " attempts");
            }
        }
    };
    // Diagonal ellipsoids need a free corridor, so they go before the random classes.
    if (spec.ellipsoidsOnDiagonal) placeClass(spec.ellipsoids, Shape::Ellipsoid);
    placeClass(spec.boxes, Shape::Box);
    placeClass(spec.spheres, Shape::Sphere);
    if (!spec.ellipsoidsOnDiagonal) placeClass(spec.ellipsoids, Shape::Ellipsoid);

    Dataset ds;
    ds.raw.dims = dims;
    ds.seg.dims = dims;
    const std::size_t count = dims.voxelCount();
    ds.seg.ids.assign(count, 0);
    std::vector<double> value(count, 0.05);

    // Voxelize in placement order; ids follow that order.
    for (std::size_t i = 0; i < placed.size(); ++i) {
        const Primitive& p = placed[i];
        const auto id = static_cast<std::uint32_t>(i + 1);
        const double r = p.boundingRadius();
        std::array<int, 3> lo{};
        std::array<int, 3> hi{};
        const std::array<int, 3> n{dims.nx, dims.ny, dims.nz};
        for (int a = 0; a < 3; ++a) {
            lo[a] = std::clamp(static_cast<int>(std::floor((p.center[a] - r) / dims.spacing[a])) - 1, 0, n[a] - 1);
            hi[a] = std::clamp(static_cast<int>(std::ceil((p.center[a] + r) / dims.spacing[a])) + 1, 0, n[a] - 1);
        }
        for (int z = lo[2]; z <= hi[2]; ++z) {
            for (int y = lo[1]; y <= hi[1]; ++y) {
                for (int x = lo[0]; x <= hi[0]; ++x) {
                    const double rho = p.normalizedDistance(dims.voxelCenter(x, y, z));
                    if (rho > 1.0) continue;
                    const std::size_t v = dims.index(x, y, z);
                    ds.seg.ids[v] = id;
                    value[v] = 0.35 + 0.6 * (1.0 - rho * rho);
                }
            }
        }
    }

    ds.raw.values.resize(count);
    for (std::size_t v = 0; v < count; ++v) {
        const double noise = spec.noiseAmplitude * (2.0 * unitDouble(rng) - 1.0);
        ds.raw.values[v] = static_cast<float>(std::clamp(value[v] + noise, 0.0, 1.0));
    }

    // Per-instance moments.
    const std::size_t m = placed.size();
    std::vector<std::size_t> voxels(m + 1, 0);
    std::vector<std::size_t> surface(m + 1, 0);
    std::vector<Eigen::Vector3d> sum(m + 1, Eigen::Vector3d::Zero());
    std::vector<Eigen::Matrix3d> outer(m + 1, Eigen::Matrix3d::Zero());
    for (int z = 0; z < dims.nz; ++z) {
        for (int y = 0; y < dims.ny; ++y) {
            for (int x = 0; x < dims.nx; ++x) {
                const std::uint32_t id = ds.seg.ids[dims.index(x, y, z)];
                if (id == 0) continue;
                const Vec3 c = dims.voxelCenter(x, y, z);
                const Eigen::Vector3d e(c.x, c.y, c.z);
                ++voxels[id];
                sum[id] += e;
                outer[id] += e * e.transpose();
                const bool border = x == 0 || y == 0 || z == 0 || x == dims.nx - 1 || y == dims.ny - 1 || z == dims.nz - 1;
                if (border || ds.seg.ids[dims.index(x - 1, y, z)] != id || ds.seg.ids[dims.index(x + 1, y, z)] != id ||
                    ds.seg.ids[dims.index(x, y - 1, z)] != id || ds.seg.ids[dims.index(x, y + 1, z)] != id ||
                    ds.seg.ids[dims.index(x, y, z - 1)] != id || ds.seg.ids[dims.index(x, y, z + 1)] != id) {
                    ++surface[id];
                }
            }
        }
    }

    ds.table = InstanceTable(syntheticSchema());
    // Each voxel is a solid cell; its own second moment keeps the covariance
    // positive definite for thin or single-voxel instances.
    const Eigen::Vector3d cellVariance(dims.spacing.x * dims.spacing.x / 12.0, dims.spacing.y * dims.spacing.y / 12.0,
                                       dims.spacing.z * dims.spacing.z / 12.0);
    for (std::size_t i = 0; i < m; ++i) {
        const std::size_t id = i + 1;
        const Primitive& p = placed[i];
        Vec3 centroid = p.center;
        Vec3 orientation = canonicalAxis(p.axes[0]);
        double elongation = 1.0;
        if (voxels[id] > 0) {
            const double n = static_cast<double>(voxels[id]);
            const Eigen::Vector3d mean = sum[id] / n;
            Eigen::Matrix3d cov = outer[id] / n - mean * mean.transpose();
            cov.diagonal() += cellVariance;
            Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> solver(cov);
            const Eigen::Vector3d lambda = solver.eigenvalues();
            const Eigen::Vector3d axis = solver.eigenvectors().col(2);
            centroid = {mean.x(), mean.y(), mean.z()};
            orientation = canonicalAxis(normalize(Vec3{axis.x(), axis.y(), axis.z()}));
            elongation = std::sqrt(lambda(2) / lambda(0));
        }
        ds.table.addRow(static_cast<std::uint32_t>(id),
                        {static_cast<double>(p.shape), static_cast<double>(voxels[id]) * dims.voxelVolume(), centroid.x,
                         centroid.y, centroid.z, orientation.x, orientation.y, orientation.z, elongation,
                         static_cast<double>(surface[id])});
    }
    return ds;
}

} // namespace conductor
