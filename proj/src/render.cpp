#include "conductor/render.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <limits>
#include <numbers>

#include "conductor/error.hpp"
#include "conductor/parallel.hpp"

namespace conductor {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Camera

void Camera::validate() const {
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(eye[a]) || !std::isfinite(target[a]) || !std::isfinite(up[a])) {
            throw Error("camera: eye, target and up must be finite");
        }
    }
    if (eye == target) throw Error("camera: eye must differ from target");
    if (!(fovYDegrees > 0.0 && fovYDegrees < 180.0)) throw Error("camera.fov: must be in (0, 180) degrees");
    if (width < 1 || height < 1) throw Error("camera: image size must be at least 1x1");
    if (length(cross(normalize(target - eye), normalize(up))) < 1e-9) {
        throw Error("camera.up: must not be parallel to the view direction");
    }
}

Ray Camera::ray(int px, int py) const {
    const Vec3 forward = normalize(target - eye);
    const Vec3 right = normalize(cross(forward, up));
    const Vec3 trueUp = cross(right, forward);
    const double tanHalf = std::tan(fovYDegrees * std::numbers::pi / 360.0);
    const double aspect = static_cast<double>(width) / static_cast<double>(height);
    const double sx = (2.0 * (px + 0.5) / width - 1.0) * tanHalf * aspect;
    const double sy = (1.0 - 2.0 * (py + 0.5) / height) * tanHalf;
    return {eye, normalize(forward + right * sx + trueUp * sy)};
}

std::uint64_t Camera::hash() const {
    // FNV-1a over the field bytes.
    std::uint64_t h = 1469598103934665603ull;
    auto mix = [&h](const void* data, std::size_t n) {
        const auto* bytes = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h ^= bytes[i];
            h *= 1099511628211ull;
        }
    };
    for (const Vec3* v : {&eye, &target, &up}) {
        for (int a = 0; a < 3; ++a) {
            const double x = (*v)[a];
            mix(&x, sizeof x);
        }
    }
    mix(&fovYDegrees, sizeof fovYDegrees);
    mix(&width, sizeof width);
    mix(&height, sizeof height);
    return h;
}

Camera Camera::framing(const GridDims& dims, const Vec3& direction, int width, int height, double fovYDegrees) {
    Camera c;
    c.target = dims.extent() * 0.5;
    const double radius = 0.5 * length(dims.extent());
    const double distance = radius / std::sin(fovYDegrees * std::numbers::pi / 360.0);
    const Vec3 dir = normalize(direction);
    c.eye = c.target + dir * distance;
    c.up = std::abs(dir.z) > 0.99 ? Vec3{0.0, 1.0, 0.0} : Vec3{0.0, 0.0, 1.0};
    c.fovYDegrees = fovYDegrees;
    c.width = width;
    c.height = height;
    return c;
}

// ---------------------------------------------------------------------------
// Blending and transfer functions

void BlendWeights::validate() const {
    for (double w : {wColor, wTransfer, wAlpha}) {
        if (!(w >= 0.0 && w <= 1.0)) throw Error("blend: weights must be in [0, 1]");
    }
}

double blendAlpha(double maskAlpha, double rawAlpha, const BlendWeights& w) {
    const double transferred = (1.0 - w.wTransfer) * maskAlpha + w.wTransfer * maskAlpha * rawAlpha;
    return (1.0 - w.wAlpha) * transferred + w.wAlpha * rawAlpha;
}

Rgba blendSample(const Rgba& mask, const Rgba& raw, const BlendWeights& w) {
    return {(1.0 - w.wColor) * mask.r + w.wColor * raw.r, (1.0 - w.wColor) * mask.g + w.wColor * raw.g,
            (1.0 - w.wColor) * mask.b + w.wColor * raw.b, blendAlpha(mask.a, raw.a, w)};
}

RawTransferFunction::RawTransferFunction()
    : points_{{0.0, {0.0, 0.0, 0.0, 0.0}}, {0.25, {0.3, 0.3, 0.3, 0.0}}, {1.0, {1.0, 1.0, 1.0, 0.6}}} {}

RawTransferFunction::RawTransferFunction(std::vector<std::pair<double, Rgba>> points) : points_(std::move(points)) {
    if (points_.size() < 2) throw Error("rawTF: at least two control points are required");
    if (points_.front().first != 0.0 || points_.back().first != 1.0) {
        throw Error("rawTF: control points must start at 0 and end at 1");
    }
    for (std::size_t i = 0; i < points_.size(); ++i) {
        const Rgba& c = points_[i].second;
        for (double x : {c.r, c.g, c.b, c.a}) {
            if (!(x >= 0.0 && x <= 1.0)) throw Error("rawTF: color components must be in [0, 1]");
        }
        if (i > 0 && !(points_[i].first >= points_[i - 1].first)) {
            throw Error("rawTF: control points must be sorted by position");
        }
    }
}

Rgba RawTransferFunction::operator()(double value) const {
    const double x = std::clamp(value, 0.0, 1.0);
    auto it = std::upper_bound(points_.begin(), points_.end(), x,
                               [](double v, const std::pair<double, Rgba>& p) { return v < p.first; });
    if (it == points_.begin()) return points_.front().second;
    if (it == points_.end()) return points_.back().second;
    const auto& [x1, c1] = *it;
    const auto& [x0, c0] = *(it - 1);
    const double t = x1 > x0 ? (x - x0) / (x1 - x0) : 1.0;
    return {c0.r + (c1.r - c0.r) * t, c0.g + (c1.g - c0.g) * t, c0.b + (c1.b - c0.b) * t, c0.a + (c1.a - c0.a) * t};
}

void RenderSettings::validate() const {
    if (!(idThreshold > 0.0 && idThreshold <= 1.0)) throw Error("render.idThreshold: must be in (0, 1]");
    if (!(stepScale > 0.0 && stepScale <= 4.0)) throw Error("render.stepScale: must be in (0, 4]");
    if (!(earlyTermination > 0.0 && earlyTermination <= 1.0)) throw Error("render.earlyTermination: must be in (0, 1]");
    if (!(ambient >= 0.0 && ambient <= 1.0)) throw Error("render.ambient: must be in [0, 1]");
}

std::vector<int> visibleGroupLookup(const InstanceTable& table, const GroupAssignment& assignment) {
    std::vector<int> lookup(static_cast<std::size_t>(table.maxId()) + 1, -1);
    for (std::size_t row = 0; row < table.size(); ++row) {
        if (table.visible(row)) lookup[table.idAt(row)] = assignment.groupOfRow[row];
    }
    return lookup;
}

std::vector<std::uint8_t> FrameSet::toRgba8() const {
    std::vector<std::uint8_t> out(color.size() * 4);
    auto to8 = [](double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
    for (std::size_t i = 0; i < color.size(); ++i) {
        const Rgba& c = color[i];
        const double inv = c.a > 0.0 ? 1.0 / c.a : 0.0;
        out[4 * i] = to8(c.r * inv);
        out[4 * i + 1] = to8(c.g * inv);
        out[4 * i + 2] = to8(c.b * inv);
        out[4 * i + 3] = to8(c.a);
    }
    return out;
}

std::vector<std::uint8_t> idBufferBytes(const std::vector<std::uint32_t>& ids) {
    std::vector<std::uint8_t> out(ids.size() * 4);
    for (std::size_t i = 0; i < ids.size(); ++i) {
        for (int b = 0; b < 4; ++b) out[4 * i + static_cast<std::size_t>(b)] = static_cast<std::uint8_t>(ids[i] >> (8 * b));
    }
    return out;
}

Rgba classifySample(const Vec3& p, const VisibilityMask& mask, const TransferFunction2D& tfMask, const RawVolume& raw,
                    const RawTransferFunction& tfRaw, const BlendWeights& weights) {
    const Rgba m = sampleMaskClassified(mask, tfMask, p);
    const Rgba r = raw.dims.contains(p) ? tfRaw(raw.sample(p)) : Rgba{};
    return blendSample(m, r, weights);
}

// ---------------------------------------------------------------------------
// Ray marching

namespace {

/// Precomputed corner indices and weights of one trilinear sample, shared by
/// every volume on the grid.
struct Stencil {
    std::size_t index[8];
    double weight[8];

    Stencil(const GridDims& dims, const Vec3& p) {
        const TrilinearCell c = trilinearCell(dims, p);
        for (int corner = 0; corner < 8; ++corner) {
            const int x = (corner & 1) ? c.hi[0] : c.lo[0];
            const int y = (corner & 2) ? c.hi[1] : c.lo[1];
            const int z = (corner & 4) ? c.hi[2] : c.lo[2];
            index[corner] = dims.index(x, y, z);
            weight[corner] = ((corner & 1) ? c.frac[0] : 1.0 - c.frac[0]) * ((corner & 2) ? c.frac[1] : 1.0 - c.frac[1]) *
                             ((corner & 4) ? c.frac[2] : 1.0 - c.frac[2]);
        }
    }

    double raw(const RawVolume& v) const {
        double s = 0.0;
        for (int i = 0; i < 8; ++i) s += weight[i] * v.values[index[i]];
        return s;
    }
    /// Returns false when every corner is background (center level).
    bool mask(const VisibilityMask& m, MaskValue& out) const {
        constexpr int center = kMaskLevels / 2;
        double u = 0.0;
        double v = 0.0;
        bool any = false;
        for (int i = 0; i < 8; ++i) {
            const int qu = m.values[2 * index[i]] - center;
            const int qv = m.values[2 * index[i] + 1] - center;
            any = any || qu != 0 || qv != 0;
            u += weight[i] * qu;
            v += weight[i] * qv;
        }
        out = {0.5 + u / kMaskLevels, 0.5 + v / kMaskLevels};
        return any;
    }
    Vec3 gradient(const GradientField& g) const {
        Vec3 s;
        for (int i = 0; i < 8; ++i) {
            const auto& d = g.grad[index[i]];
            s.x += weight[i] * d[0];
            s.y += weight[i] * d[1];
            s.z += weight[i] * d[2];
        }
        return s;
    }
};

bool intersectBox(const Ray& ray, const Vec3& extent, double& tNear, double& tFar) {
    tNear = 0.0;
    tFar = std::numeric_limits<double>::infinity();
    for (int a = 0; a < 3; ++a) {
        if (ray.dir[a] == 0.0) {
            if (ray.origin[a] < 0.0 || ray.origin[a] > extent[a]) return false;
            continue;
        }
        const double inv = 1.0 / ray.dir[a];
        double t0 = (0.0 - ray.origin[a]) * inv;
        double t1 = (extent[a] - ray.origin[a]) * inv;
        if (t0 > t1) std::swap(t0, t1);
        tNear = std::max(tNear, t0);
        tFar = std::min(tFar, t1);
    }
    return tNear < tFar;
}

enum class Pass { Full, IdOnly, RawOnly };

struct PixelResult {
    Rgba color;
    std::uint32_t id = 0;
    int group = 0;
};

struct MarchInputs {
    const GridDims* dims;
    const RawVolume* raw;
    const RawTransferFunction* tfRaw;
    const GradientField* gradients;
    const SegmentationVolume* seg;
    const VisibilityMask* mask;
    const TransferFunction2D* tfMask;
    const std::vector<int>* visibleGroups;
    BlendWeights weights;
    RenderSettings settings;
};

template <Pass kPass>
PixelResult march(const MarchInputs& in, const Ray& ray) {
    PixelResult out;
    double tNear = 0.0;
    double tFar = 0.0;
    if (!intersectBox(ray, in.dims->extent(), tNear, tFar)) return out;
    const double step = in.dims->minSpacing() * in.settings.stepScale;
    const bool shading = kPass != Pass::IdOnly && in.settings.shading && in.gradients != nullptr;
    const Vec3 lightDir = -ray.dir;
    double accR = 0.0;
    double accG = 0.0;
    double accB = 0.0;
    double accA = 0.0;
    bool idFound = kPass == Pass::RawOnly;
    for (long i = 0;; ++i) {
        const double t = tNear + (static_cast<double>(i) + 0.5) * step;
        if (t > tFar) break;
        const Vec3 p = ray.origin + ray.dir * t;
        const Stencil stencil(*in.dims, p);
        const Rgba rawColor = (*in.tfRaw)(stencil.raw(*in.raw));

        Rgba sample;
        if constexpr (kPass == Pass::RawOnly) {
            sample = rawColor;
        } else {
            MaskValue m;
            Rgba maskColor;
            if (stencil.mask(*in.mask, m)) maskColor = in.tfMask->lookup(m);
            if constexpr (kPass == Pass::Full) {
                sample = blendSample(maskColor, rawColor, in.weights);
            } else {
                sample.a = blendAlpha(maskColor.a, rawColor.a, in.weights);
            }
        }
        const double alpha = sample.a;

        if (!idFound && alpha >= in.settings.idThreshold) {
            const std::uint32_t id = in.seg->labelAt(p);
            if (id != 0 && id < in.visibleGroups->size() && (*in.visibleGroups)[id] >= 0) {
                out.id = id;
                out.group = (*in.visibleGroups)[id];
                idFound = true;
            }
        }
        if (alpha > 0.0) {
            if constexpr (kPass != Pass::IdOnly) {
                double light = 1.0;
                if (shading) {
                    const Vec3 g = stencil.gradient(*in.gradients);
                    if (length(g) > 0.0) light = std::max(dot(-normalize(g), lightDir), in.settings.ambient);
                }
                const double w = (1.0 - accA) * alpha;
                accR += w * sample.r * light;
                accG += w * sample.g * light;
                accB += w * sample.b * light;
            }
            accA += (1.0 - accA) * alpha;
        }
        if (accA >= in.settings.earlyTermination) break;
    }
    out.color = {accR, accG, accB, accA};
    return out;
}

template <Pass kPass>
void renderPixels(const MarchInputs& in, const Camera& camera, FrameSet& frame) {
    const int w = camera.width;
    const int h = camera.height;
    frame.width = w;
    frame.height = h;
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    if constexpr (kPass != Pass::IdOnly) frame.color.assign(n, Rgba{});
    frame.ids.assign(n, 0);
    frame.groups.assign(n, 0);
    const Rgba bg = in.settings.background;
    parallelFor(
        static_cast<std::size_t>(h),
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t row = begin; row < end; ++row) {
                for (int x = 0; x < w; ++x) {
                    const std::size_t pixel = row * static_cast<std::size_t>(w) + static_cast<std::size_t>(x);
                    const PixelResult r = march<kPass>(in, camera.ray(x, static_cast<int>(row)));
                    frame.ids[pixel] = r.id;
                    frame.groups[pixel] = r.group;
                    if constexpr (kPass != Pass::IdOnly) {
                        const double rest = (1.0 - r.color.a) * bg.a;
                        frame.color[pixel] = {r.color.r + rest * bg.r, r.color.g + rest * bg.g, r.color.b + rest * bg.b,
                                              r.color.a + rest};
                    }
                }
            }
        },
        1);
}

MarchInputs inputsOf(const SceneView& scene) {
    if (!scene.raw || !scene.seg || !scene.mask || !scene.tfMask || !scene.tfRaw || !scene.visibleGroups) {
        throw Error("render: incomplete scene");
    }
    if (!(scene.raw->dims == scene.seg->dims) || !(scene.mask->dims == scene.seg->dims)) {
        throw Error("render: raw, segmentation and mask grids differ");
    }
    if (scene.gradients && !(scene.gradients->dims == scene.raw->dims)) throw Error("render: gradient grid differs");
    scene.weights.validate();
    scene.settings.validate();
    return {&scene.raw->dims, scene.raw,  scene.tfRaw,         scene.gradients, scene.seg,
            scene.mask,       scene.tfMask, scene.visibleGroups, scene.weights,   scene.settings};
}

} // namespace

FrameSet renderFrame(const SceneView& scene, const Camera& camera) {
    camera.validate();
    const MarchInputs in = inputsOf(scene);
    FrameSet frame;
    renderPixels<Pass::Full>(in, camera, frame);
    return frame;
}

std::pair<std::vector<std::uint32_t>, std::vector<int>> renderIdOnly(const SceneView& scene, const Camera& camera) {
    camera.validate();
    const MarchInputs in = inputsOf(scene);
    FrameSet frame;
    renderPixels<Pass::IdOnly>(in, camera, frame);
    return {std::move(frame.ids), std::move(frame.groups)};
}

FrameSet renderRawOnly(const RawVolume& raw, const RawTransferFunction& tfRaw, const GradientField* gradients,
                       const RenderSettings& settings, const Camera& camera) {
    camera.validate();
    settings.validate();
    if (gradients && !(gradients->dims == raw.dims)) throw Error("render: gradient grid differs");
    MarchInputs in{&raw.dims, &raw, &tfRaw, gradients, nullptr, nullptr, nullptr, nullptr, BlendWeights{1.0, 0.0, 1.0}, settings};
    FrameSet frame;
    renderPixels<Pass::RawOnly>(in, camera, frame);
    return frame;
}

// ---------------------------------------------------------------------------
// JSON

namespace {

Vec3 vec3FromJson(const json& v, const std::string& where) {
    if (!v.is_array() || v.size() != 3) throw Error(where + ": expected [x, y, z]");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>()};
}

json vec3ToJson(const Vec3& v) { return {v.x, v.y, v.z}; }

Rgba rgbaFromJson(const json& v, const std::string& where) {
    if (!v.is_array() || (v.size() != 3 && v.size() != 4)) throw Error(where + ": expected [r, g, b] or [r, g, b, a]");
    return {v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v.size() == 4 ? v[3].get<double>() : 1.0};
}

} // namespace

Camera cameraFromJson(const json& doc, const Camera& base) {
    if (!doc.is_object()) throw Error("camera: expected an object");
    Camera c = base;
    try {
        if (doc.contains("eye")) c.eye = vec3FromJson(doc.at("eye"), "camera.eye");
        if (doc.contains("target")) c.target = vec3FromJson(doc.at("target"), "camera.target");
        if (doc.contains("up")) c.up = vec3FromJson(doc.at("up"), "camera.up");
        c.fovYDegrees = doc.value("fov", c.fovYDegrees);
        c.width = doc.value("width", c.width);
        c.height = doc.value("height", c.height);
    } catch (const json::exception& e) {
        throw Error(std::string("camera: ") + e.what());
    }
    c.validate();
    return c;
}

json cameraToJson(const Camera& c) {
    return {{"eye", vec3ToJson(c.eye)}, {"target", vec3ToJson(c.target)}, {"up", vec3ToJson(c.up)},
            {"fov", c.fovYDegrees},     {"width", c.width},               {"height", c.height}};
}

BlendWeights blendWeightsFromJson(const json& doc, const BlendWeights& base) {
    if (!doc.is_object()) throw Error("blend: expected an object");
    BlendWeights w = base;
    try {
        w.wColor = doc.value("wColor", w.wColor);
        w.wTransfer = doc.value("wTransfer", w.wTransfer);
        w.wAlpha = doc.value("wAlpha", w.wAlpha);
    } catch (const json::exception& e) {
        throw Error(std::string("blend: ") + e.what());
    }
    w.validate();
    return w;
}

json blendWeightsToJson(const BlendWeights& w) {
    return {{"wColor", w.wColor}, {"wTransfer", w.wTransfer}, {"wAlpha", w.wAlpha}};
}

RawTransferFunction rawTransferFunctionFromJson(const json& doc) {
    const json& points = doc.is_object() && doc.contains("points") ? doc.at("points") : doc;
    if (!points.is_array()) throw Error("rawTF: expected an array of {x, color}");
    std::vector<std::pair<double, Rgba>> out;
    try {
        for (std::size_t i = 0; i < points.size(); ++i) {
            const json& p = points[i];
            const std::string where = "rawTF[" + std::to_string(i) + "]";
            if (!p.is_object() || !p.contains("x") || !p.contains("color")) throw Error(where + ": expected {x, color}");
            out.emplace_back(p.at("x").get<double>(), rgbaFromJson(p.at("color"), where + ".color"));
        }
    } catch (const json::exception& e) {
        throw Error(std::string("rawTF: ") + e.what());
    }
    return RawTransferFunction(std::move(out));
}

json rawTransferFunctionToJson(const RawTransferFunction& tf) {
    json out = json::array();
    for (const auto& [x, c] : tf.points()) out.push_back({{"x", x}, {"color", {c.r, c.g, c.b, c.a}}});
    return out;
}

RenderSettings renderSettingsFromJson(const json& doc, const RenderSettings& base) {
    if (!doc.is_object()) throw Error("render: expected an object");
    RenderSettings s = base;
    try {
        s.shading = doc.value("shading", s.shading);
        s.ambient = doc.value("ambient", s.ambient);
        if (doc.contains("background")) s.background = rgbaFromJson(doc.at("background"), "render.background");
        s.idThreshold = doc.value("idThreshold", s.idThreshold);
        s.stepScale = doc.value("stepScale", s.stepScale);
        s.earlyTermination = doc.value("earlyTermination", s.earlyTermination);
    } catch (const json::exception& e) {
        throw Error(std::string("render: ") + e.what());
    }
    s.validate();
    return s;
}

json renderSettingsToJson(const RenderSettings& s) {
    return {{"shading", s.shading},
            {"ambient", s.ambient},
            {"background", {s.background.r, s.background.g, s.background.b, s.background.a}},
            {"idThreshold", s.idThreshold},
            {"stepScale", s.stepScale},
            {"earlyTermination", s.earlyTermination}};
}

} // namespace conductor
