#pragma once

#include <cstdint>
#include <optional>
#include <utility>
#include <vector>

#include "conductor/grouping.hpp"
#include "conductor/mask.hpp"
#include "conductor/vec.hpp"
#include "conductor/voldata.hpp"
#include "json.hpp"

namespace conductor {

struct Ray {
    Vec3 origin;
    Vec3 dir;
};

struct Camera {
    Vec3 eye{0.0, 0.0, -1.0};
    Vec3 target;
    Vec3 up{0.0, 1.0, 0.0};
    double fovYDegrees = 45.0;
    int width = 256;
    int height = 256;

    /// Throws conductor::Error for eye == target, FOV outside (0, 180),
    /// empty images or an up vector parallel to the view direction.
    void validate() const;
    /// Ray through the center of pixel (px, py); row 0 is the top row.
    Ray ray(int px, int py) const;
    std::uint64_t hash() const;

    /// Looks at the volume center from `direction` (pointing from the center
    /// towards the eye), far enough for the bounding sphere to fill the view.
    static Camera framing(const GridDims& dims, const Vec3& direction, int width, int height, double fovYDegrees = 35.0);
};

struct BlendWeights {
    double wColor = 0.0;
    double wTransfer = 0.0;
    double wAlpha = 0.0;

    void validate() const;
};

/// Mask/raw blending of one sample: colors lerp by wColor; the mask opacity
/// is transferred onto the raw opacity by wTransfer, then lerped towards the
/// raw opacity by wAlpha.
Rgba blendSample(const Rgba& mask, const Rgba& raw, const BlendWeights& w);
double blendAlpha(double maskAlpha, double rawAlpha, const BlendWeights& w);

/// Piecewise-linear scalar -> RGBA map over [0, 1].
class RawTransferFunction {
public:
    /// Grey ramp, transparent below 0.25.
    RawTransferFunction();
    /// Control points must be sorted by position, start at 0 and end at 1.
    explicit RawTransferFunction(std::vector<std::pair<double, Rgba>> points);

    Rgba operator()(double value) const;
    const std::vector<std::pair<double, Rgba>>& points() const { return points_; }

private:
    std::vector<std::pair<double, Rgba>> points_;
};

struct RenderSettings {
    bool shading = false;
    double ambient = 0.3;
    Rgba background{0.0, 0.0, 0.0, 1.0};
    /// Minimum classified opacity for a sample to claim the ID buffer.
    double idThreshold = 0.05;
    /// Step length as a fraction of the smallest voxel spacing.
    double stepScale = 0.5;
    double earlyTermination = 0.99;

    void validate() const;
};

/// Group index per instance id (dense), or -1 when the instance is hidden or absent.
std::vector<int> visibleGroupLookup(const InstanceTable& table, const GroupAssignment& assignment);

/// Everything a frame needs; all pointers must outlive the render call.
/// `gradients` is only read when shading is on.
struct SceneView {
    const RawVolume* raw = nullptr;
    const GradientField* gradients = nullptr;
    const SegmentationVolume* seg = nullptr;
    const VisibilityMask* mask = nullptr;
    const TransferFunction2D* tfMask = nullptr;
    const RawTransferFunction* tfRaw = nullptr;
    const std::vector<int>* visibleGroups = nullptr;
    BlendWeights weights;
    RenderSettings settings;
};

struct FrameSet {
    int width = 0;
    int height = 0;
    /// Premultiplied composite over the background, row-major, top row first.
    std::vector<Rgba> color;
    /// Nearest visible instance per pixel (0 = none) and its group.
    std::vector<std::uint32_t> ids;
    std::vector<int> groups;

    /// 8-bit straight-alpha RGBA.
    std::vector<std::uint8_t> toRgba8() const;
};

/// Mask and raw volume sampled trilinearly at p, classified and blended.
Rgba classifySample(const Vec3& p, const VisibilityMask& mask, const TransferFunction2D& tfMask, const RawVolume& raw,
                    const RawTransferFunction& tfRaw, const BlendWeights& weights);

/// Front-to-back emission-absorption raycast with the ID pass.
FrameSet renderFrame(const SceneView& scene, const Camera& camera);

/// The ID pass alone: same samples and opacity decisions as renderFrame.
std::pair<std::vector<std::uint32_t>, std::vector<int>> renderIdOnly(const SceneView& scene, const Camera& camera);

/// Raw-volume-only raycast that never reads the mask; same sampling as renderFrame.
FrameSet renderRawOnly(const RawVolume& raw, const RawTransferFunction& tfRaw, const GradientField* gradients,
                       const RenderSettings& settings, const Camera& camera);

/// Headerless 32-bit little-endian id grid.
std::vector<std::uint8_t> idBufferBytes(const std::vector<std::uint32_t>& ids);

Camera cameraFromJson(const nlohmann::json& doc, const Camera& base = {});
nlohmann::json cameraToJson(const Camera& camera);
BlendWeights blendWeightsFromJson(const nlohmann::json& doc, const BlendWeights& base = {});
nlohmann::json blendWeightsToJson(const BlendWeights& weights);
RawTransferFunction rawTransferFunctionFromJson(const nlohmann::json& doc);
nlohmann::json rawTransferFunctionToJson(const RawTransferFunction& tf);
RenderSettings renderSettingsFromJson(const nlohmann::json& doc, const RenderSettings& base = {});
nlohmann::json renderSettingsToJson(const RenderSettings& settings);

} // namespace conductor
