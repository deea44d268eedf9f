#pragma once

#include <array>
#include <cstdint>
#include <filesystem>
#include <vector>

#include "conductor/grouping.hpp"
#include "conductor/vec.hpp"
#include "conductor/voldata.hpp"

namespace conductor {

/// Transfer-function coordinates in [0, 1]^2.
struct MaskValue {
    double u = 0.5;
    double v = 0.5;

    friend bool operator==(const MaskValue&, const MaskValue&) = default;
};

/// Background (k = 0) maps to the center; group k of N sits on the inscribed
/// circle at angle 2*pi*(k - 1)/N. Throws if k > N or k < 0.
MaskValue maskValue(int k, int groupCount);

/// Stored mask components use 254 levels so the center 0.5 is exact (127).
inline constexpr int kMaskLevels = 254;
std::uint8_t quantizeMaskComponent(double value);
inline double dequantizeMaskComponent(std::uint8_t q) { return static_cast<double>(q) / kMaskLevels; }

struct VisibilityMask {
    GridDims dims;
    /// Two quantized components per voxel, interleaved (u, v).
    std::vector<std::uint8_t> values;

    MaskValue at(std::size_t voxel) const {
        return {dequantizeMaskComponent(values[2 * voxel]), dequantizeMaskComponent(values[2 * voxel + 1])};
    }
    /// Componentwise trilinear interpolation of the dequantized mask.
    MaskValue sample(const Vec3& world) const;
};

/// Each voxel gets psi(group) of its instance when that instance is visible,
/// and psi(0) when it is hidden or background.
VisibilityMask buildVisibilityMask(const SegmentationVolume& seg, const InstanceTable& table,
                                   const GroupAssignment& assignment, int groupCount);

/// Circular 2D transfer function. Polar angle about the center selects the
/// group sector (nearest rim position); opacity ramps linearly with radius
/// from 0 at the center to the group alpha at the rim.
class TransferFunction2D {
public:
    TransferFunction2D() = default;
    /// `groupColors[k - 1]` is the color of group k. Throws if resolution < 64.
    TransferFunction2D(std::vector<Rgba> groupColors, int resolution = 256);

    int groupCount() const { return static_cast<int>(colors_.size()); }
    int resolution() const { return resolution_; }
    const std::vector<Rgba>& groupColors() const { return colors_; }

    /// Group index whose sector contains (u, v); 0 at the exact center.
    int sectorOf(const MaskValue& m) const;
    /// Exact analytic classification.
    Rgba lookup(const MaskValue& m) const;
    /// Bilinear lookup in the rasterized RGBA8 texture.
    Rgba lookupTexture(const MaskValue& m) const;
    /// Row-major RGBA8 texels, row = v.
    const std::vector<std::uint8_t>& texels() const { return texels_; }

private:
    std::vector<Rgba> colors_;
    int resolution_ = 0;
    std::vector<std::uint8_t> texels_;
};

TransferFunction2D buildTransferFunction(const std::vector<Rgba>& groupColors, int resolution = 256);

/// Interpolates the mask at p, then classifies (post-classification).
/// Transparent outside the volume.
Rgba sampleMaskClassified(const VisibilityMask& mask, const TransferFunction2D& tf, const Vec3& p);

/// Writes `<name>.mask` (2 bytes per voxel) and `<name>.mask.json`.
void exportMask(const VisibilityMask& mask, const std::filesystem::path& dir, const std::string& name);

} // namespace conductor
