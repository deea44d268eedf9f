#include "conductor/mask.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>

#include "conductor/error.hpp"
#include "conductor/parallel.hpp"
#include "json.hpp"

namespace conductor {

namespace {
constexpr int kCenterLevel = kMaskLevels / 2;
} // namespace

MaskValue maskValue(int k, int groupCount) {
    if (k < 0 || k > groupCount) {
        throw Error("maskValue: group " + std::to_string(k) + " outside 0.." + std::to_string(groupCount));
    }
    if (k == 0) return {0.5, 0.5};
    const double phi = 2.0 * std::numbers::pi * (k - 1) / groupCount;
    return {0.5 + 0.5 * std::cos(phi), 0.5 + 0.5 * std::sin(phi)};
}

std::uint8_t quantizeMaskComponent(double value) {
    return static_cast<std::uint8_t>(std::lround(std::clamp(value, 0.0, 1.0) * kMaskLevels));
}

MaskValue VisibilityMask::sample(const Vec3& world) const {
    const TrilinearCell c = trilinearCell(dims, world);
    MaskValue out{0.0, 0.0};
    for (int corner = 0; corner < 8; ++corner) {
        const int x = (corner & 1) ? c.hi[0] : c.lo[0];
        const int y = (corner & 2) ? c.hi[1] : c.lo[1];
        const int z = (corner & 4) ? c.hi[2] : c.lo[2];
        const double w = ((corner & 1) ? c.frac[0] : 1.0 - c.frac[0]) * ((corner & 2) ? c.frac[1] : 1.0 - c.frac[1]) *
                         ((corner & 4) ? c.frac[2] : 1.0 - c.frac[2]);
        const std::size_t v = dims.index(x, y, z);
        // Offsets from the center level keep pure background exactly at 0.5.
        out.u += w * (values[2 * v] - kCenterLevel);
        out.v += w * (values[2 * v + 1] - kCenterLevel);
    }
    return {0.5 + out.u / kMaskLevels, 0.5 + out.v / kMaskLevels};
}

VisibilityMask buildVisibilityMask(const SegmentationVolume& seg, const InstanceTable& table,
                                   const GroupAssignment& assignment, int groupCount) {
    if (assignment.groupOfRow.size() != table.size()) throw Error("mask: assignment does not cover the instance table");
    const std::uint8_t center = quantizeMaskComponent(0.5);

    // Per-instance mask value, then a flat per-voxel copy.
    std::vector<std::array<std::uint8_t, 2>> byId(static_cast<std::size_t>(table.maxId()) + 1, {center, center});
    for (std::size_t row = 0; row < table.size(); ++row) {
        const int group = assignment.groupOfRow[row];
        if (group == 0 || !table.visible(row)) continue;
        const MaskValue m = maskValue(group, groupCount);
        byId[table.idAt(row)] = {quantizeMaskComponent(m.u), quantizeMaskComponent(m.v)};
    }

    VisibilityMask mask;
    mask.dims = seg.dims;
    const std::size_t count = seg.ids.size();
    mask.values.resize(2 * count);
    parallelFor(count, [&](std::size_t begin, std::size_t end) {
        for (std::size_t v = begin; v < end; ++v) {
            const std::uint32_t id = seg.ids[v];
            const auto& m = id < byId.size() ? byId[id] : byId[0];
            mask.values[2 * v] = m[0];
            mask.values[2 * v + 1] = m[1];
        }
    }, 1 << 16);
    return mask;
}

TransferFunction2D::TransferFunction2D(std::vector<Rgba> groupColors, int resolution)
    : colors_(std::move(groupColors)), resolution_(resolution) {
    if (resolution < 64) throw Error("transfer function: resolution must be >= 64");
    texels_.resize(static_cast<std::size_t>(resolution) * static_cast<std::size_t>(resolution) * 4);
    auto to8 = [](double x) { return static_cast<std::uint8_t>(std::lround(std::clamp(x, 0.0, 1.0) * 255.0)); };
    for (int j = 0; j < resolution; ++j) {
        for (int i = 0; i < resolution; ++i) {
            const Rgba c = lookup({(i + 0.5) / resolution, (j + 0.5) / resolution});
            const std::size_t o = (static_cast<std::size_t>(j) * static_cast<std::size_t>(resolution) + static_cast<std::size_t>(i)) * 4;
            texels_[o] = to8(c.r);
            texels_[o + 1] = to8(c.g);
            texels_[o + 2] = to8(c.b);
            texels_[o + 3] = to8(c.a);
        }
    }
}

int TransferFunction2D::sectorOf(const MaskValue& m) const {
    const double du = m.u - 0.5;
    const double dv = m.v - 0.5;
    if (colors_.empty() || (du == 0.0 && dv == 0.0)) return 0;
    double theta = std::atan2(dv, du);
    if (theta < 0.0) theta += 2.0 * std::numbers::pi;
    const int n = groupCount();
    const long sector = std::lround(theta * n / (2.0 * std::numbers::pi)) % n;
    return static_cast<int>(sector) + 1;
}

Rgba TransferFunction2D::lookup(const MaskValue& m) const {
    const int k = sectorOf(m);
    if (k == 0) return {};
    const double r = std::hypot(m.u - 0.5, m.v - 0.5);
    Rgba c = colors_[static_cast<std::size_t>(k - 1)];
    c.a *= std::min(1.0, 2.0 * r);
    return c;
}

Rgba TransferFunction2D::lookupTexture(const MaskValue& m) const {
    if (resolution_ == 0) return {};
    const double x = std::clamp(m.u * resolution_ - 0.5, 0.0, resolution_ - 1.0);
    const double y = std::clamp(m.v * resolution_ - 0.5, 0.0, resolution_ - 1.0);
    const int x0 = std::min(static_cast<int>(x), resolution_ - 2);
    const int y0 = std::min(static_cast<int>(y), resolution_ - 2);
    const double fx = x - x0;
    const double fy = y - y0;
    auto texel = [&](int i, int j, int ch) {
        return texels_[(static_cast<std::size_t>(j) * static_cast<std::size_t>(resolution_) + static_cast<std::size_t>(i)) * 4 +
                       static_cast<std::size_t>(ch)] /
               255.0;
    };
    double out[4];
    for (int ch = 0; ch < 4; ++ch) {
        const double a = texel(x0, y0, ch) * (1 - fx) + texel(x0 + 1, y0, ch) * fx;
        const double b = texel(x0, y0 + 1, ch) * (1 - fx) + texel(x0 + 1, y0 + 1, ch) * fx;
        out[ch] = a * (1 - fy) + b * fy;
    }
    return {out[0], out[1], out[2], out[3]};
}

TransferFunction2D buildTransferFunction(const std::vector<Rgba>& groupColors, int resolution) {
    return TransferFunction2D(groupColors, resolution);
}

Rgba sampleMaskClassified(const VisibilityMask& mask, const TransferFunction2D& tf, const Vec3& p) {
    if (!mask.dims.contains(p)) return {};
    return tf.lookup(mask.sample(p));
}

void exportMask(const VisibilityMask& mask, const std::filesystem::path& dir, const std::string& name) {
    std::filesystem::create_directories(dir);
    const std::string file = name + ".mask";
    {
        std::ofstream out(dir / file, std::ios::binary | std::ios::trunc);
        if (!out) throw Error("cannot write '" + (dir / file).string() + "'");
        out.write(reinterpret_cast<const char*>(mask.values.data()), static_cast<std::streamsize>(mask.values.size()));
    }
    nlohmann::json doc{{"dims", {mask.dims.nx, mask.dims.ny, mask.dims.nz}},
                       {"spacing", {mask.dims.spacing.x, mask.dims.spacing.y, mask.dims.spacing.z}},
                       {"mask", {{"file", file}, {"dtype", "u8x2"}, {"levels", kMaskLevels}}}};
    std::ofstream out(dir / (name + ".mask.json"), std::ios::trunc);
    out << doc.dump(2) << '\n';
}

} // namespace conductor
