#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <unordered_map>
#include <vector>

#include "conductor/vec.hpp"

namespace conductor {

/// Voxel grid shape. Voxel (i, j, k) has its center at ((i, j, k) + 0.5) * spacing,
/// so the volume occupies the box [0, n * spacing] on every axis.
struct GridDims {
    int nx = 1;
    int ny = 1;
    int nz = 1;
    Vec3 spacing{1.0, 1.0, 1.0};

    /// Throws conductor::Error on non-positive counts or spacings.
    void validate() const;

    std::size_t voxelCount() const {
        return static_cast<std::size_t>(nx) * static_cast<std::size_t>(ny) * static_cast<std::size_t>(nz);
    }
    /// x-fastest, z-slowest.
    std::size_t index(int x, int y, int z) const {
        return (static_cast<std::size_t>(z) * static_cast<std::size_t>(ny) + static_cast<std::size_t>(y)) *
                   static_cast<std::size_t>(nx) +
               static_cast<std::size_t>(x);
    }
    std::array<int, 3> coords(std::size_t index) const;
    Vec3 voxelCenter(int x, int y, int z) const {
        return {(x + 0.5) * spacing.x, (y + 0.5) * spacing.y, (z + 0.5) * spacing.z};
    }
    Vec3 voxelCenter(std::size_t index) const;
    Vec3 extent() const { return {nx * spacing.x, ny * spacing.y, nz * spacing.z}; }
    double voxelVolume() const { return spacing.x * spacing.y * spacing.z; }
    double minSpacing() const;
    bool contains(const Vec3& world) const;
    /// Index of the voxel whose cell contains the point, or nullopt outside the grid.
    std::optional<std::size_t> nearestVoxel(const Vec3& world) const;

    friend bool operator==(const GridDims&, const GridDims&) = default;
};

/// Continuous voxel-space coordinates of a trilinear sample: the lower corner
/// voxel and the fractional weights along each axis. Samples are clamped to the
/// outermost voxel centers.
struct TrilinearCell {
    std::array<int, 3> lo{};
    std::array<int, 3> hi{};
    std::array<double, 3> frac{};
};
TrilinearCell trilinearCell(const GridDims& dims, const Vec3& world);

enum class RawDType { U8, F32 };

struct RawVolume {
    GridDims dims;
    /// Normalized to [0, 1].
    std::vector<float> values;
    /// The payload as read from disk, kept so saving reproduces it byte for byte.
    /// Empty for generated volumes, which are written as f32 of `values`.
    RawDType sourceType = RawDType::F32;
    std::vector<std::uint8_t> sourcePayload;

    double at(int x, int y, int z) const { return values[dims.index(x, y, z)]; }
    double sample(const Vec3& world) const;
};

struct SegmentationVolume {
    GridDims dims;
    /// 0 is background.
    std::vector<std::uint32_t> ids;

    /// Nearest-voxel label; 0 outside the grid.
    std::uint32_t labelAt(const Vec3& world) const;
};

enum class AttributeKind { Scalar, Vector3 };

struct AttributeDef {
    std::string name;
    AttributeKind kind = AttributeKind::Scalar;

    friend bool operator==(const AttributeDef&, const AttributeDef&) = default;
};

class AttributeSchema {
public:
    AttributeSchema() = default;
    /// Throws on duplicate or empty names. An empty list is allowed only for
    /// datasets with no instances.
    explicit AttributeSchema(std::vector<AttributeDef> attributes);

    const std::vector<AttributeDef>& attributes() const { return attributes_; }
    std::optional<std::size_t> find(std::string_view name) const;
    /// Number of doubles in one flattened row (scalar = 1, vector3 = 3).
    std::size_t rowWidth() const { return rowWidth_; }
    std::size_t offsetOf(std::size_t attribute) const { return offsets_[attribute]; }

    friend bool operator==(const AttributeSchema& a, const AttributeSchema& b) {
        return a.attributes_ == b.attributes_;
    }

private:
    std::vector<AttributeDef> attributes_;
    std::vector<std::size_t> offsets_;
    std::size_t rowWidth_ = 0;
};

/// Per-instance attribute records plus the per-instance sparsification state.
///
/// Rows are stored in ascending id order. Predicates address scalar columns:
/// every scalar attribute, plus derived scalars for each vector3 attribute `a`:
/// `a.x`, `a.y`, `a.z`, `a.polar` (degrees between the undirected axis and +z,
/// in [0, 90]), `a.azimuth` (degrees in [0, 360) of the axis flipped into the
/// upper hemisphere) and `a.align_x|y|z` (absolute cosine with each axis).
class InstanceTable {
public:
    InstanceTable() = default;
    explicit InstanceTable(AttributeSchema schema);

    /// `values` is the flattened row in schema order. Ids must be >= 1 and
    /// strictly increasing across calls.
    void addRow(std::uint32_t id, std::vector<double> values);

    const AttributeSchema& schema() const { return schema_; }
    std::size_t size() const { return ids_.size(); }
    bool empty() const { return ids_.empty(); }
    std::span<const std::uint32_t> ids() const { return ids_; }
    std::uint32_t idAt(std::size_t row) const { return ids_[row]; }
    std::uint32_t maxId() const { return ids_.empty() ? 0 : ids_.back(); }
    std::optional<std::size_t> rowOf(std::uint32_t id) const;
    /// Dense id -> row lookup of size maxId() + 1; absent ids map to npos.
    std::vector<std::size_t> denseRowLookup() const;
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    std::span<const double> rowValues(std::size_t row) const;

    const std::vector<std::string>& scalarColumns() const { return scalarColumns_; }
    std::optional<std::size_t> scalarColumn(std::string_view name) const;
    double scalar(std::size_t row, std::size_t column) const {
        return scalars_[row * scalarColumns_.size() + column];
    }

    bool visible(std::size_t row) const { return visible_[row] != 0; }
    void setVisible(std::size_t row, bool v) { visible_[row] = v ? 1 : 0; }
    bool hiddenScratch(std::size_t row) const { return hidden_[row] != 0; }
    void setHiddenScratch(std::size_t row, bool v) { hidden_[row] = v ? 1 : 0; }
    void resetVisibility();

    /// Position of the row in the session shuffle order.
    std::uint32_t shuffleRank(std::size_t row) const { return shuffleRank_[row]; }
    /// Instance ids in shuffle order.
    std::vector<std::uint32_t> shuffleOrder() const;
    /// Reseeds the shuffle order with a Fisher-Yates pass driven by mt19937_64.
    void shuffle(std::uint64_t seed);

private:
    void buildScalarColumns();
    void appendScalars(std::span<const double> values);

    AttributeSchema schema_;
    std::vector<std::uint32_t> ids_;
    std::vector<double> values_;
    std::vector<std::string> scalarColumns_;
    std::unordered_map<std::string, std::size_t> scalarIndex_;
    std::vector<double> scalars_;
    std::vector<std::uint8_t> visible_;
    std::vector<std::uint8_t> hidden_;
    std::vector<std::uint32_t> shuffleRank_;
};

struct GradientField {
    GridDims dims;
    /// World-space gradient per voxel.
    std::vector<std::array<float, 3>> grad;
    double maxMagnitude = 0.0;

    Vec3 at(std::size_t index) const {
        const auto& g = grad[index];
        return {g[0], g[1], g[2]};
    }
    /// Trilinearly interpolated gradient.
    Vec3 sample(const Vec3& world) const;
};

struct Dataset {
    RawVolume raw;
    SegmentationVolume seg;
    InstanceTable table;
};

/// Loads a dataset descriptor (JSON plus headerless volume payloads). Raw
/// values are min-max normalized to [0, 1]. Throws conductor::Error naming the
/// offending field on any inconsistency.
Dataset loadDataset(const std::filesystem::path& descriptorPath);

/// Writes `<dir>/<name>.json`, `<name>.raw` and `<name>.seg`. Returns the
/// descriptor path.
std::filesystem::path saveDataset(const Dataset& dataset, const std::filesystem::path& dir,
                                  const std::string& name);

/// Checks the cross-volume invariants of a dataset.
void validateDataset(const Dataset& dataset);

/// Central differences divided by (2 * spacing); one-sided at the boundary.
GradientField computeGradients(const RawVolume& raw);

std::vector<std::size_t> voxelsOfInstance(const SegmentationVolume& seg, std::uint32_t id);

/// Voxel count per instance id, indexed densely up to maxId; entry 0 is background.
std::vector<std::size_t> voxelCountsById(const SegmentationVolume& seg, std::uint32_t maxId);

} // namespace conductor
