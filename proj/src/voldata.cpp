#include "conductor/voldata.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>
#include <numbers>
#include <random>
#include <sstream>

#include "conductor/error.hpp"
#include "conductor/parallel.hpp"
#include "json.hpp"

namespace conductor {

namespace fs = std::filesystem;
using nlohmann::json;

static_assert(std::endian::native == std::endian::little, "volume payloads are read as little-endian");

void GridDims::validate() const {
    if (nx < 1 || ny < 1 || nz < 1) {
        throw Error("dims: voxel counts must be >= 1");
    }
    for (int a = 0; a < 3; ++a) {
        if (!(spacing[a] > 0.0) || !std::isfinite(spacing[a])) {
            throw Error("spacing: every component must be finite and > 0");
        }
    }
}

std::array<int, 3> GridDims::coords(std::size_t index) const {
    const auto sx = static_cast<std::size_t>(nx);
    const auto sy = static_cast<std::size_t>(ny);
    return {static_cast<int>(index % sx), static_cast<int>((index / sx) % sy), static_cast<int>(index / (sx * sy))};
}

Vec3 GridDims::voxelCenter(std::size_t index) const {
    const auto c = coords(index);
    return voxelCenter(c[0], c[1], c[2]);
}

double GridDims::minSpacing() const { return std::min({spacing.x, spacing.y, spacing.z}); }

bool GridDims::contains(const Vec3& world) const {
    const Vec3 e = extent();
    return world.x >= 0.0 && world.y >= 0.0 && world.z >= 0.0 && world.x <= e.x && world.y <= e.y && world.z <= e.z;
}

std::optional<std::size_t> GridDims::nearestVoxel(const Vec3& world) const {
    if (!contains(world)) return std::nullopt;
    const int x = std::min(nx - 1, static_cast<int>(world.x / spacing.x));
    const int y = std::min(ny - 1, static_cast<int>(world.y / spacing.y));
    const int z = std::min(nz - 1, static_cast<int>(world.z / spacing.z));
    return index(x, y, z);
}

TrilinearCell trilinearCell(const GridDims& dims, const Vec3& world) {
    TrilinearCell cell;
    const std::array<int, 3> n{dims.nx, dims.ny, dims.nz};
    for (int a = 0; a < 3; ++a) {
        const double u = std::clamp(world[a] / dims.spacing[a] - 0.5, 0.0, static_cast<double>(n[a] - 1));
        const int lo = std::min(static_cast<int>(u), std::max(0, n[a] - 2));
        cell.lo[a] = lo;
        cell.hi[a] = std::min(lo + 1, n[a] - 1);
        cell.frac[a] = u - lo;
    }
    return cell;
}

namespace {

template <typename Fetch>
double trilinear(const TrilinearCell& c, Fetch&& fetch) {
    const double c00 = fetch(c.lo[0], c.lo[1], c.lo[2]) * (1 - c.frac[0]) + fetch(c.hi[0], c.lo[1], c.lo[2]) * c.frac[0];
    const double c10 = fetch(c.lo[0], c.hi[1], c.lo[2]) * (1 - c.frac[0]) + fetch(c.hi[0], c.hi[1], c.lo[2]) * c.frac[0];
    const double c01 = fetch(c.lo[0], c.lo[1], c.hi[2]) * (1 - c.frac[0]) + fetch(c.hi[0], c.lo[1], c.hi[2]) * c.frac[0];
    const double c11 = fetch(c.lo[0], c.hi[1], c.hi[2]) * (1 - c.frac[0]) + fetch(c.hi[0], c.hi[1], c.hi[2]) * c.frac[0];
    const double c0 = c00 * (1 - c.frac[1]) + c10 * c.frac[1];
    const double c1 = c01 * (1 - c.frac[1]) + c11 * c.frac[1];
    return c0 * (1 - c.frac[2]) + c1 * c.frac[2];
}

} // namespace

double RawVolume::sample(const Vec3& world) const {
    const TrilinearCell cell = trilinearCell(dims, world);
    return trilinear(cell, [this](int x, int y, int z) { return static_cast<double>(values[dims.index(x, y, z)]); });
}

std::uint32_t SegmentationVolume::labelAt(const Vec3& world) const {
    const auto v = dims.nearestVoxel(world);
    return v ? ids[*v] : 0u;
}

Vec3 GradientField::sample(const Vec3& world) const {
    const TrilinearCell cell = trilinearCell(dims, world);
    Vec3 out;
    for (int a = 0; a < 3; ++a) {
        out[a] = trilinear(cell, [this, a](int x, int y, int z) {
            return static_cast<double>(grad[dims.index(x, y, z)][static_cast<std::size_t>(a)]);
        });
    }
    return out;
}

// ---------------------------------------------------------------------------
// AttributeSchema / InstanceTable

AttributeSchema::AttributeSchema(std::vector<AttributeDef> attributes) : attributes_(std::move(attributes)) {
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        if (attributes_[i].name.empty()) {
            throw Error("attributes.schema[" + std::to_string(i) + "].name: must not be empty");
        }
        for (std::size_t j = 0; j < i; ++j) {
            if (attributes_[j].name == attributes_[i].name) {
                throw Error("attributes.schema: duplicate attribute name '" + attributes_[i].name + "'");
            }
        }
        offsets_.push_back(rowWidth_);
        rowWidth_ += attributes_[i].kind == AttributeKind::Scalar ? 1 : 3;
    }
}

std::optional<std::size_t> AttributeSchema::find(std::string_view name) const {
    for (std::size_t i = 0; i < attributes_.size(); ++i) {
        if (attributes_[i].name == name) return i;
    }
    return std::nullopt;
}

InstanceTable::InstanceTable(AttributeSchema schema) : schema_(std::move(schema)) { buildScalarColumns(); }

void InstanceTable::buildScalarColumns() {
    scalarColumns_.clear();
    for (const auto& attr : schema_.attributes()) {
        if (attr.kind == AttributeKind::Scalar) {
            scalarColumns_.push_back(attr.name);
        } else {
            for (const char* suffix : {".x", ".y", ".z", ".polar", ".azimuth", ".align_x", ".align_y", ".align_z"}) {
                scalarColumns_.push_back(attr.name + suffix);
            }
        }
    }
    scalarIndex_.clear();
    for (std::size_t i = 0; i < scalarColumns_.size(); ++i) {
        scalarIndex_.emplace(scalarColumns_[i], i);
    }
}

void InstanceTable::appendScalars(std::span<const double> values) {
    constexpr double rad2deg = 180.0 / std::numbers::pi;
    for (std::size_t a = 0; a < schema_.attributes().size(); ++a) {
        const std::size_t off = schema_.offsetOf(a);
        if (schema_.attributes()[a].kind == AttributeKind::Scalar) {
            scalars_.push_back(values[off]);
            continue;
        }
        Vec3 v{values[off], values[off + 1], values[off + 2]};
        scalars_.push_back(v.x);
        scalars_.push_back(v.y);
        scalars_.push_back(v.z);
        const double len = length(v);
        if (len == 0.0) {
            for (int i = 0; i < 5; ++i) scalars_.push_back(0.0);
            continue;
        }
        Vec3 axis = v * (1.0 / len);
        if (axis.z < 0.0) axis = -axis;
        scalars_.push_back(std::acos(std::clamp(axis.z, -1.0, 1.0)) * rad2deg);
        double azimuth = std::atan2(axis.y, axis.x) * rad2deg;
        if (azimuth < 0.0) azimuth += 360.0;
        if (azimuth >= 360.0) azimuth -= 360.0;
        scalars_.push_back(azimuth);
        scalars_.push_back(std::abs(axis.x));
        scalars_.push_back(std::abs(axis.y));
        scalars_.push_back(std::abs(axis.z));
    }
}

void InstanceTable::addRow(std::uint32_t id, std::vector<double> values) {
    if (id == 0) throw Error("attributes.rows: instance id 0 is reserved for background");
    if (!ids_.empty() && id <= ids_.back()) {
        throw Error("attributes.rows: instance ids must be added in strictly increasing order (id " +
                    std::to_string(id) + ")");
    }
    if (values.size() != schema_.rowWidth()) {
        throw Error("attributes.rows[" + std::to_string(id) + "]: expected " + std::to_string(schema_.rowWidth()) +
                    " values, got " + std::to_string(values.size()));
    }
    for (double v : values) {
        if (!std::isfinite(v)) throw Error("attributes.rows[" + std::to_string(id) + "]: non-finite value");
    }
    ids_.push_back(id);
    values_.insert(values_.end(), values.begin(), values.end());
    appendScalars(values);
    visible_.push_back(1);
    hidden_.push_back(0);
    shuffleRank_.push_back(static_cast<std::uint32_t>(ids_.size() - 1));
}

std::optional<std::size_t> InstanceTable::rowOf(std::uint32_t id) const {
    const auto it = std::lower_bound(ids_.begin(), ids_.end(), id);
    if (it == ids_.end() || *it != id) return std::nullopt;
    return static_cast<std::size_t>(it - ids_.begin());
}

std::vector<std::size_t> InstanceTable::denseRowLookup() const {
    std::vector<std::size_t> lookup(static_cast<std::size_t>(maxId()) + 1, npos);
    for (std::size_t row = 0; row < ids_.size(); ++row) lookup[ids_[row]] = row;
    return lookup;
}

std::span<const double> InstanceTable::rowValues(std::size_t row) const {
    return std::span<const double>(values_).subspan(row * schema_.rowWidth(), schema_.rowWidth());
}

std::optional<std::size_t> InstanceTable::scalarColumn(std::string_view name) const {
    const auto it = scalarIndex_.find(std::string(name));
    if (it == scalarIndex_.end()) return std::nullopt;
    return it->second;
}

void InstanceTable::resetVisibility() {
    std::fill(visible_.begin(), visible_.end(), std::uint8_t{1});
    std::fill(hidden_.begin(), hidden_.end(), std::uint8_t{0});
}

std::vector<std::uint32_t> InstanceTable::shuffleOrder() const {
    std::vector<std::uint32_t> order(ids_.size());
    for (std::size_t row = 0; row < ids_.size(); ++row) order[shuffleRank_[row]] = ids_[row];
    return order;
}

void InstanceTable::shuffle(std::uint64_t seed) {
    // std::shuffle's draw sequence is implementation-defined; an explicit
    // Fisher-Yates over mt19937_64 keeps orders identical across toolchains.
    std::mt19937_64 rng(seed);
    std::vector<std::uint32_t> rows(ids_.size());
    for (std::size_t i = 0; i < rows.size(); ++i) rows[i] = static_cast<std::uint32_t>(i);
    for (std::size_t i = rows.size(); i > 1; --i) {
        const std::uint64_t bound = i;
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % bound;
        std::uint64_t draw = rng();
        while (draw >= limit) draw = rng();
        std::swap(rows[i - 1], rows[static_cast<std::size_t>(draw % bound)]);
    }
    for (std::size_t rank = 0; rank < rows.size(); ++rank) shuffleRank_[rows[rank]] = static_cast<std::uint32_t>(rank);
}

// ---------------------------------------------------------------------------
// Gradients

GradientField computeGradients(const RawVolume& raw) {
    const GridDims& d = raw.dims;
    GradientField field;
    field.dims = d;
    field.grad.resize(d.voxelCount());
    const std::size_t slices = static_cast<std::size_t>(d.nz);

    auto axisDerivative = [&](int x, int y, int z, int axis) {
        std::array<int, 3> c{x, y, z};
        const int n = axis == 0 ? d.nx : (axis == 1 ? d.ny : d.nz);
        if (n == 1) return 0.0;
        std::array<int, 3> lo = c;
        std::array<int, 3> hi = c;
        double span = 2.0;
        if (c[axis] == 0) {
            hi[axis] = 1;
            span = 1.0;
        } else if (c[axis] == n - 1) {
            lo[axis] = n - 2;
            span = 1.0;
        } else {
            lo[axis] -= 1;
            hi[axis] += 1;
        }
        return (raw.at(hi[0], hi[1], hi[2]) - raw.at(lo[0], lo[1], lo[2])) / (span * d.spacing[axis]);
    };

    std::vector<double> sliceMax(slices, 0.0);
    parallelFor(
        slices,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t zs = begin; zs < end; ++zs) {
                const int z = static_cast<int>(zs);
                double localMax = 0.0;
                for (int y = 0; y < d.ny; ++y) {
                    for (int x = 0; x < d.nx; ++x) {
                        const Vec3 g{axisDerivative(x, y, z, 0), axisDerivative(x, y, z, 1), axisDerivative(x, y, z, 2)};
                        field.grad[d.index(x, y, z)] = {static_cast<float>(g.x), static_cast<float>(g.y),
                                                        static_cast<float>(g.z)};
                        localMax = std::max(localMax, length(field.at(d.index(x, y, z))));
                    }
                }
                sliceMax[zs] = localMax;
            }
        },
        1);
    field.maxMagnitude = *std::max_element(sliceMax.begin(), sliceMax.end());
    return field;
}

std::vector<std::size_t> voxelsOfInstance(const SegmentationVolume& seg, std::uint32_t id) {
    std::vector<std::size_t> out;
    for (std::size_t v = 0; v < seg.ids.size(); ++v) {
        if (seg.ids[v] == id) out.push_back(v);
    }
    return out;
}

std::vector<std::size_t> voxelCountsById(const SegmentationVolume& seg, std::uint32_t maxId) {
    std::vector<std::size_t> counts(static_cast<std::size_t>(maxId) + 1, 0);
    for (std::uint32_t id : seg.ids) {
        if (id <= maxId) ++counts[id];
    }
    return counts;
}

// ---------------------------------------------------------------------------
// Descriptor I/O

namespace {

std::vector<std::uint8_t> readFile(const fs::path& path, const std::string& field) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw Error(field + ": cannot open '" + path.string() + "'");
    return std::vector<std::uint8_t>(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

void writeFile(const fs::path& path, std::span<const std::uint8_t> bytes) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write '" + path.string() + "'");
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

template <typename T>
std::vector<std::uint8_t> toBytes(std::span<const T> values) {
    std::vector<std::uint8_t> bytes(values.size_bytes());
    if (!bytes.empty()) std::memcpy(bytes.data(), values.data(), bytes.size());
    return bytes;
}

const json& require(const json& obj, const char* key, const std::string& path) {
    if (!obj.is_object() || !obj.contains(key)) throw Error(path + "." + key + ": missing");
    return obj.at(key);
}

std::vector<double> parseRow(const json& row, const AttributeSchema& schema, const std::string& path) {
    std::vector<double> out;
    out.reserve(schema.rowWidth());
    auto pushValue = [&](const json& v, const AttributeDef& attr, const std::string& where) {
        if (attr.kind == AttributeKind::Scalar) {
            if (!v.is_number()) throw Error(where + ": expected a number for scalar attribute '" + attr.name + "'");
            out.push_back(v.get<double>());
        } else {
            if (!v.is_array() || v.size() != 3 || !v[0].is_number() || !v[1].is_number() || !v[2].is_number()) {
                throw Error(where + ": expected [x, y, z] for vector3 attribute '" + attr.name + "'");
            }
            for (const auto& c : v) out.push_back(c.get<double>());
        }
    };
    const auto& attrs = schema.attributes();
    if (row.is_array()) {
        if (row.size() != attrs.size()) {
            throw Error(path + ": expected " + std::to_string(attrs.size()) + " values, got " + std::to_string(row.size()));
        }
        for (std::size_t a = 0; a < attrs.size(); ++a) pushValue(row[a], attrs[a], path + "[" + std::to_string(a) + "]");
    } else if (row.is_object()) {
        for (const auto& attr : attrs) {
            if (!row.contains(attr.name)) throw Error(path + "." + attr.name + ": missing");
            pushValue(row.at(attr.name), attr, path + "." + attr.name);
        }
    } else {
        throw Error(path + ": expected an array or object");
    }
    return out;
}

GridDims parseDims(const json& doc) {
    const json& dims = require(doc, "dims", "descriptor");
    if (!dims.is_array() || dims.size() != 3) throw Error("descriptor.dims: expected [nx, ny, nz]");
    GridDims g;
    try {
        g.nx = dims[0].get<int>();
        g.ny = dims[1].get<int>();
        g.nz = dims[2].get<int>();
        if (doc.contains("spacing")) {
            const json& s = doc.at("spacing");
            if (!s.is_array() || s.size() != 3) throw Error("descriptor.spacing: expected [sx, sy, sz]");
            g.spacing = {s[0].get<double>(), s[1].get<double>(), s[2].get<double>()};
        }
    } catch (const json::exception& e) {
        throw Error(std::string("descriptor.dims/spacing: ") + e.what());
    }
    g.validate();
    return g;
}

} // namespace

Dataset loadDataset(const fs::path& descriptorPath) {
    std::ifstream in(descriptorPath);
    if (!in) throw Error("descriptor: cannot open '" + descriptorPath.string() + "'");
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::exception& e) {
        throw Error(std::string("descriptor: malformed JSON: ") + e.what());
    }
    const fs::path base = descriptorPath.parent_path();
    Dataset ds;
    const GridDims dims = parseDims(doc);
    if (doc.contains("seg_dims")) {
        const json& sd = doc.at("seg_dims");
        if (!sd.is_array() || sd.size() != 3 || sd[0] != dims.nx || sd[1] != dims.ny || sd[2] != dims.nz) {
            throw Error("descriptor.seg_dims: segmentation dims must equal raw dims");
        }
    }
    const std::size_t count = dims.voxelCount();

    // Raw volume.
    {
        const json& raw = require(doc, "raw", "descriptor");
        const std::string file = require(raw, "file", "descriptor.raw").get<std::string>();
        const std::string dtype = raw.value("dtype", std::string("u8"));
        const std::string endianness = raw.value("endianness", std::string("little"));
        if (endianness != "little") throw Error("descriptor.raw.endianness: only 'little' is supported");
        auto bytes = readFile(base / file, "descriptor.raw.file");
        ds.raw.dims = dims;
        ds.raw.values.resize(count);
        std::vector<double> source(count);
        if (dtype == "u8") {
            if (bytes.size() != count) {
                throw Error("descriptor.raw.file: expected " + std::to_string(count) + " bytes, got " +
                            std::to_string(bytes.size()));
            }
            for (std::size_t i = 0; i < count; ++i) source[i] = bytes[i];
            ds.raw.sourceType = RawDType::U8;
        } else if (dtype == "f32") {
            if (bytes.size() != count * 4) {
                throw Error("descriptor.raw.file: expected " + std::to_string(count * 4) + " bytes, got " +
                            std::to_string(bytes.size()));
            }
            for (std::size_t i = 0; i < count; ++i) {
                float f;
                std::memcpy(&f, bytes.data() + i * 4, 4);
                if (!std::isfinite(f)) throw Error("descriptor.raw.file: non-finite value at voxel " + std::to_string(i));
                source[i] = f;
            }
            ds.raw.sourceType = RawDType::F32;
        } else {
            throw Error("descriptor.raw.dtype: unsupported '" + dtype + "' (expected u8 or f32)");
        }
        const auto [mn, mx] = std::minmax_element(source.begin(), source.end());
        const double lo = *mn;
        const double range = *mx - *mn;
        for (std::size_t i = 0; i < count; ++i) {
            ds.raw.values[i] = range > 0.0 ? static_cast<float>((source[i] - lo) / range) : 0.0f;
        }
        ds.raw.sourcePayload = std::move(bytes);
    }

    // Segmentation volume.
    {
        const json& seg = require(doc, "seg", "descriptor");
        const std::string file = require(seg, "file", "descriptor.seg").get<std::string>();
        const std::string dtype = seg.value("dtype", std::string("u32"));
        if (dtype != "u32") throw Error("descriptor.seg.dtype: unsupported '" + dtype + "' (expected u32)");
        if (seg.value("endianness", std::string("little")) != "little") {
            throw Error("descriptor.seg.endianness: only 'little' is supported");
        }
        const auto bytes = readFile(base / file, "descriptor.seg.file");
        if (bytes.size() != count * 4) {
            throw Error("descriptor.seg.file: dims mismatch, expected " + std::to_string(count * 4) + " bytes, got " +
                        std::to_string(bytes.size()));
        }
        ds.seg.dims = dims;
        ds.seg.ids.resize(count);
        std::memcpy(ds.seg.ids.data(), bytes.data(), bytes.size());
    }

    // Attributes.
    {
        const json& attributes = require(doc, "attributes", "descriptor");
        const json& schemaDoc = require(attributes, "schema", "descriptor.attributes");
        if (!schemaDoc.is_array()) throw Error("descriptor.attributes.schema: expected an array");
        std::vector<AttributeDef> defs;
        for (std::size_t i = 0; i < schemaDoc.size(); ++i) {
            const std::string where = "descriptor.attributes.schema[" + std::to_string(i) + "]";
            const json& entry = schemaDoc[i];
            AttributeDef def;
            def.name = require(entry, "name", where).get<std::string>();
            const std::string kind = entry.value("kind", std::string("scalar"));
            if (kind == "scalar") {
                def.kind = AttributeKind::Scalar;
            } else if (kind == "vector3") {
                def.kind = AttributeKind::Vector3;
            } else {
                throw Error(where + ".kind: unknown kind '" + kind + "'");
            }
            defs.push_back(std::move(def));
        }
        ds.table = InstanceTable(AttributeSchema(std::move(defs)));
        const json rows = attributes.value("rows", json::object());
        if (!rows.is_object()) throw Error("descriptor.attributes.rows: expected an object keyed by instance id");
        std::vector<std::pair<std::uint32_t, std::vector<double>>> parsed;
        for (const auto& [key, value] : rows.items()) {
            std::uint32_t id = 0;
            try {
                const unsigned long long raw = std::stoull(key);
                if (raw == 0 || raw > std::numeric_limits<std::uint32_t>::max()) throw std::out_of_range(key);
                id = static_cast<std::uint32_t>(raw);
            } catch (const std::exception&) {
                throw Error("descriptor.attributes.rows: invalid instance id '" + key + "'");
            }
            parsed.emplace_back(id, parseRow(value, ds.table.schema(), "descriptor.attributes.rows[" + key + "]"));
        }
        if (!parsed.empty() && ds.table.schema().attributes().empty()) {
            throw Error("descriptor.attributes.schema: at least one attribute is required");
        }
        std::sort(parsed.begin(), parsed.end(), [](const auto& a, const auto& b) { return a.first < b.first; });
        for (std::size_t i = 1; i < parsed.size(); ++i) {
            if (parsed[i].first == parsed[i - 1].first) {
                throw Error("descriptor.attributes.rows: duplicate instance id " + std::to_string(parsed[i].first));
            }
        }
        for (auto& [id, values] : parsed) ds.table.addRow(id, std::move(values));
    }
    validateDataset(ds);
    return ds;
}

void validateDataset(const Dataset& ds) {
    ds.raw.dims.validate();
    if (!(ds.raw.dims == ds.seg.dims)) throw Error("seg.dims: segmentation dims must equal raw dims");
    const std::size_t count = ds.raw.dims.voxelCount();
    if (ds.raw.values.size() != count) throw Error("raw: value count does not match dims");
    if (ds.seg.ids.size() != count) throw Error("seg: id count does not match dims");
    const std::uint32_t maxId = ds.table.maxId();
    std::vector<std::uint8_t> known(static_cast<std::size_t>(maxId) + 1, 0);
    for (std::uint32_t id : ds.table.ids()) known[id] = 1;
    for (std::uint32_t id : ds.seg.ids) {
        if (id != 0 && (id > maxId || !known[id])) {
            throw Error("instance " + std::to_string(id) + " has no attributes");
        }
    }
}

fs::path saveDataset(const Dataset& ds, const fs::path& dir, const std::string& name) {
    validateDataset(ds);
    fs::create_directories(dir);
    const GridDims& d = ds.raw.dims;
    json doc;
    doc["dims"] = {d.nx, d.ny, d.nz};
    doc["spacing"] = {d.spacing.x, d.spacing.y, d.spacing.z};

    const std::string rawFile = name + ".raw";
    if (!ds.raw.sourcePayload.empty()) {
        writeFile(dir / rawFile, ds.raw.sourcePayload);
        doc["raw"] = {{"file", rawFile}, {"dtype", ds.raw.sourceType == RawDType::U8 ? "u8" : "f32"}, {"endianness", "little"}};
    } else {
        writeFile(dir / rawFile, toBytes(std::span<const float>(ds.raw.values)));
        doc["raw"] = {{"file", rawFile}, {"dtype", "f32"}, {"endianness", "little"}};
    }
    const std::string segFile = name + ".seg";
    writeFile(dir / segFile, toBytes(std::span<const std::uint32_t>(ds.seg.ids)));
    doc["seg"] = {{"file", segFile}, {"dtype", "u32"}, {"endianness", "little"}};

    json schema = json::array();
    for (const auto& attr : ds.table.schema().attributes()) {
        schema.push_back({{"name", attr.name}, {"kind", attr.kind == AttributeKind::Scalar ? "scalar" : "vector3"}});
    }
    json rows = json::object();
    const auto& attrs = ds.table.schema().attributes();
    for (std::size_t row = 0; row < ds.table.size(); ++row) {
        const auto values = ds.table.rowValues(row);
        json r = json::array();
        for (std::size_t a = 0; a < attrs.size(); ++a) {
            const std::size_t off = ds.table.schema().offsetOf(a);
            if (attrs[a].kind == AttributeKind::Scalar) {
                r.push_back(values[off]);
            } else {
                r.push_back({values[off], values[off + 1], values[off + 2]});
            }
        }
        rows[std::to_string(ds.table.idAt(row))] = std::move(r);
    }
    doc["attributes"] = {{"schema", schema}, {"rows", rows}};

    const fs::path descriptor = dir / (name + ".json");
    std::ofstream out(descriptor, std::ios::trunc);
    if (!out) throw Error("cannot write '" + descriptor.string() + "'");
    out << doc.dump(2) << '\n';
    return descriptor;
}

} // namespace conductor
