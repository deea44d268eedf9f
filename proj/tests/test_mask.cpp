#include <doctest.h>

#include <cmath>
#include <fstream>
#include <numbers>
#include <random>
#include <set>

#include "conductor/error.hpp"
#include "conductor/mask.hpp"
#include "support.hpp"

using namespace conductor;

namespace {

/// Straight transcription of the per-group write loop. Groups run from N down
/// to 1 so the earliest matching predicate writes last.
std::vector<std::uint8_t> oracleMask(const SegmentationVolume& seg, const InstanceTable& table,
                                     const std::vector<LinearPredicate>& preds) {
    const int n = static_cast<int>(preds.size());
    std::vector<std::uint8_t> out(2 * seg.ids.size(), 127);
    for (int k = n; k >= 1; --k) {
        const double phi = 2.0 * std::numbers::pi * (k - 1) / n;
        const auto u = static_cast<std::uint8_t>(std::lround((0.5 + 0.5 * std::cos(phi)) * 254.0));
        const auto v = static_cast<std::uint8_t>(std::lround((0.5 + 0.5 * std::sin(phi)) * 254.0));
        for (std::size_t row = 0; row < table.size(); ++row) {
            if (!table.visible(row)) continue;
            bool match = true;
            for (const Conjunct& c : preds[static_cast<std::size_t>(k - 1)].conjuncts) {
                const double x = table.scalar(row, c.column);
                match = match && x >= c.interval.lo && x < c.interval.hi;
            }
            if (!match) continue;
            for (std::size_t voxel = 0; voxel < seg.ids.size(); ++voxel) {
                if (seg.ids[voxel] != table.idAt(row)) continue;
                out[2 * voxel] = u;
                out[2 * voxel + 1] = v;
            }
        }
    }
    return out;
}

Hierarchy randomHierarchy(std::mt19937_64& rng) {
    auto ranges = [&](int count) {
        std::vector<RangeEntry> out;
        double lo = -1.0;
        for (int i = 0; i < count; ++i) {
            RangeEntry r;
            const double hi = lo + 1.0 + static_cast<double>(rng() % 4);
            r.interval = {lo, hi};
            lo = hi;
            out.push_back(r);
        }
        return out;
    };
    Hierarchy h;
    h.push_back({"a0", ranges(1 + static_cast<int>(rng() % 3))});
    if (rng() % 2) h.push_back({"a1", ranges(1 + static_cast<int>(rng() % 3))});
    if (rng() % 2) {
        const std::vector<HierarchyNode> children{{"a1", ranges(2)}};
        for (auto& r : h[0].ranges) r.children = children;
    }
    return h;
}

} // namespace

TEST_CASE("mask value examples") {
    CHECK(maskValue(0, 4) == MaskValue{0.5, 0.5});
    const MaskValue a = maskValue(1, 4);
    CHECK(a.u == doctest::Approx(1.0).epsilon(1e-15));
    CHECK(a.v == doctest::Approx(0.5).epsilon(1e-15));
    const MaskValue b = maskValue(2, 4);
    CHECK(std::abs(b.u - 0.5) < 1e-15);
    CHECK(b.v == doctest::Approx(1.0).epsilon(1e-15));
    const MaskValue c = maskValue(3, 4);
    CHECK(std::abs(c.u) < 1e-15);
    CHECK(std::abs(c.v - 0.5) < 1e-15);
    CHECK(maskValue(1, 1) == MaskValue{1.0, 0.5});
    CHECK_THROWS_AS(maskValue(5, 4), Error);
    CHECK_THROWS_AS(maskValue(-1, 4), Error);

    for (int n = 1; n <= 16; ++n) {
        for (int k = 1; k <= n; ++k) {
            const MaskValue m = maskValue(k, n);
            CHECK(std::abs(std::hypot(m.u - 0.5, m.v - 0.5) - 0.5) < 1e-12);
        }
    }
}

TEST_CASE("quantized mask values stay distinct and classify back to their group") {
    CHECK(quantizeMaskComponent(0.5) == 127);
    CHECK(quantizeMaskComponent(0.0) == 0);
    CHECK(quantizeMaskComponent(1.0) == 254);
    CHECK(dequantizeMaskComponent(127) == 0.5);
    for (int n = 1; n <= 255; ++n) {
        std::vector<Rgba> colors(static_cast<std::size_t>(n), Rgba{1, 1, 1, 1});
        const TransferFunction2D tf(colors, 64);
        std::set<std::pair<int, int>> seen{{127, 127}};
        for (int k = 1; k <= n; ++k) {
            const MaskValue m = maskValue(k, n);
            const std::uint8_t u = quantizeMaskComponent(m.u);
            const std::uint8_t v = quantizeMaskComponent(m.v);
            CHECK(seen.insert({u, v}).second);
            CHECK(tf.sectorOf({dequantizeMaskComponent(u), dequantizeMaskComponent(v)}) == k);
        }
    }
}

TEST_CASE("mask build matches a direct per-group oracle") {
    for (std::uint64_t seed = 0; seed < 20; ++seed) {
        std::mt19937_64 rng(seed + 100);
        Dataset ds = fixtures::fuzzScene(seed, 16, 12);
        const Hierarchy h = randomHierarchy(rng);
        validateHierarchy(h, ds.table);
        const auto preds = linearize(h, ds.table);
        const GroupAssignment g = assignGroups(preds, ds.table);
        for (std::size_t row = 0; row < ds.table.size(); ++row) ds.table.setVisible(row, rng() % 3 != 0);
        const VisibilityMask mask = buildVisibilityMask(ds.seg, ds.table, g, g.groupCount);
        CHECK(mask.values == oracleMask(ds.seg, ds.table, preds));
    }
}

TEST_CASE("mask build is idempotent and tracks visibility") {
    Dataset ds = fixtures::fuzzScene(4, 12, 8);
    RangeEntry all;
    const auto preds = linearize({HierarchyNode{"a0", {all}}}, ds.table);
    const GroupAssignment g = assignGroups(preds, ds.table);
    const VisibilityMask a = buildVisibilityMask(ds.seg, ds.table, g, 1);
    const VisibilityMask b = buildVisibilityMask(ds.seg, ds.table, g, 1);
    CHECK(a.values == b.values);

    for (std::size_t row = 0; row < ds.table.size(); ++row) ds.table.setVisible(row, false);
    const VisibilityMask hidden = buildVisibilityMask(ds.seg, ds.table, g, 1);
    for (std::uint8_t q : hidden.values) CHECK(q == 127);

    GroupAssignment bad = g;
    bad.groupOfRow.pop_back();
    CHECK_THROWS_AS(buildVisibilityMask(ds.seg, ds.table, bad, 1), Error);
}

TEST_CASE("transfer function geometry") {
    const std::vector<Rgba> colors{{1, 0, 0, 0.8}, {0, 1, 0, 1.0}, {0, 0, 1, 0.5}};
    const TransferFunction2D tf(colors);
    CHECK(tf.lookup({0.5, 0.5}) == Rgba{});
    CHECK(tf.sectorOf({0.5, 0.5}) == 0);
    for (int k = 1; k <= 3; ++k) {
        const MaskValue rim = maskValue(k, 3);
        const Rgba full = tf.lookup(rim);
        CHECK(full.a == doctest::Approx(colors[static_cast<std::size_t>(k - 1)].a).epsilon(1e-12));
        CHECK(full.r == colors[static_cast<std::size_t>(k - 1)].r);
        // Radial line toward the center: same sector, alpha proportional to radius.
        for (double t : {0.1, 0.25, 0.5, 0.75}) {
            const MaskValue m{0.5 + t * (rim.u - 0.5), 0.5 + t * (rim.v - 0.5)};
            CHECK(tf.sectorOf(m) == k);
            CHECK(tf.lookup(m).a == doctest::Approx(t * full.a).epsilon(1e-9));
        }
        // Chord toward the next group crosses exactly one sector boundary.
        const MaskValue next = maskValue(k % 3 + 1, 3);
        int changes = 0;
        int previous = k;
        for (int step = 1; step < 100; ++step) {
            const double t = step / 100.0;
            const int sector = tf.sectorOf({rim.u + t * (next.u - rim.u), rim.v + t * (next.v - rim.v)});
            CHECK((sector == k || sector == k % 3 + 1));
            if (sector != previous) ++changes;
            previous = sector;
        }
        CHECK(changes == 1);
    }
    CHECK_THROWS_AS(TransferFunction2D(colors, 32), Error);
    CHECK(tf.texels().size() == 256u * 256u * 4u);
    const Rgba tex = tf.lookupTexture({0.75, 0.5});
    CHECK(tex.r == doctest::Approx(1.0).epsilon(0.02));
    CHECK(tex.a == doctest::Approx(0.4).epsilon(0.05));
}

TEST_CASE("sampling and classification") {
    const Dataset ds = fixtures::primitiveScene({12, 12, 12, {1, 1, 1}}, {fixtures::sphere({6, 6, 6}, 3.5)});
    const auto preds = linearize({HierarchyNode{ds.table.scalarColumns().front(), {RangeEntry{}}}}, ds.table);
    const GroupAssignment g = assignGroups(preds, ds.table);
    const VisibilityMask mask = buildVisibilityMask(ds.seg, ds.table, g, 1);
    const TransferFunction2D tf({Rgba{0.2, 0.4, 0.6, 1.0}});

    for (int z = 0; z < 12; ++z) {
        for (int y = 0; y < 12; ++y) {
            for (int x = 0; x < 12; ++x) {
                const std::size_t v = ds.seg.dims.index(x, y, z);
                CHECK(mask.sample(ds.seg.dims.voxelCenter(x, y, z)) == mask.at(v));
            }
        }
    }
    const Rgba inside = sampleMaskClassified(mask, tf, {6, 6, 6});
    CHECK(inside.a == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(sampleMaskClassified(mask, tf, {0.5, 0.5, 0.5}) == Rgba{});
    CHECK(sampleMaskClassified(mask, tf, {-1, 6, 6}) == Rgba{});
    // Between a voxel inside and one outside the alpha ramps down.
    bool ramp = false;
    for (double z = 6.0; z < 12.0; z += 0.25) {
        const double a = sampleMaskClassified(mask, tf, {6, 6, z}).a;
        ramp = ramp || (a > 0.0 && a < 1.0);
    }
    CHECK(ramp);
}

TEST_CASE("mask export") {
    fixtures::TempDir dir;
    VisibilityMask mask;
    mask.dims = {2, 1, 1, {1, 1, 1}};
    mask.values = {127, 127, 254, 127};
    exportMask(mask, dir.path, "m");
    std::ifstream in(dir.path / "m.mask", std::ios::binary);
    std::vector<char> bytes((std::istreambuf_iterator<char>(in)), {});
    CHECK(bytes.size() == 4u);
    CHECK(static_cast<unsigned char>(bytes[2]) == 254);
    std::ifstream meta(dir.path / "m.mask.json");
    const auto doc = nlohmann::json::parse(meta);
    CHECK(doc["mask"]["levels"] == 254);
    CHECK(doc["dims"] == nlohmann::json::array({2, 1, 1}));
}
