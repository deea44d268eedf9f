#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <random>

#include "conductor/error.hpp"
#include "conductor/grouping.hpp"
#include "support.hpp"

using namespace conductor;
using nlohmann::json;

namespace {

constexpr double kInf = std::numeric_limits<double>::infinity();

RangeEntry range(double lo, double hi, std::vector<HierarchyNode> children = {}) {
    RangeEntry r;
    r.interval = {lo, hi};
    r.children = std::move(children);
    return r;
}

/// Minimum index of a satisfied predicate, evaluated conjunct by conjunct
/// straight from the attribute names.
int bruteForceGroup(const std::vector<LinearPredicate>& predicates, const InstanceTable& table, std::size_t row) {
    int best = 0;
    for (const auto& p : predicates) {
        bool all = true;
        for (const auto& c : p.conjuncts) {
            const double v = table.scalar(row, *table.scalarColumn(c.attribute));
            all = all && c.interval.lo <= v && v < c.interval.hi;
        }
        if (all && (best == 0 || p.groupIndex < best)) best = p.groupIndex;
    }
    return best;
}

/// A random hierarchy of 9 leaves over columns a0..a3: either a 3x3 tree or
/// three overlapping 3-range roots on different attributes.
Hierarchy randomNinePredicates(std::mt19937_64& rng) {
    std::uniform_int_distribution<int> col(0, 3);
    std::uniform_int_distribution<int> cut(1, 8);
    auto threeRanges = [&](std::vector<HierarchyNode> children) {
        int a = cut(rng), b = cut(rng);
        if (a > b) std::swap(a, b);
        if (a == b) b = a + 1;
        HierarchyNode node;
        node.attribute = "a" + std::to_string(col(rng));
        node.ranges = {range(-kInf, a, children), range(a, b, children), range(b, kInf, children)};
        return node;
    };
    if (rng() % 2 == 0) return {threeRanges({threeRanges({})})};
    return {threeRanges({}), threeRanges({}), threeRanges({})};
}

} // namespace

TEST_CASE("linearize enumerates root-to-leaf paths depth first") {
    InstanceTable table(AttributeSchema({{"volume", AttributeKind::Scalar}, {"orientation", AttributeKind::Scalar}}));
    table.addRow(1, {5.0, 10.0});
    HierarchyNode orientation{"orientation", {range(0, 45), range(45, 90)}};
    const Hierarchy h{HierarchyNode{"volume", {range(0, 10, {orientation}), range(10, kInf, {orientation})}}};
    validateHierarchy(h, table);
    const auto preds = linearize(h, table);
    REQUIRE(preds.size() == 4);
    const std::vector<std::pair<Interval, Interval>> expected{
        {{0, 10}, {0, 45}}, {{0, 10}, {45, 90}}, {{10, kInf}, {0, 45}}, {{10, kInf}, {45, 90}}};
    for (std::size_t i = 0; i < 4; ++i) {
        CHECK(preds[i].groupIndex == static_cast<int>(i + 1));
        REQUIRE(preds[i].conjuncts.size() == 2);
        CHECK(preds[i].conjuncts[0].attribute == "volume");
        CHECK(preds[i].conjuncts[0].interval == expected[i].first);
        CHECK(preds[i].conjuncts[1].attribute == "orientation");
        CHECK(preds[i].conjuncts[1].interval == expected[i].second);
    }
    CHECK(pathKey(preds[1].path) == "0:0/0:1");

    const auto single = linearize({HierarchyNode{"volume", {range(0, 1)}}}, table);
    REQUIRE(single.size() == 1);
    CHECK(single[0].conjuncts.size() == 1);
    CHECK(linearize({}, table).empty());
}

TEST_CASE("uniform trees linearize to the product of range counts") {
    InstanceTable table(fixtures::scalarSchema(3));
    table.addRow(1, {0, 0, 0});
    const Hierarchy nine = expandLevels({{"a0", {{0, 1}, {1, 2}, {2, 3}}}, {"a1", {{0, 1}, {1, 2}, {2, 3}}}});
    CHECK(linearize(nine, table).size() == 9);
    const Hierarchy many = expandLevels({{"a0", {{0, 1}, {1, 2}}}, {"a1", {{0, 1}, {1, 2}, {2, 3}}}, {"a2", {{0, 5}, {5, 9}}}});
    validateHierarchy(many, table);
    CHECK(linearize(many, table).size() == 12);
}

TEST_CASE("first matching predicate defines the group") {
    InstanceTable table(fixtures::scalarSchema(2));
    table.addRow(1, {5.0, 5.0});
    table.addRow(2, {50.0, 50.0});
    const Hierarchy h{HierarchyNode{"a0", {range(0, 1)}}, HierarchyNode{"a0", {range(4, 6)}},
                      HierarchyNode{"a1", {range(0, 10)}}};
    const auto preds = linearize(h, table);
    const GroupAssignment g = assignGroups(preds, table);
    CHECK(g.groupOfRow[0] == 2);
    CHECK(g.groupOfRow[1] == 0);
    CHECK(g.groupCount == 3);
    CHECK(g.groupSizes() == std::vector<std::size_t>{1, 0, 1, 0});
}

TEST_CASE("assignGroups matches the brute-force minimum-index oracle") {
    std::mt19937_64 rng(2024);
    for (int trial = 0; trial < 100; ++trial) {
        const InstanceTable table = fixtures::randomTable(rng, 200, 4);
        const auto preds = linearize(randomNinePredicates(rng), table);
        REQUIRE(preds.size() == 9);
        const GroupAssignment g = assignGroups(preds, table);
        for (std::size_t row = 0; row < table.size(); ++row) {
            REQUIRE(g.groupOfRow[row] == bruteForceGroup(preds, table, row));
        }
    }
}

TEST_CASE("permuting predicates only moves instances that satisfy several") {
    std::mt19937_64 rng(8);
    const InstanceTable table = fixtures::randomTable(rng, 200, 4);
    for (int trial = 0; trial < 20; ++trial) {
        auto preds = linearize(randomNinePredicates(rng), table);
        const GroupAssignment before = assignGroups(preds, table);
        std::vector<LinearPredicate> shuffled = preds;
        std::shuffle(shuffled.begin(), shuffled.end(), rng);
        for (std::size_t i = 0; i < shuffled.size(); ++i) shuffled[i].groupIndex = static_cast<int>(i + 1);
        const GroupAssignment after = assignGroups(shuffled, table);
        for (std::size_t row = 0; row < table.size(); ++row) {
            int satisfied = 0;
            for (const auto& p : preds) satisfied += p.matches(table, row) ? 1 : 0;
            if (satisfied >= 2) continue;
            const int b = before.groupOfRow[row];
            const int a = after.groupOfRow[row];
            if (b == 0) {
                CHECK(a == 0);
            } else {
                REQUIRE(a != 0);
                CHECK(shuffled[static_cast<std::size_t>(a - 1)].path == preds[static_cast<std::size_t>(b - 1)].path);
            }
        }
    }
}

TEST_CASE("golden-ratio default colors") {
    CHECK(defaultHue(1) == doctest::Approx(0.6180339887498949).epsilon(1e-14));
    CHECK(defaultHue(2) == doctest::Approx(0.2360679774997898).epsilon(1e-12));
    for (int k = 1; k < 1000; ++k) {
        const double d = std::fmod(defaultHue(k + 1) - defaultHue(k) + 1.0, 1.0);
        REQUIRE(d == doctest::Approx(0.6180339887498949).epsilon(1e-9));
    }
    for (int i = 1; i <= 12; ++i) {
        for (int j = i + 1; j <= 12; ++j) {
            const double d = std::abs(defaultHue(i) - defaultHue(j));
            CHECK(std::min(d, 1.0 - d) > 0.05);
        }
    }
    const Rgba red = hsvToRgb(0.0, 1.0, 1.0);
    CHECK(red == Rgba{1.0, 0.0, 0.0, 1.0});
    const Rgba c = defaultColor(1);
    CHECK(std::max({c.r, c.g, c.b}) == doctest::Approx(0.9));
    CHECK(std::min({c.r, c.g, c.b}) == doctest::Approx(0.9 * 0.2));
    CHECK(c.a == 1.0);
}

TEST_CASE("cascadeDown distributes a parent fraction to its leaves") {
    auto twoChildren = [] {
        HierarchyNode child{"a1", {range(0, 5), range(5, 10)}};
        return Hierarchy{HierarchyNode{"a0", {range(0, 10, {child})}}};
    };
    const RangePath parent{{0, 0}};
    const RangePath childA{{0, 0}, {0, 0}};
    const RangePath childB{{0, 0}, {0, 1}};

    Hierarchy h = twoChildren();
    CHECK(cascadeDown(h, parent, 0.5, {0, 2, 2}).status == CascadeStatus::Applied);
    CHECK(rangeAt(h, childA).fraction == 0.5);
    CHECK(rangeAt(h, childB).fraction == 0.5);

    h = twoChildren();
    rangeAt(h, childB).locked = true;
    rangeAt(h, childB).fraction = 0.0;
    std::vector<std::size_t> sizes{0, 3, 1};
    const CascadeResult r = cascadeDown(h, parent, 0.6, sizes);
    CHECK(r.status == CascadeStatus::Applied);
    CHECK(rangeAt(h, childA).fraction == doctest::Approx(0.8).epsilon(1e-12));
    CHECK(rangeAt(h, childB).fraction == 0.0);
    cascadeUp(h, sizes);
    CHECK(rangeAt(h, parent).fraction == doctest::Approx(0.6).epsilon(1e-12));

    h = twoChildren();
    rangeAt(h, childB).locked = true;
    rangeAt(h, childB).fraction = 0.0;
    sizes = {0, 2, 2};
    CHECK(cascadeDown(h, parent, 1.0, sizes).status == CascadeStatus::Clamped);
    CHECK(rangeAt(h, childA).fraction == 1.0);
    cascadeUp(h, sizes);
    CHECK(rangeAt(h, parent).fraction == doctest::Approx(0.5));

    h = twoChildren();
    rangeAt(h, childA).locked = true;
    rangeAt(h, childB).locked = true;
    CHECK(cascadeDown(h, parent, 0.2, sizes).status == CascadeStatus::NoOpAllLocked);
    CHECK(rangeAt(h, childA).fraction == 1.0);

    // A lock on an inner range pins every leaf beneath it.
    h = twoChildren();
    rangeAt(h, parent).locked = true;
    CHECK(cascadeDown(h, parent, 0.2, sizes).status == CascadeStatus::Applied);
    CHECK(rangeAt(h, childA).fraction == 0.2);

    CHECK_THROWS_AS(cascadeDown(h, parent, 1.5, sizes), Error);
    CHECK_THROWS_AS(cascadeDown(h, RangePath{{0, 3}}, 0.5, sizes), Error);
}

TEST_CASE("cascadeUp is the count-weighted mean and flags empty subtrees") {
    HierarchyNode child{"a1", {range(0, 5), range(5, 10)}};
    Hierarchy h{HierarchyNode{"a0", {range(0, 10, {child}), range(10, 20, {child})}}};
    rangeAt(h, {{0, 0}, {0, 1}}).fraction = 0.0;
    cascadeUp(h, {0, 3, 1, 0, 0});
    CHECK(rangeAt(h, {{0, 0}}).fraction == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(!rangeAt(h, {{0, 0}}).empty);
    CHECK(rangeAt(h, {{0, 1}}).fraction == 0.0);
    CHECK(rangeAt(h, {{0, 1}}).empty);
    CHECK(rangeAt(h, {{0, 1}, {0, 0}}).empty);
}

TEST_CASE("cascadeDown then cascadeUp is the identity without clamping or locks") {
    std::mt19937_64 rng(99);
    std::uniform_real_distribution<double> unit(0.0, 1.0);
    std::uniform_int_distribution<std::size_t> size(1, 40);
    const Hierarchy shape = expandLevels({{"a0", {{0, 1}, {1, 2}, {2, 3}}}, {"a1", {{0, 1}, {1, 2}}}, {"a2", {{0, 1}, {1, 2}, {2, 3}}}});
    for (int trial = 0; trial < 200; ++trial) {
        Hierarchy h = shape;
        std::vector<std::size_t> sizes{0};
        for (int k = 0; k < 18; ++k) sizes.push_back(size(rng));
        for (std::size_t r = 0; r < 3; ++r) {
            for (std::size_t c = 0; c < 2; ++c) {
                for (std::size_t l = 0; l < 3; ++l) rangeAt(h, {{0, r}, {0, c}, {0, l}}).fraction = unit(rng);
            }
        }
        cascadeUp(h, sizes);
        const RangePath target = rng() % 2 ? RangePath{{0, rng() % 3}} : RangePath{{0, rng() % 3}, {0, rng() % 2}};
        const double f = unit(rng);
        REQUIRE(cascadeDown(h, target, f, sizes).status == CascadeStatus::Applied);
        cascadeUp(h, sizes);
        CHECK(std::abs(rangeAt(h, target).fraction - f) <= 1e-12);
    }
}

TEST_CASE("group histograms") {
    InstanceTable table(fixtures::scalarSchema(1));
    for (std::uint32_t id = 1; id <= 5; ++id) table.addRow(id, {static_cast<double>(id - 1)});
    GroupAssignment g{{1, 1, 1, 1, 0}, 2};
    Histogram h = groupHistogram(table, g, 1, "a0", 2);
    CHECK(h.counts == std::vector<std::size_t>{2, 2});
    CHECK(h.lo == 0.0);
    CHECK(h.hi == 3.0);
    CHECK(groupHistogram(table, g, 2, "a0", 4).empty());
    g.groupOfRow = {0, 0, 0, 0, 1};
    CHECK(groupHistogram(table, g, 1, "a0", 3).counts == std::vector<std::size_t>{1, 0, 0});
    CHECK_THROWS_AS(groupHistogram(table, g, 1, "a0", 0), Error);
    CHECK_THROWS_AS(groupHistogram(table, g, 1, "nope", 3), Error);

    std::mt19937_64 rng(3);
    std::uniform_real_distribution<double> value(-5.0, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        InstanceTable t(fixtures::scalarSchema(1));
        GroupAssignment a{{}, 3};
        for (std::uint32_t id = 1; id <= 300; ++id) {
            t.addRow(id, {value(rng)});
            a.groupOfRow.push_back(static_cast<int>(rng() % 4));
        }
        const int bins = 1 + static_cast<int>(rng() % 12);
        const int group = 1 + static_cast<int>(rng() % 3);
        const Histogram got = groupHistogram(t, a, group, "a0", bins);
        double lo = kInf, hi = -kInf;
        std::size_t members = 0;
        for (std::size_t row = 0; row < t.size(); ++row) {
            if (a.groupOfRow[row] != group) continue;
            lo = std::min(lo, t.scalar(row, 0));
            hi = std::max(hi, t.scalar(row, 0));
            ++members;
        }
        std::vector<std::size_t> expect(static_cast<std::size_t>(bins), 0);
        for (std::size_t row = 0; row < t.size(); ++row) {
            if (a.groupOfRow[row] != group) continue;
            const double v = t.scalar(row, 0);
            // Linear scan for the bin whose closed-left edge is the last one <= v.
            int bin = 0;
            for (int b = 1; b < bins; ++b) {
                if (v >= lo + (hi - lo) * b / bins) bin = b;
            }
            ++expect[static_cast<std::size_t>(bin)];
        }
        std::size_t sum = 0;
        for (std::size_t c : got.counts) sum += c;
        CHECK(sum == members);
        CHECK(got.counts == expect);
    }
}

TEST_CASE("hierarchy validation") {
    InstanceTable table(AttributeSchema({{"len", AttributeKind::Scalar}, {"dir", AttributeKind::Vector3}}));
    table.addRow(1, {1.0, 0.0, 0.0, 1.0});
    CHECK_THROWS_WITH_AS(validateHierarchy({HierarchyNode{"width", {range(0, 1)}}}, table),
                         doctest::Contains("unknown attribute 'width'"), Error);
    CHECK_THROWS_WITH_AS(validateHierarchy({HierarchyNode{"dir", {range(0, 1)}}}, table),
                         doctest::Contains("dir.polar"), Error);
    CHECK_THROWS_WITH_AS(validateHierarchy({HierarchyNode{"len", {range(2, 1)}}}, table),
                         doctest::Contains("lo must be < hi"), Error);
    CHECK_THROWS_WITH_AS(validateHierarchy({HierarchyNode{"len", {range(0, 2), range(1, 3)}}}, table),
                         doctest::Contains("overlap"), Error);
    HierarchyNode a{"dir.polar", {range(0, 45)}};
    HierarchyNode b{"dir.polar", {range(0, 30)}};
    CHECK_THROWS_WITH_AS(validateHierarchy({HierarchyNode{"len", {range(0, 1, {a}), range(1, 2, {b})}}}, table),
                         doctest::Contains("same shape"), Error);
    Hierarchy bad{HierarchyNode{"len", {range(0, 1)}}};
    bad[0].ranges[0].fraction = 1.5;
    CHECK_THROWS_AS(validateHierarchy(bad, table), Error);
    CHECK_NOTHROW(validateHierarchy({HierarchyNode{"len", {range(0, 1, {a}), range(1, 2, {a})}}}, table));
}

TEST_CASE("hierarchy JSON round trip and path-keyed color memory") {
    const json doc = json::parse(R"({
        "attribute": "a0",
        "ranges": [
            {"lo": null, "hi": 3, "color": [1, 0, 0], "children": [{"attribute": "a1", "ranges": [{"lo": 0, "hi": 5}, {"lo": 5, "hi": null, "locked": true, "fraction": 0.25}]}]},
            {"lo": 3, "hi": null, "children": [{"attribute": "a1", "ranges": [{"lo": 0, "hi": 5}, {"lo": 5, "hi": null, "locked": true, "fraction": 0.25}]}]}
        ]
    })");
    const Hierarchy h = hierarchyFromJson(doc);
    REQUIRE(h.size() == 1);
    CHECK(h[0].ranges[0].interval.lo == -kInf);
    CHECK(h[0].ranges[1].interval.hi == kInf);
    CHECK(rangeAt(h, {{0, 0}, {0, 1}}).locked);
    CHECK(rangeAt(h, {{0, 0}, {0, 1}}).fraction == 0.25);
    const Hierarchy again = hierarchyFromJson(hierarchyToJson(h));
    CHECK(hierarchyToJson(again) == hierarchyToJson(h));

    InstanceTable table(fixtures::scalarSchema(2));
    table.addRow(1, {1, 1});
    ColorMemory memory;
    const auto preds = linearize(h, table, &memory);
    REQUIRE(preds.size() == 4);
    CHECK(preds[0].color == Rgba{1, 0, 0, 1});
    CHECK(preds[1].color == Rgba{1, 0, 0, 1});
    CHECK(preds[2].color == defaultColor(3));
    CHECK(colorKey(preds[2]) == "a0[3,inf)/a1[0,5)");
    for (const auto& p : preds) memory[colorKey(p)] = p.color;

    // Dropping the first range renumbers groups but keeps the surviving colors.
    Hierarchy edited = h;
    edited[0].ranges.erase(edited[0].ranges.begin());
    const auto after = linearize(edited, table, &memory);
    REQUIRE(after.size() == 2);
    CHECK(after[0].color == preds[2].color);
    CHECK(after[1].color == preds[3].color);

    CHECK_THROWS_AS(hierarchyFromJson(json::parse(R"({"ranges": []})")), Error);
    CHECK_THROWS_AS(parsePathKey("0:x"), Error);
    CHECK(parsePathKey("2:1/0:3") == RangePath{{2, 1}, {0, 3}});
}
