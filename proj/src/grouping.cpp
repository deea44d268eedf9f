#include "conductor/grouping.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <sstream>

#include "conductor/error.hpp"

namespace conductor {

using nlohmann::json;

namespace {

constexpr double kGoldenConjugate = 0.6180339887498949;

std::string describe(const RangePath& path) { return path.empty() ? std::string("<root>") : pathKey(path); }

/// Structural signature of a child list: attributes and interval bounds only.
std::string shapeSignature(const std::vector<HierarchyNode>& nodes) {
    std::ostringstream out;
    out.precision(17);
    for (const auto& node : nodes) {
        out << '(' << node.attribute;
        for (const auto& r : node.ranges) {
            out << '[' << r.interval.lo << ',' << r.interval.hi << ']' << shapeSignature(r.children);
        }
        out << ')';
    }
    return out.str();
}

void validateNodes(const std::vector<HierarchyNode>& nodes, const InstanceTable& table, RangePath& path) {
    for (std::size_t n = 0; n < nodes.size(); ++n) {
        const HierarchyNode& node = nodes[n];
        path.emplace_back(n, 0);
        const std::string where = "hierarchy node " + describe(RangePath(path.begin(), path.end() - 1)) + "#" +
                                  std::to_string(n);
        if (!table.scalarColumn(node.attribute)) {
            const auto attr = table.schema().find(node.attribute);
            if (attr && table.schema().attributes()[*attr].kind == AttributeKind::Vector3) {
                throw Error(where + ": attribute '" + node.attribute +
                            "' is vector3; use a derived scalar such as '" + node.attribute + ".polar'");
            }
            throw Error(where + ": unknown attribute '" + node.attribute + "'");
        }
        if (node.ranges.empty()) throw Error(where + ": at least one range is required");
        std::vector<Interval> sorted;
        for (std::size_t r = 0; r < node.ranges.size(); ++r) {
            path.back().second = r;
            const RangeEntry& range = node.ranges[r];
            if (std::isnan(range.interval.lo) || std::isnan(range.interval.hi) || !(range.interval.lo < range.interval.hi)) {
                throw Error("hierarchy range " + pathKey(path) + ": lo must be < hi");
            }
            if (!(range.fraction >= 0.0 && range.fraction <= 1.0)) {
                throw Error("hierarchy range " + pathKey(path) + ": fraction must be in [0, 1]");
            }
            sorted.push_back(range.interval);
            validateNodes(range.children, table, path);
        }
        std::sort(sorted.begin(), sorted.end(), [](const Interval& a, const Interval& b) { return a.lo < b.lo; });
        for (std::size_t i = 1; i < sorted.size(); ++i) {
            if (sorted[i].lo < sorted[i - 1].hi) throw Error(where + ": ranges of '" + node.attribute + "' overlap");
        }
        const std::string first = shapeSignature(node.ranges.front().children);
        for (const auto& range : node.ranges) {
            if (shapeSignature(range.children) != first) {
                throw Error(where + ": children must have the same shape beneath every range");
            }
        }
        path.pop_back();
    }
}

double jsonBound(const json& v, double fallback, const std::string& where) {
    if (v.is_null()) return fallback;
    if (!v.is_number()) throw Error(where + ": expected a number or null");
    return v.get<double>();
}

json boundToJson(double v) {
    if (std::isinf(v)) return nullptr;
    return v;
}

Rgba colorFromJson(const json& v, const std::string& where) {
    if (!v.is_array() || (v.size() != 3 && v.size() != 4)) throw Error(where + ": expected [r, g, b] or [r, g, b, a]");
    Rgba c{v[0].get<double>(), v[1].get<double>(), v[2].get<double>(), v.size() == 4 ? v[3].get<double>() : 1.0};
    for (double x : {c.r, c.g, c.b, c.a}) {
        if (!(x >= 0.0 && x <= 1.0)) throw Error(where + ": components must be in [0, 1]");
    }
    return c;
}

HierarchyNode nodeFromJson(const json& doc, const std::string& where) {
    if (!doc.is_object()) throw Error(where + ": expected an object");
    HierarchyNode node;
    if (!doc.contains("attribute") || !doc.at("attribute").is_string()) throw Error(where + ".attribute: missing");
    node.attribute = doc.at("attribute").get<std::string>();
    if (!doc.contains("ranges") || !doc.at("ranges").is_array()) throw Error(where + ".ranges: missing");
    const json& ranges = doc.at("ranges");
    for (std::size_t r = 0; r < ranges.size(); ++r) {
        const std::string rw = where + ".ranges[" + std::to_string(r) + "]";
        const json& rd = ranges[r];
        if (!rd.is_object()) throw Error(rw + ": expected an object");
        RangeEntry entry;
        entry.interval.lo = jsonBound(rd.value("lo", json()), -std::numeric_limits<double>::infinity(), rw + ".lo");
        entry.interval.hi = jsonBound(rd.value("hi", json()), std::numeric_limits<double>::infinity(), rw + ".hi");
        if (rd.contains("color") && !rd.at("color").is_null()) entry.color = colorFromJson(rd.at("color"), rw + ".color");
        if (rd.contains("fraction")) {
            if (!rd.at("fraction").is_number()) throw Error(rw + ".fraction: expected a number");
            entry.fraction = rd.at("fraction").get<double>();
        }
        if (rd.contains("locked")) {
            if (!rd.at("locked").is_boolean()) throw Error(rw + ".locked: expected a boolean");
            entry.locked = rd.at("locked").get<bool>();
        }
        if (rd.contains("children")) {
            const json& children = rd.at("children");
            if (!children.is_array()) throw Error(rw + ".children: expected an array");
            for (std::size_t c = 0; c < children.size(); ++c) {
                entry.children.push_back(nodeFromJson(children[c], rw + ".children[" + std::to_string(c) + "]"));
            }
        }
        node.ranges.push_back(std::move(entry));
    }
    return node;
}

json nodeToJson(const HierarchyNode& node) {
    json ranges = json::array();
    for (const auto& r : node.ranges) {
        json entry{{"lo", boundToJson(r.interval.lo)},
                   {"hi", boundToJson(r.interval.hi)},
                   {"fraction", r.fraction},
                   {"locked", r.locked}};
        if (r.color) entry["color"] = {r.color->r, r.color->g, r.color->b, r.color->a};
        if (r.empty) entry["empty"] = true;
        json children = json::array();
        for (const auto& c : r.children) children.push_back(nodeToJson(c));
        entry["children"] = std::move(children);
        ranges.push_back(std::move(entry));
    }
    return json{{"attribute", node.attribute}, {"ranges", std::move(ranges)}};
}

} // namespace

std::string pathKey(const RangePath& path) {
    std::string key;
    for (std::size_t i = 0; i < path.size(); ++i) {
        if (i) key += '/';
        key += std::to_string(path[i].first) + ':' + std::to_string(path[i].second);
    }
    return key;
}

RangePath parsePathKey(const std::string& key) {
    RangePath path;
    std::istringstream in(key);
    std::string part;
    while (std::getline(in, part, '/')) {
        const auto colon = part.find(':');
        if (colon == std::string::npos) throw Error("path '" + key + "': expected node:range pairs");
        try {
            std::size_t used = 0;
            const auto node = std::stoul(part.substr(0, colon), &used);
            if (used != colon) throw std::invalid_argument(part);
            const std::string rest = part.substr(colon + 1);
            const auto range = std::stoul(rest, &used);
            if (used != rest.size()) throw std::invalid_argument(part);
            path.emplace_back(node, range);
        } catch (const std::logic_error&) {
            throw Error("path '" + key + "': expected node:range pairs");
        }
    }
    if (path.empty()) throw Error("path: must not be empty");
    return path;
}

const RangeEntry& rangeAt(const Hierarchy& hierarchy, const RangePath& path) {
    if (path.empty()) throw Error("path: must not be empty");
    const std::vector<HierarchyNode>* nodes = &hierarchy;
    const RangeEntry* range = nullptr;
    for (const auto& [n, r] : path) {
        if (n >= nodes->size() || r >= (*nodes)[n].ranges.size()) {
            throw Error("path '" + pathKey(path) + "': no such range");
        }
        range = &(*nodes)[n].ranges[r];
        nodes = &range->children;
    }
    return *range;
}

RangeEntry& rangeAt(Hierarchy& hierarchy, const RangePath& path) {
    return const_cast<RangeEntry&>(rangeAt(static_cast<const Hierarchy&>(hierarchy), path));
}

bool LinearPredicate::matches(const InstanceTable& table, std::size_t row) const {
    for (const auto& c : conjuncts) {
        if (!c.interval.contains(table.scalar(row, c.column))) return false;
    }
    return true;
}

std::string colorKey(const LinearPredicate& predicate) {
    std::ostringstream out;
    out.precision(17);
    for (const auto& c : predicate.conjuncts) {
        if (out.tellp() > 0) out << '/';
        out << c.attribute << '[' << c.interval.lo << ',' << c.interval.hi << ')';
    }
    return out.str();
}

void validateHierarchy(const Hierarchy& hierarchy, const InstanceTable& table) {
    RangePath path;
    validateNodes(hierarchy, table, path);
}

std::vector<LinearPredicate> linearize(const Hierarchy& hierarchy, const InstanceTable& table, const ColorMemory* memory) {
    validateHierarchy(hierarchy, table);
    std::vector<LinearPredicate> out;
    std::vector<Conjunct> stack;
    std::vector<std::optional<Rgba>> inherited{std::nullopt};
    RangePath path;
    std::function<void(const std::vector<HierarchyNode>&)> walk = [&](const std::vector<HierarchyNode>& nodes) {
        for (std::size_t n = 0; n < nodes.size(); ++n) {
            const HierarchyNode& node = nodes[n];
            const std::size_t column = *table.scalarColumn(node.attribute);
            for (std::size_t r = 0; r < node.ranges.size(); ++r) {
                const RangeEntry& range = node.ranges[r];
                stack.push_back({node.attribute, column, range.interval});
                path.emplace_back(n, r);
                if (range.children.empty()) {
                    LinearPredicate p;
                    p.conjuncts = stack;
                    p.groupIndex = static_cast<int>(out.size()) + 1;
                    p.path = path;
                    p.visibleFraction = range.fraction;
                    const std::string key = colorKey(p);
                    if (range.color) {
                        p.color = *range.color;
                    } else if (inherited.back()) {
                        p.color = *inherited.back();
                    } else if (memory && memory->contains(key)) {
                        p.color = memory->at(key);
                    } else {
                        p.color = defaultColor(p.groupIndex);
                    }
                    out.push_back(std::move(p));
                } else {
                    inherited.push_back(range.color ? range.color : inherited.back());
                    walk(range.children);
                    inherited.pop_back();
                }
                path.pop_back();
                stack.pop_back();
            }
        }
    };
    walk(hierarchy);
    return out;
}

std::vector<std::size_t> GroupAssignment::groupSizes() const {
    std::vector<std::size_t> sizes(static_cast<std::size_t>(groupCount) + 1, 0);
    for (int g : groupOfRow) ++sizes[static_cast<std::size_t>(g)];
    return sizes;
}

GroupAssignment assignGroups(const std::vector<LinearPredicate>& predicates, const InstanceTable& table) {
    GroupAssignment a;
    a.groupCount = static_cast<int>(predicates.size());
    a.groupOfRow.assign(table.size(), 0);
    for (std::size_t row = 0; row < table.size(); ++row) {
        for (const auto& p : predicates) {
            if (p.matches(table, row)) {
                a.groupOfRow[row] = p.groupIndex;
                break;
            }
        }
    }
    return a;
}

double defaultHue(int k) {
    const double x = k * kGoldenConjugate;
    return x - std::floor(x);
}

Rgba hsvToRgb(double h, double s, double v, double alpha) {
    h = (h - std::floor(h)) * 6.0;
    const int sector = static_cast<int>(h) % 6;
    const double f = h - std::floor(h);
    const double p = v * (1.0 - s);
    const double q = v * (1.0 - s * f);
    const double t = v * (1.0 - s * (1.0 - f));
    switch (sector) {
    case 0: return {v, t, p, alpha};
    case 1: return {q, v, p, alpha};
    case 2: return {p, v, t, alpha};
    case 3: return {p, q, v, alpha};
    case 4: return {t, p, v, alpha};
    default: return {v, p, q, alpha};
    }
}

Rgba defaultColor(int k) { return hsvToRgb(defaultHue(k), 0.8, 0.9, 1.0); }

CascadeResult cascadeDown(Hierarchy& hierarchy, const RangePath& target, double fraction,
                          const std::vector<std::size_t>& groupSizes) {
    if (!(fraction >= 0.0 && fraction <= 1.0)) throw Error("fraction: must be in [0, 1]");
    RangeEntry& root = rangeAt(hierarchy, target);

    // Group index of the first leaf under the target.
    std::size_t firstGroup = 1;
    {
        RangePath walkPath;
        bool found = false;
        std::size_t index = 0;
        std::function<void(std::vector<HierarchyNode>&)> walk = [&](std::vector<HierarchyNode>& nodes) {
            for (std::size_t n = 0; n < nodes.size() && !found; ++n) {
                for (std::size_t r = 0; r < nodes[n].ranges.size() && !found; ++r) {
                    walkPath.emplace_back(n, r);
                    if (walkPath == target) {
                        firstGroup = index + 1;
                        found = true;
                    } else if (nodes[n].ranges[r].children.empty()) {
                        ++index;
                    } else {
                        walk(nodes[n].ranges[r].children);
                    }
                    walkPath.pop_back();
                }
            }
        };
        walk(hierarchy);
    }

    struct Leaf {
        RangeEntry* range;
        std::size_t size;
        bool locked;
    };
    std::vector<Leaf> leaves;
    auto sizeOf = [&](std::size_t group) { return group < groupSizes.size() ? groupSizes[group] : std::size_t{0}; };
    if (root.children.empty()) {
        // A direct edit on a leaf is not a cascaded update; its own lock does not apply.
        root.fraction = fraction;
        return {CascadeStatus::Applied, fraction};
    }
    std::size_t group = firstGroup;
    std::function<void(std::vector<HierarchyNode>&, bool)> collect = [&](std::vector<HierarchyNode>& nodes, bool locked) {
        for (auto& node : nodes) {
            for (auto& range : node.ranges) {
                const bool l = locked || range.locked;
                if (range.children.empty()) {
                    leaves.push_back({&range, sizeOf(group++), l});
                } else {
                    collect(range.children, l);
                }
            }
        }
    };
    collect(root.children, false);

    double lockedWeight = 0.0;
    double lockedSum = 0.0;
    double unlockedWeight = 0.0;
    bool anyUnlocked = false;
    for (const auto& leaf : leaves) {
        if (leaf.locked) {
            lockedWeight += static_cast<double>(leaf.size);
            lockedSum += static_cast<double>(leaf.size) * leaf.range->fraction;
        } else {
            anyUnlocked = true;
            unlockedWeight += static_cast<double>(leaf.size);
        }
    }
    if (!anyUnlocked) return {CascadeStatus::NoOpAllLocked, fraction};

    double value = fraction;
    CascadeStatus status = CascadeStatus::Applied;
    if (lockedWeight > 0.0 && unlockedWeight > 0.0) {
        const double total = lockedWeight + unlockedWeight;
        const double solved = (fraction * total - lockedSum) / unlockedWeight;
        value = std::clamp(solved, 0.0, 1.0);
        if (value != solved) status = CascadeStatus::Clamped;
    }
    for (auto& leaf : leaves) {
        if (!leaf.locked) leaf.range->fraction = value;
    }
    return {status, value};
}

void cascadeUp(Hierarchy& hierarchy, const std::vector<std::size_t>& groupSizes) {
    std::size_t group = 1;
    auto sizeOf = [&](std::size_t g) { return g < groupSizes.size() ? groupSizes[g] : std::size_t{0}; };
    // Returns (member count, count-weighted fraction sum) of the subtree.
    std::function<std::pair<double, double>(std::vector<HierarchyNode>&)> visit =
        [&](std::vector<HierarchyNode>& nodes) -> std::pair<double, double> {
        double weight = 0.0;
        double sum = 0.0;
        for (auto& node : nodes) {
            for (auto& range : node.ranges) {
                double w = 0.0;
                double s = 0.0;
                if (range.children.empty()) {
                    w = static_cast<double>(sizeOf(group++));
                    s = w * range.fraction;
                } else {
                    std::tie(w, s) = visit(range.children);
                    range.fraction = w > 0.0 ? s / w : 0.0;
                }
                range.empty = w == 0.0;
                weight += w;
                sum += s;
            }
        }
        return {weight, sum};
    };
    visit(hierarchy);
}

std::vector<double> leafFractions(const Hierarchy& hierarchy) {
    std::vector<double> out;
    std::function<void(const std::vector<HierarchyNode>&)> walk = [&](const std::vector<HierarchyNode>& nodes) {
        for (const auto& node : nodes) {
            for (const auto& range : node.ranges) {
                if (range.children.empty()) {
                    out.push_back(range.fraction);
                } else {
                    walk(range.children);
                }
            }
        }
    };
    walk(hierarchy);
    return out;
}

Histogram groupHistogram(const InstanceTable& table, const GroupAssignment& assignment, int group,
                         const std::string& attribute, int bins) {
    if (bins < 1) throw Error("bins: must be >= 1");
    const auto column = table.scalarColumn(attribute);
    if (!column) throw Error("histogram: unknown scalar attribute '" + attribute + "'");
    std::vector<double> values;
    for (std::size_t row = 0; row < table.size(); ++row) {
        if (assignment.groupOfRow[row] == group) values.push_back(table.scalar(row, *column));
    }
    Histogram h;
    if (values.empty()) return h;
    const auto [mn, mx] = std::minmax_element(values.begin(), values.end());
    h.lo = *mn;
    h.hi = *mx;
    h.counts.assign(static_cast<std::size_t>(bins), 0);
    const double width = (h.hi - h.lo) / bins;
    for (double v : values) {
        std::size_t bin = 0;
        if (width > 0.0) {
            bin = std::min(static_cast<std::size_t>((v - h.lo) / width), static_cast<std::size_t>(bins - 1));
        }
        ++h.counts[bin];
    }
    return h;
}

Hierarchy hierarchyFromJson(const json& doc) {
    Hierarchy h;
    try {
        if (doc.is_array()) {
            for (std::size_t i = 0; i < doc.size(); ++i) h.push_back(nodeFromJson(doc[i], "hierarchy[" + std::to_string(i) + "]"));
        } else if (doc.is_object() && doc.contains("roots")) {
            const json& roots = doc.at("roots");
            if (!roots.is_array()) throw Error("hierarchy.roots: expected an array");
            for (std::size_t i = 0; i < roots.size(); ++i) {
                h.push_back(nodeFromJson(roots[i], "hierarchy.roots[" + std::to_string(i) + "]"));
            }
        } else if (doc.is_object()) {
            h.push_back(nodeFromJson(doc, "hierarchy"));
        } else {
            throw Error("hierarchy: expected an object or array");
        }
    } catch (const json::exception& e) {
        throw Error(std::string("hierarchy: ") + e.what());
    }
    return h;
}

json hierarchyToJson(const Hierarchy& hierarchy) {
    json roots = json::array();
    for (const auto& node : hierarchy) roots.push_back(nodeToJson(node));
    return roots;
}

json predicatesToJson(const std::vector<LinearPredicate>& predicates) {
    json out = json::array();
    for (const auto& p : predicates) {
        json conjuncts = json::array();
        for (const auto& c : p.conjuncts) {
            conjuncts.push_back({{"attribute", c.attribute}, {"lo", boundToJson(c.interval.lo)}, {"hi", boundToJson(c.interval.hi)}});
        }
        out.push_back({{"group", p.groupIndex},
                       {"path", pathKey(p.path)},
                       {"conjuncts", std::move(conjuncts)},
                       {"color", {p.color.r, p.color.g, p.color.b, p.color.a}},
                       {"fraction", p.visibleFraction}});
    }
    return out;
}

Hierarchy expandLevels(const std::vector<std::pair<std::string, std::vector<Interval>>>& levels) {
    std::function<std::vector<HierarchyNode>(std::size_t)> build = [&](std::size_t depth) {
        std::vector<HierarchyNode> nodes;
        if (depth >= levels.size()) return nodes;
        HierarchyNode node;
        node.attribute = levels[depth].first;
        for (const auto& interval : levels[depth].second) {
            RangeEntry entry;
            entry.interval = interval;
            entry.children = build(depth + 1);
            node.ranges.push_back(std::move(entry));
        }
        nodes.push_back(std::move(node));
        return nodes;
    };
    return build(0);
}

} // namespace conductor
