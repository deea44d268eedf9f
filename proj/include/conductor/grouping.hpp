#pragma once

#include <cstddef>
#include <limits>
#include <map>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "conductor/vec.hpp"
#include "conductor/voldata.hpp"
#include "json.hpp"

namespace conductor {

/// Half-open [lo, hi). Infinite bounds are allowed.
struct Interval {
    double lo = -std::numeric_limits<double>::infinity();
    double hi = std::numeric_limits<double>::infinity();

    bool contains(double v) const { return v >= lo && v < hi; }
    friend bool operator==(const Interval&, const Interval&) = default;
};

struct HierarchyNode;

/// One value range of a hierarchy node, with its per-range controls and the
/// child predicates applied beneath it.
struct RangeEntry {
    Interval interval;
    std::optional<Rgba> color;
    /// Visible fraction. Authoritative on leaves; derived (cascadeUp) on inner ranges.
    double fraction = 1.0;
    bool locked = false;
    /// Set by cascadeUp when no instance falls beneath this range.
    bool empty = false;
    std::vector<HierarchyNode> children;
};

struct HierarchyNode {
    std::string attribute;
    std::vector<RangeEntry> ranges;
};

using Hierarchy = std::vector<HierarchyNode>;

/// Root-to-range path as (sibling node index, range index) pairs.
using RangePath = std::vector<std::pair<std::size_t, std::size_t>>;

/// "n:r/n:r/..." form used for path-keyed colors and the command protocol.
std::string pathKey(const RangePath& path);
RangePath parsePathKey(const std::string& key);

/// Throws conductor::Error if the path does not name a range.
RangeEntry& rangeAt(Hierarchy& hierarchy, const RangePath& path);
const RangeEntry& rangeAt(const Hierarchy& hierarchy, const RangePath& path);

struct Conjunct {
    std::string attribute;
    std::size_t column = 0;
    Interval interval;
};

struct LinearPredicate {
    std::vector<Conjunct> conjuncts;
    /// 1..N in linearization order.
    int groupIndex = 1;
    Rgba color;
    double visibleFraction = 1.0;
    RangePath path;

    bool matches(const InstanceTable& table, std::size_t row) const;
};

/// Checks attribute names against the table's scalar columns, interval
/// ordering, disjointness within a node, fractions in [0, 1], and that every
/// range of a node carries identically shaped children.
void validateHierarchy(const Hierarchy& hierarchy, const InstanceTable& table);

/// Colors remembered across hierarchy edits, keyed by colorKey.
using ColorMemory = std::map<std::string, Rgba>;

/// Attribute and interval chain of a predicate, e.g. "volume[0,10)/shape[1,2)".
/// Unlike pathKey it survives edits that renumber sibling ranges.
std::string colorKey(const LinearPredicate& predicate);

/// One predicate per root-to-leaf range path, depth-first in author order.
/// Leaf colors come from the range, then the nearest colored ancestor range,
/// then `memory`, then defaultColor(k).
std::vector<LinearPredicate> linearize(const Hierarchy& hierarchy, const InstanceTable& table,
                                       const ColorMemory* memory = nullptr);

struct GroupAssignment {
    /// Group per table row; 0 is the background group.
    std::vector<int> groupOfRow;
    int groupCount = 0;

    /// Instances per group, indexed 0..groupCount.
    std::vector<std::size_t> groupSizes() const;
};

/// First matching predicate wins; no match means background (0).
GroupAssignment assignGroups(const std::vector<LinearPredicate>& predicates, const InstanceTable& table);

double defaultHue(int k);
Rgba hsvToRgb(double h, double s, double v, double alpha = 1.0);
/// Golden-ratio hue sequence at saturation 0.8, value 0.9.
Rgba defaultColor(int k);

enum class CascadeStatus { Applied, Clamped, NoOpAllLocked };

struct CascadeResult {
    CascadeStatus status = CascadeStatus::Applied;
    /// Shared value written to the unlocked leaves.
    double leafValue = 0.0;
};

/// Sets the leaves beneath `target` so that their count-weighted mean equals
/// `fraction`. Locked leaves (a locked range anywhere below the target) keep
/// their value; the unlocked ones share a single value clamped to [0, 1].
/// `groupSizes` is indexed by group (linearization order, 1-based). Call
/// cascadeUp afterwards to refresh the inner ranges.
CascadeResult cascadeDown(Hierarchy& hierarchy, const RangePath& target, double fraction,
                          const std::vector<std::size_t>& groupSizes);

/// Writes the count-weighted mean of leaf fractions into every inner range.
/// Subtrees without members display 0 and are flagged empty.
void cascadeUp(Hierarchy& hierarchy, const std::vector<std::size_t>& groupSizes);

/// Leaf fractions in linearization order.
std::vector<double> leafFractions(const Hierarchy& hierarchy);

struct Histogram {
    double lo = 0.0;
    double hi = 0.0;
    std::vector<std::size_t> counts;

    bool empty() const { return counts.empty(); }
};

/// Equal-width bins over the group's [min, max]. Empty group -> empty histogram.
Histogram groupHistogram(const InstanceTable& table, const GroupAssignment& assignment, int group,
                         const std::string& attribute, int bins);

Hierarchy hierarchyFromJson(const nlohmann::json& doc);
nlohmann::json hierarchyToJson(const Hierarchy& hierarchy);
nlohmann::json predicatesToJson(const std::vector<LinearPredicate>& predicates);

/// Builds the expanded tree for a uniform hierarchy: one level per attribute,
/// the same ranges repeated beneath every range of the level above.
Hierarchy expandLevels(const std::vector<std::pair<std::string, std::vector<Interval>>>& levels);

} // namespace conductor
