#pragma once

#include <cstddef>
#include <cstdint>
#include <vector>

#include "conductor/grouping.hpp"
#include "conductor/voldata.hpp"
#include "json.hpp"

namespace conductor {

/// An ID frame buffer tagged with the sparsification epoch and camera it was
/// rendered for.
struct IdBuffer {
    std::vector<std::uint32_t> ids;
    std::uint64_t epoch = 0;
    std::uint64_t cameraHash = 0;
};

struct GroupCounts {
    std::size_t total = 0;
    std::size_t hiddenBySparsification = 0;
    std::size_t visibleOnScreen = 0;
    std::size_t occluded = 0;

    friend bool operator==(const GroupCounts&, const GroupCounts&) = default;
};

struct GroupVisibilityReport {
    /// Indexed by group; entry 0 (background) is left zero.
    std::vector<GroupCounts> groups;
    std::uint64_t epoch = 0;
    std::uint64_t cameraHash = 0;
};

/// Counts unique on-screen ids per group. Ids of hidden or background
/// instances are ignored. Throws conductor::Error when the buffer's epoch
/// differs from `expectedEpoch`.
GroupVisibilityReport assessVisibility(const IdBuffer& buffer, const GroupAssignment& assignment,
                                       const InstanceTable& table, std::uint64_t expectedEpoch);

nlohmann::json reportToJson(const GroupVisibilityReport& report);

} // namespace conductor
