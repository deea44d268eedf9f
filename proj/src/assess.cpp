#include "conductor/assess.hpp"

#include "conductor/error.hpp"

namespace conductor {

GroupVisibilityReport assessVisibility(const IdBuffer& buffer, const GroupAssignment& assignment,
                                       const InstanceTable& table, std::uint64_t expectedEpoch) {
    if (buffer.epoch != expectedEpoch) {
        throw Error("assess: id buffer from epoch " + std::to_string(buffer.epoch) + ", expected " +
                    std::to_string(expectedEpoch));
    }
    if (assignment.groupOfRow.size() != table.size()) throw Error("assess: assignment does not cover the instance table");

    GroupVisibilityReport report;
    report.epoch = buffer.epoch;
    report.cameraHash = buffer.cameraHash;
    report.groups.assign(static_cast<std::size_t>(assignment.groupCount) + 1, GroupCounts{});

    const std::vector<std::size_t> rowOf = table.denseRowLookup();
    std::vector<std::uint8_t> seen(table.size(), 0);
    for (std::uint32_t id : buffer.ids) {
        if (id == 0 || id >= rowOf.size() || rowOf[id] == InstanceTable::npos) continue;
        seen[rowOf[id]] = 1;
    }
    for (std::size_t row = 0; row < table.size(); ++row) {
        const int group = assignment.groupOfRow[row];
        if (group == 0) continue;
        GroupCounts& c = report.groups[static_cast<std::size_t>(group)];
        ++c.total;
        if (!table.visible(row)) {
            ++c.hiddenBySparsification;
        } else if (seen[row]) {
            ++c.visibleOnScreen;
        } else {
            ++c.occluded;
        }
    }
    return report;
}

nlohmann::json reportToJson(const GroupVisibilityReport& report) {
    nlohmann::json groups = nlohmann::json::array();
    for (std::size_t k = 1; k < report.groups.size(); ++k) {
        const GroupCounts& c = report.groups[k];
        groups.push_back({{"group", k},
                          {"total", c.total},
                          {"hidden", c.hiddenBySparsification},
                          {"visible", c.visibleOnScreen},
                          {"occluded", c.occluded}});
    }
    return {{"epoch", report.epoch}, {"cameraHash", report.cameraHash}, {"groups", std::move(groups)}};
}

} // namespace conductor
