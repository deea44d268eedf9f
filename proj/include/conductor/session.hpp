#pragma once

#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

#include "conductor/assess.hpp"
#include "conductor/grouping.hpp"
#include "conductor/mask.hpp"
#include "conductor/render.hpp"
#include "conductor/sparsify.hpp"
#include "conductor/voldata.hpp"
#include "json.hpp"

namespace conductor {

/// Immutable volume data shared between a session and its render snapshots.
struct Volumes {
    RawVolume raw;
    SegmentationVolume seg;
    GradientField gradients;
};

/// Something the session wants delivered to its clients.
struct SessionEvent {
    /// "frame", "report", "state" or "error".
    std::string event;
    std::uint64_t epoch = 0;
    nlohmann::json payload;
    /// PNG bytes for frame events.
    std::vector<std::uint8_t> binary;
};

struct FrameResult {
    std::uint64_t epoch = 0;
    Camera camera;
    FrameSet frame;
    std::vector<std::uint8_t> png;
    GroupVisibilityReport report;
};

/// Everything a render needs, frozen at one epoch.
struct Snapshot {
    std::shared_ptr<const Volumes> volumes;
    std::shared_ptr<const VisibilityMask> mask;
    std::shared_ptr<const TransferFunction2D> tfMask;
    std::vector<int> visibleGroups;
    InstanceTable table;
    GroupAssignment assignment;
    RawTransferFunction rawTF;
    BlendWeights weights;
    RenderSettings settings;
    Camera camera;
    std::uint64_t epoch = 0;

    FrameResult render() const;
    GroupVisibilityReport assess() const;
};

/// One visibility-management session. Commands mutate it one at a time; a
/// failing command leaves it untouched and yields a single error event.
///
/// Command objects carry a "type" field:
///   loadDataset        {path} or {synthetic: scene, seed}
///   setHierarchy       {hierarchy}
///   setFraction        {path: "n:r/...", fraction}
///   setLock            {path, locked}
///   setSparsifyParams  {params}
///   setBlendWeights    {weights}
///   setRawTF           {points}
///   setCamera          {camera}
///   requestFrame       {}
///   requestAssessment  {}
class Session {
public:
    Session() = default;

    std::vector<SessionEvent> applyCommand(const nlohmann::json& command);

    /// Current epoch; bumped by every mutation that invalidates the mask.
    std::uint64_t epoch() const { return state_.epoch; }
    bool hasDataset() const { return state_.volumes != nullptr; }
    const InstanceTable& table() const { return state_.table; }
    const Hierarchy& hierarchy() const { return state_.hierarchy; }
    const std::vector<LinearPredicate>& predicates() const { return state_.predicates; }
    const GroupAssignment& assignment() const { return state_.assignment; }
    const SparsifyParams& sparsifyParams() const { return state_.params; }
    const Camera& camera() const { return state_.camera; }
    const std::optional<GroupVisibilityReport>& lastReport() const { return lastReport_; }
    RenderSettings& renderSettings() { return state_.settings; }

    /// Builds the mask and transfer function for the current epoch if needed.
    Snapshot snapshot();
    /// Full state as JSON, including per-group histograms for the sliders.
    nlohmann::json stateJson() const;

    FrameResult renderFrame();
    GroupVisibilityReport assess();

private:
    struct State {
        std::shared_ptr<const Volumes> volumes;
        InstanceTable table;
        Hierarchy hierarchy;
        std::vector<LinearPredicate> predicates;
        GroupAssignment assignment;
        SparsifyParams params;
        /// Sparsification follows the camera eye when no position was given.
        bool paramsFollowCamera = true;
        ImportanceTable importance;
        nlohmann::json importanceKey;
        BlendWeights weights;
        RawTransferFunction rawTF;
        Camera camera;
        RenderSettings settings;
        ColorMemory colors;
        std::uint64_t epoch = 0;
    };

    void apply(State& s, const std::string& type, const nlohmann::json& command, std::vector<SessionEvent>& events);
    static void regroup(State& s);
    static void resparsify(State& s);
    static std::shared_ptr<const Volumes> loadVolumes(const nlohmann::json& command, InstanceTable& table);

    State state_;
    std::shared_ptr<const VisibilityMask> mask_;
    std::shared_ptr<const TransferFunction2D> tfMask_;
    std::uint64_t maskEpoch_ = static_cast<std::uint64_t>(-1);
    std::optional<GroupVisibilityReport> lastReport_;
};

} // namespace conductor
