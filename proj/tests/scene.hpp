#pragma once

#include "conductor/mask.hpp"
#include "conductor/render.hpp"
#include "support.hpp"

namespace fixtures {

/// Dataset plus everything derived from it that a frame needs.
struct RenderScene {
    Dataset ds;
    GradientField gradients;
    std::vector<LinearPredicate> predicates;
    GroupAssignment assignment;
    VisibilityMask mask;
    TransferFunction2D tf;
    RawTransferFunction rawTF;
    std::vector<int> visibleGroups;
    BlendWeights weights;
    RenderSettings settings;

    explicit RenderScene(Dataset dataset, const Hierarchy& hierarchy = {}) : ds(std::move(dataset)) {
        gradients = computeGradients(ds.raw);
        Hierarchy h = hierarchy;
        if (h.empty()) h = {HierarchyNode{ds.table.scalarColumns().front(), {RangeEntry{}}}};
        predicates = linearize(h, ds.table);
        assignment = assignGroups(predicates, ds.table);
        rebuild();
    }

    /// Refreshes the mask and lookups after visibility edits.
    void rebuild() {
        mask = buildVisibilityMask(ds.seg, ds.table, assignment, assignment.groupCount);
        std::vector<Rgba> colors;
        for (const auto& p : predicates) colors.push_back(p.color);
        tf = buildTransferFunction(colors, 64);
        visibleGroups = visibleGroupLookup(ds.table, assignment);
    }

    SceneView view() const {
        SceneView v;
        v.raw = &ds.raw;
        v.gradients = &gradients;
        v.seg = &ds.seg;
        v.mask = &mask;
        v.tfMask = &tf;
        v.tfRaw = &rawTF;
        v.visibleGroups = &visibleGroups;
        v.weights = weights;
        v.settings = settings;
        return v;
    }
};

/// Axis-aligned camera looking down -z at the volume center.
inline Camera topCamera(const GridDims& dims, int size) {
    const Vec3 e = dims.extent();
    Camera c;
    c.target = e * 0.5;
    c.eye = {e.x * 0.5, e.y * 0.5, e.z * 4.0};
    c.up = {0, 1, 0};
    c.fovYDegrees = 30.0;
    c.width = size;
    c.height = size;
    return c;
}

} // namespace fixtures
