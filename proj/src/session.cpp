#include "conductor/session.hpp"

#include <algorithm>

#include "conductor/error.hpp"
#include "conductor/image_io.hpp"
#include "conductor/synthetic.hpp"

namespace conductor {

using nlohmann::json;

namespace {

constexpr int kHistogramBins = 16;

const json& member(const json& command, const char* key) {
    if (!command.contains(key)) throw Error(std::string("command: missing '") + key + "'");
    return command.at(key);
}

std::vector<Rgba> groupColors(const std::vector<LinearPredicate>& predicates) {
    std::vector<Rgba> colors;
    colors.reserve(predicates.size());
    for (const auto& p : predicates) colors.push_back(p.color);
    return colors;
}

json countsJson(const std::vector<std::size_t>& v) {
    json out = json::array();
    for (std::size_t x : v) out.push_back(x);
    return out;
}

} // namespace

FrameResult Snapshot::render() const {
    SceneView view;
    view.raw = &volumes->raw;
    view.gradients = &volumes->gradients;
    view.seg = &volumes->seg;
    view.mask = mask.get();
    view.tfMask = tfMask.get();
    view.tfRaw = &rawTF;
    view.visibleGroups = &visibleGroups;
    view.weights = weights;
    view.settings = settings;

    FrameResult out;
    out.epoch = epoch;
    out.camera = camera;
    out.frame = renderFrame(view, camera);
    const std::vector<std::uint8_t> rgba = out.frame.toRgba8();
    out.png = encodePng(out.frame.width, out.frame.height, rgba);
    out.report = assessVisibility({out.frame.ids, epoch, camera.hash()}, assignment, table, epoch);
    return out;
}

GroupVisibilityReport Snapshot::assess() const {
    SceneView view;
    view.raw = &volumes->raw;
    view.gradients = &volumes->gradients;
    view.seg = &volumes->seg;
    view.mask = mask.get();
    view.tfMask = tfMask.get();
    view.tfRaw = &rawTF;
    view.visibleGroups = &visibleGroups;
    view.weights = weights;
    view.settings = settings;
    auto ids = renderIdOnly(view, camera).first;
    return assessVisibility({std::move(ids), epoch, camera.hash()}, assignment, table, epoch);
}

std::vector<SessionEvent> Session::applyCommand(const json& command) {
    std::vector<SessionEvent> events;
    try {
        if (!command.is_object()) throw Error("command: expected a JSON object");
        if (!command.contains("type") || !command.at("type").is_string()) throw Error("command: missing 'type'");
        const std::string type = command.at("type").get<std::string>();

        if (type == "requestFrame") {
            FrameResult r = renderFrame();
            json meta{{"width", r.frame.width}, {"height", r.frame.height}, {"cameraHash", r.camera.hash()}};
            events.push_back({"frame", r.epoch, std::move(meta), std::move(r.png)});
            events.push_back({"report", r.epoch, reportToJson(r.report), {}});
            return events;
        }
        if (type == "requestAssessment") {
            const GroupVisibilityReport report = assess();
            events.push_back({"report", report.epoch, reportToJson(report), {}});
            return events;
        }

        State next = state_;
        apply(next, type, command, events);
        state_ = std::move(next);
        events.push_back({"state", state_.epoch, stateJson(), {}});
    } catch (const json::exception& e) {
        events.clear();
        events.push_back({"error", state_.epoch, {{"message", std::string("command: ") + e.what()}}, {}});
    } catch (const std::exception& e) {
        events.clear();
        events.push_back({"error", state_.epoch, {{"message", e.what()}}, {}});
    }
    return events;
}

std::shared_ptr<const Volumes> Session::loadVolumes(const json& command, InstanceTable& table) {
    Dataset ds;
    if (command.contains("path")) {
        ds = loadDataset(member(command, "path").get<std::string>());
    } else if (command.contains("synthetic")) {
        ds = generateSynthetic(sceneSpecFromJson(command.at("synthetic")), command.value("seed", std::uint64_t{0}));
    } else {
        throw Error("loadDataset: expected 'path' or 'synthetic'");
    }
    auto volumes = std::make_shared<Volumes>();
    volumes->gradients = computeGradients(ds.raw);
    volumes->raw = std::move(ds.raw);
    volumes->seg = std::move(ds.seg);
    table = std::move(ds.table);
    return volumes;
}

void Session::apply(State& s, const std::string& type, const json& command, std::vector<SessionEvent>&) {
    if (type == "loadDataset") {
        s.volumes = loadVolumes(command, s.table);
        s.table.shuffle(s.params.rngSeed);
        s.hierarchy.clear();
        s.colors.clear();
        s.importanceKey = nullptr;
        if (command.contains("camera")) {
            s.camera = cameraFromJson(command.at("camera"), s.camera);
        } else {
            s.camera = Camera::framing(s.volumes->raw.dims, {0.0, -1.0, 0.4}, s.camera.width, s.camera.height);
        }
        regroup(s);
        resparsify(s);
        ++s.epoch;
        return;
    }
    if (type == "setBlendWeights") {
        s.weights = blendWeightsFromJson(member(command, "weights"), s.weights);
        return;
    }
    if (type == "setRawTF") {
        s.rawTF = rawTransferFunctionFromJson(member(command, "points"));
        return;
    }
    if (type == "setCamera") {
        // Moving the camera does not re-run sparsification; the hidden set
        // stays stable until the next grouping or ratio edit.
        s.camera = cameraFromJson(member(command, "camera"), s.camera);
        return;
    }

    if (!s.volumes) throw Error(type + ": no dataset loaded");
    if (type == "setHierarchy") {
        Hierarchy h = hierarchyFromJson(member(command, "hierarchy"));
        validateHierarchy(h, s.table);
        s.hierarchy = std::move(h);
        regroup(s);
        resparsify(s);
    } else if (type == "setFraction") {
        const RangePath path = parsePathKey(member(command, "path").get<std::string>());
        const double f = member(command, "fraction").get<double>();
        if (!(f >= 0.0 && f <= 1.0)) throw Error("setFraction: fraction must be in [0, 1]");
        const std::vector<std::size_t> sizes = s.assignment.groupSizes();
        cascadeDown(s.hierarchy, path, f, sizes);
        cascadeUp(s.hierarchy, sizes);
        const std::vector<double> leaves = leafFractions(s.hierarchy);
        for (std::size_t i = 0; i < s.predicates.size(); ++i) s.predicates[i].visibleFraction = leaves[i];
        resparsify(s);
    } else if (type == "setLock") {
        const RangePath path = parsePathKey(member(command, "path").get<std::string>());
        rangeAt(s.hierarchy, path).locked = member(command, "locked").get<bool>();
        return;
    } else if (type == "setSparsifyParams") {
        const json& doc = member(command, "params");
        const std::uint64_t oldSeed = s.params.rngSeed;
        s.params = sparsifyParamsFromJson(doc, s.params);
        s.paramsFollowCamera = !doc.contains("cameraPos");
        if (s.params.rngSeed != oldSeed) s.table.shuffle(s.params.rngSeed);
        resparsify(s);
    } else {
        throw Error("command: unknown type '" + type + "'");
    }
    ++s.epoch;
}

void Session::regroup(State& s) {
    s.predicates = linearize(s.hierarchy, s.table, &s.colors);
    s.assignment = assignGroups(s.predicates, s.table);
    for (const auto& p : s.predicates) s.colors[colorKey(p)] = p.color;
    cascadeUp(s.hierarchy, s.assignment.groupSizes());
}

void Session::resparsify(State& s) {
    SparsifyParams params = s.params;
    if (s.paramsFollowCamera) params.cameraPos = s.camera.eye;
    const json key = sparsifyParamsToJson(params);
    if (key != s.importanceKey || s.importance.importance.size() != s.table.size()) {
        s.importance = aggregateImportance(s.volumes->seg, s.table, params, &s.volumes->gradients);
        s.importanceKey = key;
    }
    sparsifyGroups(s.predicates, s.assignment, s.importance, s.table);
    // Background instances are never sparsified.
    for (std::size_t row = 0; row < s.table.size(); ++row) {
        if (s.assignment.groupOfRow[row] == 0) s.table.setVisible(row, true);
    }
}

Snapshot Session::snapshot() {
    if (!state_.volumes) throw Error("session: no dataset loaded");
    if (maskEpoch_ != state_.epoch || !mask_) {
        mask_ = std::make_shared<const VisibilityMask>(
            buildVisibilityMask(state_.volumes->seg, state_.table, state_.assignment, state_.assignment.groupCount));
        tfMask_ = std::make_shared<const TransferFunction2D>(buildTransferFunction(groupColors(state_.predicates)));
        maskEpoch_ = state_.epoch;
    }
    Snapshot snap;
    snap.volumes = state_.volumes;
    snap.mask = mask_;
    snap.tfMask = tfMask_;
    snap.visibleGroups = visibleGroupLookup(state_.table, state_.assignment);
    snap.table = state_.table;
    snap.assignment = state_.assignment;
    snap.rawTF = state_.rawTF;
    snap.weights = state_.weights;
    snap.settings = state_.settings;
    snap.camera = state_.camera;
    snap.epoch = state_.epoch;
    return snap;
}

FrameResult Session::renderFrame() {
    FrameResult r = snapshot().render();
    lastReport_ = r.report;
    return r;
}

GroupVisibilityReport Session::assess() {
    GroupVisibilityReport r = snapshot().assess();
    lastReport_ = r;
    return r;
}

json Session::stateJson() const {
    const State& s = state_;
    json out{{"epoch", s.epoch},
             {"hasDataset", s.volumes != nullptr},
             {"hierarchy", hierarchyToJson(s.hierarchy)},
             {"predicates", predicatesToJson(s.predicates)},
             {"sparsify", sparsifyParamsToJson(s.params)},
             {"weights", blendWeightsToJson(s.weights)},
             {"rawTF", rawTransferFunctionToJson(s.rawTF)},
             {"camera", cameraToJson(s.camera)},
             {"render", renderSettingsToJson(s.settings)}};
    if (!s.volumes) return out;

    const GridDims& d = s.volumes->raw.dims;
    out["dims"] = {d.nx, d.ny, d.nz};
    out["instances"] = s.table.size();
    out["attributes"] = s.table.scalarColumns();
    out["groupSizes"] = countsJson(s.assignment.groupSizes());
    std::vector<std::size_t> hidden(static_cast<std::size_t>(s.assignment.groupCount) + 1, 0);
    for (std::size_t row = 0; row < s.table.size(); ++row) {
        if (!s.table.visible(row)) ++hidden[static_cast<std::size_t>(s.assignment.groupOfRow[row])];
    }
    out["hiddenCounts"] = countsJson(hidden);

    // Slider scents: each group over the attribute of its deepest range.
    json histograms = json::array();
    for (const auto& p : s.predicates) {
        if (p.conjuncts.empty()) continue;
        const std::string& attribute = p.conjuncts.back().attribute;
        const Histogram h = groupHistogram(s.table, s.assignment, p.groupIndex, attribute, kHistogramBins);
        histograms.push_back({{"group", p.groupIndex},
                              {"path", pathKey(p.path)},
                              {"attribute", attribute},
                              {"lo", h.lo},
                              {"hi", h.hi},
                              {"counts", countsJson(h.counts)}});
    }
    out["histograms"] = std::move(histograms);
    if (lastReport_ && lastReport_->epoch == s.epoch) out["report"] = reportToJson(*lastReport_);
    return out;
}

} // namespace conductor
