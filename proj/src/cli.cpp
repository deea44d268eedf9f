#include "conductor/cli.hpp"

#include <CLI11.hpp>

#include <chrono>
#include <fstream>
#include <iostream>
#include <optional>

#include "conductor/error.hpp"
#include "conductor/image_io.hpp"
#include "conductor/server.hpp"
#include "conductor/session.hpp"
#include "conductor/synthetic.hpp"

namespace conductor {

using nlohmann::json;

namespace {

json readJson(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw Error("cannot read '" + path + "'");
    try {
        return json::parse(in);
    } catch (const json::exception& e) {
        throw Error(path + ": " + e.what());
    }
}

std::pair<int, int> parseSize(const std::string& text) {
    const auto x = text.find('x');
    try {
        if (x != std::string::npos) {
            std::size_t used = 0;
            const int w = std::stoi(text.substr(0, x), &used);
            const int h = std::stoi(text.substr(x + 1));
            if (used == x && w > 0 && h > 0) return {w, h};
        }
    } catch (const std::exception&) {
    }
    throw Error("--size: expected WxH, got '" + text + "'");
}

/// Runs a command and turns an error event into an exception.
std::vector<SessionEvent> run(Session& session, const json& command) {
    auto events = session.applyCommand(command);
    for (const auto& e : events) {
        if (e.event == "error") throw Error(e.payload.at("message").get<std::string>());
    }
    return events;
}

/// shape -> three volume terciles: the 3x3 hierarchy used by bench.
Hierarchy benchHierarchy(const InstanceTable& table) {
    const std::size_t column = *table.scalarColumn("volume");
    std::vector<double> volumes;
    for (std::size_t row = 0; row < table.size(); ++row) volumes.push_back(table.scalar(row, column));
    std::sort(volumes.begin(), volumes.end());
    const double a = volumes.empty() ? 1.0 : volumes[volumes.size() / 3];
    const double b = volumes.empty() ? 2.0 : volumes[2 * volumes.size() / 3];
    const double inf = std::numeric_limits<double>::infinity();
    return expandLevels({{"shape", {{-0.5, 0.5}, {0.5, 1.5}, {1.5, 2.5}}}, {"volume", {{-inf, a}, {a, b}, {b, inf}}}});
}

int generate(const std::string& out, const std::string& name, std::optional<std::string> scenePath, int grid,
             std::uint64_t seed, std::ostream& log) {
    const SceneSpec spec = scenePath ? sceneSpecFromJson(readJson(*scenePath)) : SceneSpec::preset(grid);
    const Dataset ds = generateSynthetic(spec, seed);
    const auto path = saveDataset(ds, out, name);
    log << json{{"dataset", path.string()}, {"instances", ds.table.size()}}.dump() << '\n';
    return 0;
}

struct RenderArgs {
    std::string dataset;
    std::optional<std::string> hierarchy;
    std::optional<std::string> params;
    std::optional<std::string> camera;
    std::optional<std::string> size;
    std::string out = "frame.png";
    std::optional<std::uint64_t> seed;
    bool ids = false;
};

int render(const RenderArgs& args, std::ostream& log) {
    Session session;
    const json params = args.params ? readJson(*args.params) : json::object();
    if (params.contains("render")) session.renderSettings() = renderSettingsFromJson(params.at("render"));

    json load{{"type", "loadDataset"}, {"path", args.dataset}};
    run(session, load);

    Camera camera = session.camera();
    if (args.camera) camera = cameraFromJson(readJson(*args.camera), camera);
    if (args.size) std::tie(camera.width, camera.height) = parseSize(*args.size);
    run(session, {{"type", "setCamera"}, {"camera", cameraToJson(camera)}});

    json sparsify = params.value("sparsify", json::object());
    if (args.seed) sparsify["seed"] = *args.seed;
    run(session, {{"type", "setSparsifyParams"}, {"params", sparsify}});
    if (args.hierarchy) run(session, {{"type", "setHierarchy"}, {"hierarchy", readJson(*args.hierarchy)}});
    for (const json& lock : params.value("locks", json::array())) {
        run(session, {{"type", "setLock"}, {"path", lock.at("path")}, {"locked", lock.value("locked", true)}});
    }
    const json fractions = params.value("fractions", json::array());
    if (fractions.is_object()) {
        for (const auto& [path, f] : fractions.items()) run(session, {{"type", "setFraction"}, {"path", path}, {"fraction", f}});
    } else {
        for (const json& f : fractions) {
            run(session, {{"type", "setFraction"}, {"path", f.at("path")}, {"fraction", f.at("fraction")}});
        }
    }
    if (params.contains("weights")) run(session, {{"type", "setBlendWeights"}, {"weights", params.at("weights")}});
    if (params.contains("rawTF")) run(session, {{"type", "setRawTF"}, {"points", params.at("rawTF")}});

    const FrameResult frame = session.renderFrame();
    writeBinary(args.out, frame.png);
    std::filesystem::path reportPath = args.out;
    reportPath.replace_extension(".report.json");
    {
        std::ofstream report(reportPath, std::ios::trunc);
        if (!report) throw Error("cannot write '" + reportPath.string() + "'");
        report << reportToJson(frame.report).dump(2) << '\n';
    }
    if (args.ids) {
        std::filesystem::path idsPath = args.out;
        idsPath.replace_extension(".ids");
        writeBinary(idsPath, idBufferBytes(frame.frame.ids));
    }
    log << json{{"image", args.out}, {"report", reportPath.string()}, {"epoch", frame.epoch}}.dump() << '\n';
    return 0;
}

int bench(std::optional<std::string> datasetPath, int grid, const std::string& size, std::uint64_t seed, std::ostream& log) {
    using Clock = std::chrono::steady_clock;
    auto seconds = [](Clock::time_point a, Clock::time_point b) { return std::chrono::duration<double>(b - a).count(); };

    Dataset ds = datasetPath ? loadDataset(*datasetPath) : generateSynthetic(SceneSpec::preset(grid), seed);
    const GradientField gradients = computeGradients(ds.raw);
    ds.table.shuffle(seed);
    const Hierarchy hierarchy = benchHierarchy(ds.table);
    SparsifyParams params;
    params.mode = SparsifyMode::ContextPreserving;
    params.rngSeed = seed;
    Camera camera = Camera::framing(ds.raw.dims, {0.0, -1.0, 0.4}, 512, 512);
    std::tie(camera.width, camera.height) = parseSize(size);
    params.cameraPos = camera.eye;

    json timings;
    auto t0 = Clock::now();
    std::vector<LinearPredicate> predicates = linearize(hierarchy, ds.table);
    auto t1 = Clock::now();
    timings["linearize"] = seconds(t0, t1);
    const GroupAssignment assignment = assignGroups(predicates, ds.table);
    auto t2 = Clock::now();
    timings["assign"] = seconds(t1, t2);
    const ImportanceTable importance = aggregateImportance(ds.seg, ds.table, params, &gradients);
    auto t3 = Clock::now();
    timings["aggregate"] = seconds(t2, t3);
    for (auto& p : predicates) p.visibleFraction = 0.5;
    sparsifyGroups(predicates, assignment, importance, ds.table);
    auto t4 = Clock::now();
    timings["sparsify"] = seconds(t3, t4);
    const VisibilityMask mask = buildVisibilityMask(ds.seg, ds.table, assignment, assignment.groupCount);
    std::vector<Rgba> colors;
    for (const auto& p : predicates) colors.push_back(p.color);
    const TransferFunction2D tf = buildTransferFunction(colors);
    auto t5 = Clock::now();
    timings["maskBuild"] = seconds(t4, t5);

    const RawTransferFunction rawTF;
    const std::vector<int> visibleGroups = visibleGroupLookup(ds.table, assignment);
    SceneView view;
    view.raw = &ds.raw;
    view.gradients = &gradients;
    view.seg = &ds.seg;
    view.mask = &mask;
    view.tfMask = &tf;
    view.tfRaw = &rawTF;
    view.visibleGroups = &visibleGroups;
    const FrameSet frame = renderFrame(view, camera);
    auto t6 = Clock::now();
    timings["render"] = seconds(t5, t6);

    const GridDims& d = ds.raw.dims;
    log << json{{"dims", {d.nx, d.ny, d.nz}},
                {"instances", ds.table.size()},
                {"groups", assignment.groupCount},
                {"image", {frame.width, frame.height}},
                {"seconds", timings}}
               .dump(2)
        << '\n';
    return 0;
}

} // namespace

int cliRun(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
    CLI::App app{"Interactive visibility management for segmented volumes", "conductor"};
    app.require_subcommand(1);

    std::uint64_t seed = 0;
    auto* gen = app.add_subcommand("generate", "Write a synthetic dataset to disk");
    std::string genOut = ".";
    std::string genName = "synthetic";
    std::optional<std::string> genScene;
    int genGrid = 64;
    gen->add_option("--out", genOut, "Output directory");
    gen->add_option("--name", genName, "Dataset name");
    gen->add_option("--scene", genScene, "Scene description JSON");
    gen->add_option("--grid", genGrid, "Grid size of the preset scene")->check(CLI::Range(8, 2048));
    gen->add_option("--seed", seed, "Random seed");

    auto* ren = app.add_subcommand("render", "Render a dataset offline to PNG plus an assessment report");
    RenderArgs renderArgs;
    ren->add_option("--dataset", renderArgs.dataset, "Dataset descriptor JSON")->required();
    ren->add_option("--hierarchy", renderArgs.hierarchy, "Group hierarchy JSON");
    ren->add_option("--params", renderArgs.params, "Sparsify, fraction, blending and render settings JSON");
    ren->add_option("--camera", renderArgs.camera, "Camera JSON");
    ren->add_option("--size", renderArgs.size, "Image size WxH");
    ren->add_option("--out", renderArgs.out, "Output PNG path");
    ren->add_option("--seed", renderArgs.seed, "Sparsification seed");
    ren->add_flag("--ids", renderArgs.ids, "Also write the ID buffer next to the image");

    auto* srv = app.add_subcommand("serve", "Start the HTTP/WebSocket API");
    std::uint16_t port = 8080;
    std::string address = "127.0.0.1";
    srv->add_option("--port", port, "Listening port");
    srv->add_option("--address", address, "Listening address");

    auto* ben = app.add_subcommand("bench", "Time the pipeline stages on a synthetic scene");
    std::optional<std::string> benDataset;
    int benGrid = 256;
    std::string benSize = "512x512";
    ben->add_option("--dataset", benDataset, "Dataset descriptor JSON instead of the synthetic scene");
    ben->add_option("--grid", benGrid, "Grid size of the synthetic scene")->check(CLI::Range(8, 2048));
    ben->add_option("--size", benSize, "Image size WxH");
    ben->add_option("--seed", seed, "Random seed");

    std::vector<std::string> reversed(args.rbegin(), args.rend());
    try {
        app.parse(reversed);
    } catch (const CLI::ParseError& e) {
        return app.exit(e, out, err);
    }

    try {
        if (*gen) return generate(genOut, genName, genScene, genGrid, seed, out);
        if (*ren) return render(renderArgs, out);
        if (*ben) return bench(benDataset, benGrid, benSize, seed, out);
        if (*srv) {
            Server server(address, port);
            out << json{{"listening", address + ":" + std::to_string(server.port())}}.dump() << std::endl;
            server.run();
            return 0;
        }
    } catch (const std::exception& e) {
        err << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}

} // namespace conductor
