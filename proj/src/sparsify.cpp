#include "conductor/sparsify.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "conductor/error.hpp"
#include "conductor/parallel.hpp"

namespace conductor {

using nlohmann::json;

void SparsifyParams::validate() const {
    if (!std::isfinite(kappaT) || kappaT < 0.0) throw Error("sparsify.kappaT: must be finite and >= 0");
    if (!std::isfinite(kappaS) || kappaS <= 0.0) throw Error("sparsify.kappaS: must be finite and > 0");
    for (int a = 0; a < 3; ++a) {
        if (!std::isfinite(cameraPos[a])) throw Error("sparsify.cameraPos: must be finite");
    }
}

double importanceUniform(const Vec3&) { return 1.0; }

double importanceDepth(const Vec3& x, const Vec3& camera, double normalizer) { return length(x - camera) / normalizer; }

double headlightShading(const Vec3& gradient, const Vec3& x, const Vec3& camera, const ShadingCoefficients& k) {
    const Vec3 n = normalize(gradient);
    const Vec3 l = normalize(camera - x);
    if (length(n) == 0.0 || length(l) == 0.0) return std::clamp(k.ambient, 0.0, 1.0);
    const double cosine = std::abs(dot(n, l));
    const double s = k.ambient + k.diffuse * cosine + k.specular * std::pow(cosine, k.shininess);
    return std::clamp(s, 0.0, 1.0);
}

double contextImportance(double g, double s, double pd, double kappaT, double kappaS) {
    const double exponent = std::pow(kappaT * s * pd, kappaS);
    return std::pow(g, exponent);
}

double importanceContext(const Vec3& x, const Vec3& gradient, double maxMagnitude, const Vec3& camera, double kappaT,
                         double kappaS, double depthNormalizer, const ShadingCoefficients& k) {
    const double g = maxMagnitude > 0.0 ? std::min(1.0, length(gradient) / maxMagnitude) : 0.0;
    const double s = headlightShading(gradient, x, camera, k);
    const double pd = std::min(1.0, importanceDepth(x, camera, depthNormalizer));
    return contextImportance(g, s, pd, kappaT, kappaS);
}

double sceneDiameter(const GridDims& dims) { return length(dims.extent()); }

ImportanceTable aggregateImportance(const SegmentationVolume& seg, const InstanceTable& table,
                                    const SparsifyParams& params, const GradientField* gradients) {
    params.validate();
    if (params.mode == SparsifyMode::ContextPreserving && gradients == nullptr) {
        throw Error("sparsify: the context-preserving mode needs a gradient field");
    }
    const GridDims& dims = seg.dims;
    const auto lookup = table.denseRowLookup();
    const double diameter = sceneDiameter(dims);
    const std::size_t rows = table.size();

    // Fixed slab partition so the reduction order never depends on thread count.
    constexpr int kSlab = 16;
    const std::size_t slabs = static_cast<std::size_t>((dims.nz + kSlab - 1) / kSlab);
    std::vector<std::vector<double>> partial(slabs, std::vector<double>(rows, 0.0));
    std::vector<std::vector<std::size_t>> counts(slabs, std::vector<std::size_t>(rows, 0));

    parallelFor(
        slabs,
        [&](std::size_t begin, std::size_t end) {
            for (std::size_t slab = begin; slab < end; ++slab) {
                auto& sum = partial[slab];
                auto& cnt = counts[slab];
                const int z0 = static_cast<int>(slab) * kSlab;
                const int z1 = std::min(dims.nz, z0 + kSlab);
                for (int z = z0; z < z1; ++z) {
                    for (int y = 0; y < dims.ny; ++y) {
                        for (int x = 0; x < dims.nx; ++x) {
                            const std::size_t v = dims.index(x, y, z);
                            const std::uint32_t id = seg.ids[v];
                            if (id == 0 || id >= lookup.size() || lookup[id] == InstanceTable::npos) continue;
                            const std::size_t row = lookup[id];
                            const Vec3 p = dims.voxelCenter(x, y, z);
                            double value = 1.0;
                            switch (params.mode) {
                            case SparsifyMode::Uniform: value = importanceUniform(p); break;
                            case SparsifyMode::Depth: value = importanceDepth(p, params.cameraPos, diameter); break;
                            case SparsifyMode::ContextPreserving:
                                value = importanceContext(p, gradients->at(v), gradients->maxMagnitude, params.cameraPos,
                                                          params.kappaT, params.kappaS, diameter, params.shading);
                                break;
                            }
                            sum[row] += value;
                            ++cnt[row];
                        }
                    }
                }
            }
        },
        1);

    ImportanceTable out;
    out.importance.assign(rows, 0.0);
    for (std::size_t row = 0; row < rows; ++row) {
        double sum = 0.0;
        std::size_t n = 0;
        for (std::size_t slab = 0; slab < slabs; ++slab) {
            sum += partial[slab][row];
            n += counts[slab][row];
        }
        out.importance[row] = n > 0 ? sum / static_cast<double>(n) : 0.0;
    }
    return out;
}

std::size_t hideCount(double visibleFraction, std::size_t groupSize) {
    const double f = std::clamp(visibleFraction, 0.0, 1.0);
    const double raw = (1.0 - f) * static_cast<double>(groupSize);
    return std::min(groupSize, static_cast<std::size_t>(std::floor(raw + 1e-9)));
}

std::vector<std::size_t> sparsifyGroups(const std::vector<LinearPredicate>& predicates, const GroupAssignment& assignment,
                                        const ImportanceTable& importances, InstanceTable& table) {
    if (assignment.groupOfRow.size() != table.size() || importances.importance.size() != table.size()) {
        throw Error("sparsify: assignment and importance tables must cover every instance");
    }
    for (std::size_t row = 0; row < table.size(); ++row) table.setHiddenScratch(row, false);

    std::vector<std::vector<std::size_t>> members(static_cast<std::size_t>(assignment.groupCount) + 1);
    for (std::size_t row = 0; row < table.size(); ++row) {
        members[static_cast<std::size_t>(assignment.groupOfRow[row])].push_back(row);
    }
    std::vector<std::size_t> hiddenPerGroup(members.size(), 0);

    for (const auto& predicate : predicates) {
        const auto k = static_cast<std::size_t>(predicate.groupIndex);
        if (k == 0 || k >= members.size()) continue;
        auto& group = members[k];
        const std::size_t toHide = hideCount(predicate.visibleFraction, group.size());
        std::sort(group.begin(), group.end(), [&](std::size_t a, std::size_t b) {
            const double ia = importances.importance[a];
            const double ib = importances.importance[b];
            if (ia != ib) return ia < ib;
            return table.shuffleRank(a) < table.shuffleRank(b);
        });

        // Pass 1: instances hidden by earlier calls keep priority.
        std::size_t hidden = 0;
        for (std::size_t row : group) {
            if (hidden >= toHide) break;
            if (!table.hiddenScratch(row) && !table.visible(row)) {
                table.setHiddenScratch(row, true);
                ++hidden;
            }
        }
        // Pass 2: top up with the least important, show the rest.
        for (std::size_t row : group) {
            if (table.hiddenScratch(row)) continue;
            if (hidden < toHide) {
                table.setVisible(row, false);
                table.setHiddenScratch(row, true);
                ++hidden;
            } else {
                table.setVisible(row, true);
            }
        }
        hiddenPerGroup[k] = hidden;
    }
    return hiddenPerGroup;
}

const char* sparsifyModeName(SparsifyMode mode) {
    switch (mode) {
    case SparsifyMode::Uniform: return "uniform";
    case SparsifyMode::Depth: return "depth";
    case SparsifyMode::ContextPreserving: return "context";
    }
    return "uniform";
}

SparsifyParams sparsifyParamsFromJson(const json& doc, const SparsifyParams& base) {
    if (!doc.is_object()) throw Error("sparsify: expected an object");
    SparsifyParams p = base;
    try {
        if (doc.contains("mode")) {
            const std::string mode = doc.at("mode").get<std::string>();
            if (mode == "uniform") {
                p.mode = SparsifyMode::Uniform;
            } else if (mode == "depth") {
                p.mode = SparsifyMode::Depth;
            } else if (mode == "context" || mode == "contextPreserving") {
                p.mode = SparsifyMode::ContextPreserving;
            } else {
                throw Error("sparsify.mode: unknown mode '" + mode + "'");
            }
        }
        if (doc.contains("cameraPos")) {
            const json& c = doc.at("cameraPos");
            if (!c.is_array() || c.size() != 3) throw Error("sparsify.cameraPos: expected [x, y, z]");
            p.cameraPos = {c[0].get<double>(), c[1].get<double>(), c[2].get<double>()};
        }
        p.kappaT = doc.value("kappaT", p.kappaT);
        p.kappaS = doc.value("kappaS", p.kappaS);
        p.rngSeed = doc.value("seed", p.rngSeed);
        if (doc.contains("shading")) {
            const json& s = doc.at("shading");
            p.shading.ambient = s.value("ambient", p.shading.ambient);
            p.shading.diffuse = s.value("diffuse", p.shading.diffuse);
            p.shading.specular = s.value("specular", p.shading.specular);
            p.shading.shininess = s.value("shininess", p.shading.shininess);
        }
    } catch (const json::exception& e) {
        throw Error(std::string("sparsify: ") + e.what());
    }
    p.validate();
    return p;
}

json sparsifyParamsToJson(const SparsifyParams& p) {
    return json{{"mode", sparsifyModeName(p.mode)},
                {"cameraPos", {p.cameraPos.x, p.cameraPos.y, p.cameraPos.z}},
                {"kappaT", p.kappaT},
                {"kappaS", p.kappaS},
                {"seed", p.rngSeed},
                {"shading",
                 {{"ambient", p.shading.ambient},
                  {"diffuse", p.shading.diffuse},
                  {"specular", p.shading.specular},
                  {"shininess", p.shading.shininess}}}};
}

} // namespace conductor
