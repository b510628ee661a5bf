#include "fbev/harness/ablate.hpp"

#include <cstdio>
#include <ostream>
#include <stdexcept>

#include "fbev/harness/evaluate.hpp"
#include "fbev/harness/trainer.hpp"

namespace fbev::harness {

AblationAxis parse_axis(const std::string& name) {
    if (name == "n_dec") return AblationAxis::DecoderLayers;
    if (name == "n_his") return AblationAxis::History;
    throw std::invalid_argument("unknown ablation axis '" + name + "' (expected n_dec or n_his)");
}

std::string axis_name(AblationAxis axis) { return axis == AblationAxis::DecoderLayers ? "n_dec" : "n_his"; }

ExperimentConfig with_axis_value(const ExperimentConfig& base, AblationAxis axis, int value) {
    if (value < 0) throw std::invalid_argument(axis_name(axis) + " values must be nonnegative");
    ExperimentConfig cfg = base;
    if (axis == AblationAxis::DecoderLayers)
        cfg.net.vt.decoder_layers = value;
    else
        cfg.net.history = value;
    cfg.validate();
    return cfg;
}

std::string AblationTable::to_text() const {
    std::string out;
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%-20s", axis_name(axis).c_str());
    out += buf;
    for (int v : values) {
        std::snprintf(buf, sizeof(buf), "%10d", v);
        out += buf;
    }
    out += '\n';
    auto row = [&](const char* label, auto get, const std::vector<loss::MetricReport>& reports) {
        std::snprintf(buf, sizeof(buf), "%-20s", label);
        out += buf;
        for (const auto& r : reports) {
            std::snprintf(buf, sizeof(buf), "%10.4f", get(r));
            out += buf;
        }
        out += '\n';
    };
    row("Layout mIoU", [](const loss::MetricReport& r) { return r.layout_miou; }, all_cells);
    row("Object mIoU", [](const loss::MetricReport& r) { return r.object_miou; }, all_cells);
    row("Total mIoU", [](const loss::MetricReport& r) { return r.miou; }, all_cells);
    row("Layout (occluded)", [](const loss::MetricReport& r) { return r.layout_miou; }, occluded);
    return out;
}

AblationTable ablate(const ExperimentConfig& base, AblationAxis axis, const std::vector<int>& values,
                     const std::vector<world::Sequence>& train, const std::vector<world::Sequence>& eval,
                     std::ostream* log) {
    if (values.empty()) throw std::invalid_argument("ablation needs at least one value");
    AblationTable table;
    table.axis = axis;
    table.values = values;
    for (int v : values) {
        const ExperimentConfig cfg = with_axis_value(base, axis, v);
        if (log) *log << "# " << axis_name(axis) << " = " << v << '\n';
        Trainer trainer(cfg, train);
        trainer.run(log);
        table.all_cells.push_back(evaluate(trainer.network(), eval, cfg.world.classes).report);
        EvalOptions occ;
        occ.subset = CellSubset::Occluded;
        table.occluded.push_back(evaluate(trainer.network(), eval, cfg.world.classes, occ).report);
    }
    return table;
}

}  // namespace fbev::harness
