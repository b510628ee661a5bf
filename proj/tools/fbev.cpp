#include <CLI11.hpp>

#include <algorithm>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>
#include <stdexcept>

#include "fbev/harness/ablate.hpp"
#include "fbev/harness/checkpoint.hpp"
#include "fbev/harness/config.hpp"
#include "fbev/harness/evaluate.hpp"
#include "fbev/harness/gradcheck_suite.hpp"
#include "fbev/harness/render.hpp"
#include "fbev/harness/trainer.hpp"
#include "fbev/world/dataset.hpp"

namespace fs = std::filesystem;
using namespace fbev;
using namespace fbev::harness;

namespace {

ExperimentConfig config_or_preset(const std::string& path) {
    return path.empty() ? desk_preset() : load_config(path);
}

std::vector<int> parse_int_list(const std::string& text) {
    std::vector<int> out;
    std::istringstream is(text);
    std::string item;
    while (std::getline(is, item, ',')) {
        std::size_t used = 0;
        int v = 0;
        try {
            v = std::stoi(item, &used);
        } catch (const std::exception&) {
            used = 0;
        }
        if (used == 0 || used != item.size()) throw std::invalid_argument("bad integer list '" + text + "'");
        out.push_back(v);
    }
    if (out.empty()) throw std::invalid_argument("empty value list");
    return out;
}

std::string class_list(const std::vector<world::ClassKind>& classes) {
    std::string out;
    for (auto k : classes) out += (out.empty() ? "" : ",") + world::class_name(k);
    return out;
}

int cmd_train(const std::string& config_path, const std::uint64_t* seed, const std::string& out_dir,
              const std::string& resume, int checkpoint_every) {
    ExperimentConfig cfg = config_or_preset(config_path);
    if (seed) cfg.seed = *seed;
    cfg.validate();
    fs::create_directories(out_dir);
    const std::string ckpt_path = (fs::path(out_dir) / "checkpoint.bin").string();
    const auto data = training_data(cfg);

    Trainer trainer = [&] {
        if (resume.empty()) return Trainer(cfg, data);
        const Checkpoint ck = read_checkpoint(resume);
        if (ck.config.to_text() != cfg.to_text())
            std::cerr << "note: resuming with the configuration stored in " << resume << '\n';
        return restore_trainer(ck, data);
    }();

    const std::string log_path = (fs::path(out_dir) / "train.log").string();
    std::ofstream log(log_path, resume.empty() ? std::ios::trunc : std::ios::app);
    if (!log) throw std::runtime_error("cannot write " + log_path);
    {
        std::ofstream c(fs::path(out_dir) / "config.txt");
        c << trainer.config().to_text();
    }
    const int total = trainer.config().optim.steps;
    const int chunk = checkpoint_every > 0 ? checkpoint_every : total;
    while (trainer.steps_done() < total) {
        const int next = std::min(total, (trainer.steps_done() / chunk + 1) * chunk);
        trainer.run(&log, next);
        log.flush();
        write_checkpoint(ckpt_path, capture(trainer));
    }
    if (trainer.steps_done() == 0 || !fs::exists(ckpt_path)) write_checkpoint(ckpt_path, capture(trainer));
    std::cout << "trained " << trainer.steps_done() << " steps; checkpoint " << ckpt_path << ", log " << log_path
              << '\n';
    return 0;
}

int cmd_eval(const std::string& ckpt_path, const std::string& data_dir, bool paper_protocol,
             const std::string& subset) {
    const Checkpoint ck = read_checkpoint(ckpt_path);
    const auto classes = ck.config.world.classes;
    const auto loaded = world::load_dataset(data_dir);
    if (loaded.classes != classes) {
        throw std::runtime_error("class mismatch: checkpoint has " + std::to_string(classes.size()) + " (" +
                                 class_list(classes) + "), data has " + std::to_string(loaded.classes.size()) +
                                 " (" + class_list(loaded.classes) + ")");
    }
    EvalOptions opts;
    opts.paper_protocol = paper_protocol;
    if (subset == "visible")
        opts.subset = CellSubset::Visible;
    else if (subset == "occluded")
        opts.subset = CellSubset::Occluded;
    const model::Network net = restore_network(ck);
    const EvalResult r = evaluate(net, loaded.sequences, classes, opts);
    std::cout << "frames " << r.frames << " maps " << r.counted_rows << "x" << r.counted_cols << '\n'
              << r.report.to_text();
    return 0;
}

int cmd_ablate(const std::string& config_path, const std::string& axis_text, const std::string& values_text,
               const std::string& log_path) {
    const ExperimentConfig cfg = config_or_preset(config_path);
    const AblationAxis axis = parse_axis(axis_text);
    const auto values = parse_int_list(values_text);
    for (int v : values) with_axis_value(cfg, axis, v);  // reject bad values before training
    const auto train = training_data(cfg);
    const auto eval = evaluation_data(cfg);
    std::ofstream log;
    if (!log_path.empty()) {
        log.open(log_path);
        if (!log) throw std::runtime_error("cannot write " + log_path);
    }
    const AblationTable table = ablate(cfg, axis, values, train, eval, log_path.empty() ? nullptr : &log);
    std::cout << table.to_text();
    return 0;
}

int cmd_gradcheck(const std::string& module) {
    const auto entries = run_gradcheck_suite(module);
    bool ok = true;
    for (const auto& e : entries) {
        std::printf("%-5s %-18s %-48s max rel err %.3e\n", e.passed ? "ok" : "FAIL", e.module.c_str(),
                    e.name.c_str(), e.worst);
        ok = ok && e.passed;
    }
    if (!ok) {
        std::cerr << "gradcheck failed\n";
        return 1;
    }
    std::printf("%zu checks passed\n", entries.size());
    return 0;
}

int cmd_gen_data(const std::string& config_path, const std::string& seeds, const std::string& out_dir) {
    const ExperimentConfig cfg = config_or_preset(config_path);
    const auto data = world::generate_dataset(cfg.dataset_config(), world::parse_seed_range(seeds));
    world::dump_dataset(out_dir, data, cfg.world);
    std::cout << "wrote " << data.size() << " sequences to " << out_dir << '\n';
    return 0;
}

int cmd_render(const std::string& ckpt_path, const std::string& seq_dir, const std::string& out_dir) {
    const Checkpoint ck = read_checkpoint(ckpt_path);
    const auto seq = world::load_sequence(seq_dir, ck.config.world.classes);
    const model::Network net = restore_network(ck);
    const auto files = render_maps(net, seq, ck.config.world.classes, out_dir);
    std::cout << "wrote " << files.size() << " panels to " << out_dir << '\n';
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"fbev: BEV segmentation with cycle view transform and temporal fusion"};
    app.require_subcommand(1);

    std::string config_path, out_dir = "run", resume, ckpt, data_dir, axis, values, module, seeds, seq_dir,
                                 subset = "all", log_path;
    std::uint64_t seed = 0;
    int checkpoint_every = 0;
    bool paper_protocol = false;

    auto* train = app.add_subcommand("train", "train a model and write checkpoint.bin and train.log");
    train->add_option("--config", config_path, "key = value config file (desk preset if omitted)");
    auto* seed_opt = train->add_option("--seed", seed, "override the config seed");
    train->add_option("--out", out_dir, "output directory")->capture_default_str();
    train->add_option("--resume", resume, "continue from this checkpoint");
    train->add_option("--checkpoint-every", checkpoint_every, "also checkpoint every N steps");

    auto* eval = app.add_subcommand("eval", "evaluate a checkpoint on a dumped dataset");
    eval->add_option("--checkpoint", ckpt)->required();
    eval->add_option("--data", data_dir, "directory written by gen-data")->required();
    eval->add_flag("--paper-protocol", paper_protocol, "resize maps to 196x200 before counting");
    eval->add_option("--subset", subset, "cells to count")
        ->check(CLI::IsMember({"all", "visible", "occluded"}))
        ->capture_default_str();

    auto* abl = app.add_subcommand("ablate", "train and evaluate one run per axis value");
    abl->add_option("--axis", axis)->required()->check(CLI::IsMember({"n_dec", "n_his"}));
    abl->add_option("--values", values, "comma list, e.g. 0,1,2")->required();
    abl->add_option("--config", config_path);
    abl->add_option("--log", log_path, "write training logs here");

    auto* gc = app.add_subcommand("gradcheck", "finite-difference gradient suite");
    gc->add_option("--module", module, "one of ops, loss, view_transformer, fusion");

    auto* gen = app.add_subcommand("gen-data", "generate synthetic sequences to disk");
    gen->add_option("--seeds", seeds, "a..b or a,b,c")->required();
    gen->add_option("--out", out_dir)->required();
    gen->add_option("--config", config_path);

    auto* ren = app.add_subcommand("render", "write input/GT/prediction/occlusion panels per frame");
    ren->add_option("--checkpoint", ckpt)->required();
    ren->add_option("--sequence", seq_dir, "a seq_<id> directory written by gen-data")->required();
    ren->add_option("--out", out_dir)->capture_default_str();

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 2;
    }

    try {
        if (*train) return cmd_train(config_path, seed_opt->count() ? &seed : nullptr, out_dir, resume,
                                     checkpoint_every);
        if (*eval) return cmd_eval(ckpt, data_dir, paper_protocol, subset);
        if (*abl) return cmd_ablate(config_path, axis, values, log_path);
        if (*gc) return cmd_gradcheck(module);
        if (*gen) return cmd_gen_data(config_path, seeds, out_dir);
        if (*ren) return cmd_render(ckpt, seq_dir, out_dir == "run" ? "render" : out_dir);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return 1;
    }
    return 1;
}
