#include "fbev/harness/trainer.hpp"

#include <cmath>
#include <cstdio>
#include <ostream>

#include "fbev/diff/ops.hpp"
#include "fbev/loss/losses.hpp"

namespace fbev::harness {

namespace {

void check_classes(const ExperimentConfig& cfg, const std::vector<world::ClassKind>& classes,
                   const std::string& where) {
    if (classes != cfg.world.classes)
        throw std::runtime_error("class list of " + where + " does not match the config");
}

}  // namespace

std::vector<world::Sequence> training_data(const ExperimentConfig& cfg) {
    if (!cfg.data_dir.empty()) {
        auto loaded = world::load_dataset(cfg.data_dir);
        check_classes(cfg, loaded.classes, cfg.data_dir);
        return loaded.sequences;
    }
    return world::generate_dataset(cfg.dataset_config(), world::parse_seed_range(cfg.train_seeds));
}

std::vector<world::Sequence> evaluation_data(const ExperimentConfig& cfg) {
    return world::generate_dataset(cfg.dataset_config(), world::parse_seed_range(cfg.eval_seeds));
}

std::string format_step_log(const StepLog& l) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "step %d lr %.6e total %.9f bce %.9f uncert %.9f iou %.9f grad_norm %.6e",
                  l.step, l.lr, l.total, l.bce, l.uncert, l.iou, l.grad_norm);
    return buf;
}

Trainer::Trainer(const ExperimentConfig& cfg, const std::vector<world::Sequence>& data)
    : cfg_(cfg), net_(cfg.network_config(), cfg.seed) {
    cfg_.validate();
    opt_ = AdamW(cfg_.optim, net_.params());
    const auto spec = net_.output_spec();
    const int nc = cfg_.num_classes();
    std::vector<double> positives(static_cast<std::size_t>(nc), 0.0);
    for (const auto& seq : data) {
        for (const auto& f : seq.frames) {
            const bool first = &f == &seq.frames.front();
            if (f.gt.classes != nc || f.gt.rows != spec.Z || f.gt.cols != spec.X)
                throw std::runtime_error("training frame ground truth does not match the config");
            const auto& cam = cfg_.net.vt.camera;
            if (f.image.height != cam.image_h || f.image.width != cam.image_w)
                throw std::runtime_error("training frame image size does not match the config");
            Frame fr;
            fr.image = Value::constant({3, f.image.height, f.image.width}, f.image.planar());
            fr.gt = Value::constant({nc, spec.Z, spec.X}, f.gt.maps);
            fr.visibility = f.gt.visibility;
            fr.pose = f.pose;
            fr.starts_sequence = first;
            frames_.push_back(std::move(fr));
            const std::size_t cells = static_cast<std::size_t>(spec.Z) * spec.X;
            for (int k = 0; k < nc; ++k)
                for (std::size_t i = 0; i < cells; ++i) positives[k] += f.gt.maps[k * cells + i];
        }
    }
    if (frames_.empty()) throw std::runtime_error("training data has no frames");
    weights_.alpha = cfg_.alpha;
    weights_.beta = cfg_.beta;
    if (cfg_.class_weighting) {
        const double total = static_cast<double>(frames_.size()) * spec.Z * spec.X;
        weights_.class_weights = loss::inverse_sqrt_frequency_weights(positives, total);
    }
    const int batch = cfg_.optim.batch;
    for (int b = 0; b < batch; ++b) {
        banks_.emplace_back(std::max(cfg_.net.history, 1));
        cursors_.push_back(static_cast<std::size_t>(b) * frames_.size() / batch);
    }
}

StepLog Trainer::step() {
    const int k = steps_done() + 1;
    auto& ps = net_.params();
    ps.zero_grad();
    const int batch = cfg_.optim.batch;
    StepLog log;
    log.step = k;
    log.lr = scheduled_lr(cfg_.optim, k);
    Value sum;
    std::vector<Value> calibrated;
    for (int b = 0; b < batch; ++b) {
        const Frame& f = frames_[cursors_[b]];
        // History never crosses into the start of a sequence, including wrap-around.
        if (f.starts_sequence) banks_[b].clear();
        const auto out = net_.forward(f.image, f.pose, banks_[b].read());
        const auto terms = loss::total_loss(out.probs, f.gt, f.visibility, weights_);
        sum = sum.defined() ? diff::add(sum, terms.total) : terms.total;
        log.bce += terms.bce / batch;
        log.uncert += terms.uncert / batch;
        log.iou += terms.iou / batch;
        calibrated.push_back(out.calibrated);
    }
    const Value loss = diff::scale(sum, 1.0 / batch);
    log.total = loss.item();
    const std::pair<const char*, double> parts[] = {
        {"bce", log.bce}, {"uncert", log.uncert}, {"iou", log.iou}, {"total", log.total}};
    for (const auto& [name, v] : parts) {
        if (!std::isfinite(v))
            throw NonFiniteLoss("non-finite " + std::string(name) + " loss at step " + std::to_string(k));
    }
    loss.backward();
    log.grad_norm = opt_.step(ps, log.lr);
    for (int b = 0; b < batch; ++b) {
        const Frame& f = frames_[cursors_[b]];
        banks_[b].push(calibrated[b], f.pose);
        cursors_[b] = (cursors_[b] + 1) % frames_.size();
    }
    return log;
}

std::vector<StepLog> Trainer::run(std::ostream* os, int last_step) {
    if (last_step < 0) last_step = cfg_.optim.steps;
    std::vector<StepLog> logs;
    while (steps_done() < last_step) {
        logs.push_back(step());
        const auto& l = logs.back();
        if (os && (l.step % cfg_.log_every == 0 || l.step == last_step)) *os << format_step_log(l) << '\n';
    }
    return logs;
}

}  // namespace fbev::harness
