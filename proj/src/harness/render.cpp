#include "fbev/harness/render.hpp"

#include <cstdio>
#include <filesystem>
#include <stdexcept>

#include "fbev/world/image_io.hpp"

namespace fbev::harness {

namespace {

void set_pixel(world::Image& img, int r, int c, const world::Rgb& rgb) {
    const std::size_t i = (static_cast<std::size_t>(r) * img.width + c) * 3;
    img.rgb[i] = rgb[0];
    img.rgb[i + 1] = rgb[1];
    img.rgb[i + 2] = rgb[2];
}

world::Image blank(int h, int w, const world::Rgb& fill) {
    world::Image img{h, w, std::vector<std::uint8_t>(static_cast<std::size_t>(h) * w * 3)};
    for (int r = 0; r < h; ++r)
        for (int c = 0; c < w; ++c) set_pixel(img, r, c, fill);
    return img;
}

void blit(world::Image& dst, const world::Image& src, int x0, int scale) {
    for (int r = 0; r < src.height * scale; ++r)
        for (int c = 0; c < src.width * scale; ++c) set_pixel(dst, r, x0 + c, src.pixel(r / scale, c / scale));
}

}  // namespace

world::Image colorize_map(const std::vector<double>& maps, const std::vector<world::ClassKind>& classes, int rows,
                          int cols, double threshold) {
    const std::size_t cells = static_cast<std::size_t>(rows) * cols;
    if (maps.size() != cells * classes.size()) throw std::invalid_argument("colorize_map: size mismatch");
    world::Image img = blank(rows, cols, kEmptyCellColor);
    for (std::size_t k = 0; k < classes.size(); ++k) {
        const auto color = world::class_color(classes[k]);
        for (std::size_t i = 0; i < cells; ++i)
            if (maps[k * cells + i] > threshold) set_pixel(img, static_cast<int>(i) / cols, static_cast<int>(i) % cols, color);
    }
    return img;
}

world::Image occlusion_overlay(const world::GroundTruth& gt, const std::vector<world::ClassKind>& classes) {
    world::Image img = colorize_map(gt.maps, classes, gt.rows, gt.cols);
    for (int r = 0; r < gt.rows; ++r) {
        for (int c = 0; c < gt.cols; ++c) {
            if (gt.visibility[static_cast<std::size_t>(r) * gt.cols + c] != 0.0) continue;
            auto p = img.pixel(r, c);
            for (auto& ch : p) ch = static_cast<std::uint8_t>(ch / 2);
            set_pixel(img, r, c, p);
        }
    }
    return img;
}

PanelLayout PanelLayout::for_frame(int image_h, int image_w, int map_rows, int map_cols) {
    PanelLayout l;
    l.scale = std::max(1, (image_h + map_rows - 1) / map_rows);
    l.panel_h = std::max(image_h, map_rows * l.scale);
    l.image_w = image_w;
    l.map_w = map_cols * l.scale;
    return l;
}

world::Image compose_panels(const world::Image& input, const world::Image& gt_map, const world::Image& pred_map,
                            const world::Image& overlay, const PanelLayout& layout) {
    world::Image out = blank(layout.panel_h, layout.width(), kPanelGapColor);
    for (int i = 1; i <= 3; ++i) {
        const int x0 = layout.panel_x(i);
        for (int r = 0; r < layout.panel_h; ++r)
            for (int c = 0; c < layout.map_w; ++c) set_pixel(out, r, x0 + c, kEmptyCellColor);
    }
    for (int r = 0; r < layout.panel_h; ++r)
        for (int c = 0; c < layout.image_w; ++c) set_pixel(out, r, c, kEmptyCellColor);
    blit(out, input, layout.panel_x(0), 1);
    blit(out, gt_map, layout.panel_x(1), layout.scale);
    blit(out, pred_map, layout.panel_x(2), layout.scale);
    blit(out, overlay, layout.panel_x(3), layout.scale);
    return out;
}

std::vector<std::string> render_maps(const model::Network& net, const world::Sequence& seq,
                                     const std::vector<world::ClassKind>& classes, const std::string& out_dir) {
    if (static_cast<int>(classes.size()) != net.config().classes)
        throw std::runtime_error("sequence class count does not match the checkpoint");
    std::error_code ec;
    std::filesystem::create_directories(out_dir, ec);
    if (ec) throw std::runtime_error("cannot create output directory " + out_dir + ": " + ec.message());
    const auto spec = net.output_spec();
    temporal::MemoryBank bank(std::max(net.config().history, 1));
    diff::NoGradGuard no_grad;
    std::vector<std::string> paths;
    for (std::size_t i = 0; i < seq.frames.size(); ++i) {
        const auto& f = seq.frames[i];
        const Value image = Value::constant({3, f.image.height, f.image.width}, f.image.planar());
        const auto out = net.forward(image, f.pose, bank.read());
        bank.push(out.calibrated, f.pose);
        const auto layout = PanelLayout::for_frame(f.image.height, f.image.width, spec.Z, spec.X);
        const auto panel = compose_panels(f.image, colorize_map(f.gt.maps, classes, spec.Z, spec.X),
                                          colorize_map(out.probs.data(), classes, spec.Z, spec.X),
                                          occlusion_overlay(f.gt, classes), layout);
        char name[64];
        std::snprintf(name, sizeof(name), "frame_%04zu_panel.png", i);
        const std::string path = (std::filesystem::path(out_dir) / name).string();
        world::write_png(path, panel);
        paths.push_back(path);
    }
    return paths;
}

}  // namespace fbev::harness
