#include "fbev/world/dataset.hpp"

#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <stdexcept>

#include "fbev/world/image_io.hpp"

namespace fbev::world {

namespace fs = std::filesystem;

namespace {

std::string frame_stem(int t) {
    std::ostringstream os;
    os << "frame_" << std::setw(4) << std::setfill('0') << t;
    return os.str();
}

std::vector<std::uint8_t> to_bytes(const double* v, std::size_t n) {
    std::vector<std::uint8_t> out(n);
    for (std::size_t i = 0; i < n; ++i) out[i] = v[i] > 0.5 ? 255 : 0;
    return out;
}

}  // namespace

Sequence generate_sequence(const DatasetConfig& cfg, std::uint64_t seed) {
    if (cfg.frames_per_sequence < 1) throw std::invalid_argument("dataset: frames_per_sequence must be >= 1");
    const WorldScene scene = generate_scene(seed, cfg.world);
    // Trajectory randomness is decorrelated from the scene stream.
    const auto poses = simulate_trajectory(scene, cfg.frames_per_sequence, cfg.trajectory,
                                           seed ^ 0x9e3779b97f4a7c15ULL);
    Sequence seq;
    seq.scene_id = scene.scene_id;
    for (const auto& pose : poses) {
        FrameSample f;
        f.image = render_pv(scene, pose, cfg.camera);
        f.gt = make_gt(scene, pose, cfg.gt_spec, cfg.world);
        f.pose = pose;
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

std::vector<Sequence> generate_dataset(const DatasetConfig& cfg, const std::vector<std::uint64_t>& seeds) {
    std::vector<Sequence> out;
    out.reserve(seeds.size());
    for (auto s : seeds) out.push_back(generate_sequence(cfg, s));
    return out;
}

void dump_dataset(const std::string& dir, const std::vector<Sequence>& data, const WorldConfig& world) {
    fs::create_directories(dir);
    std::ofstream manifest(fs::path(dir) / "manifest.txt");
    if (!manifest) throw std::runtime_error("cannot write " + (fs::path(dir) / "manifest.txt").string());
    manifest << "classes";
    for (auto k : world.classes) manifest << ' ' << class_name(k);
    manifest << '\n';
    for (const auto& seq : data) {
        const std::string name = "seq_" + std::to_string(seq.scene_id);
        const fs::path sdir = fs::path(dir) / name;
        fs::create_directories(sdir);
        std::vector<EgoPose> poses;
        for (const auto& f : seq.frames) {
            const std::string stem = frame_stem(f.pose.t);
            write_png((sdir / (stem + ".png")).string(), f.image);
            const std::size_t cells = static_cast<std::size_t>(f.gt.rows) * f.gt.cols;
            for (int c = 0; c < f.gt.classes; ++c) {
                write_pgm((sdir / (stem + "_" + class_name(world.classes[c]) + ".pgm")).string(), f.gt.rows,
                          f.gt.cols, to_bytes(f.gt.maps.data() + c * cells, cells));
            }
            write_pgm((sdir / (stem + "_visibility.pgm")).string(), f.gt.rows, f.gt.cols,
                      to_bytes(f.gt.visibility.data(), cells));
            poses.push_back(f.pose);
        }
        std::ofstream ps(sdir / "poses.txt");
        if (!ps) throw std::runtime_error("cannot write " + (sdir / "poses.txt").string());
        temporal::write_pose_trace(ps, poses);
        manifest << name << ' ' << seq.frames.size() << '\n';
    }
}

Sequence load_sequence(const std::string& dir, const std::vector<ClassKind>& classes) {
    const fs::path sdir(dir);
    std::ifstream ps(sdir / "poses.txt");
    if (!ps) throw std::runtime_error("cannot open " + (sdir / "poses.txt").string());
    const auto poses = temporal::read_pose_trace(ps);
    Sequence seq;
    seq.scene_id = poses.empty() ? 0 : poses.front().scene_id;
    for (const auto& pose : poses) {
        const std::string stem = frame_stem(pose.t);
        FrameSample f;
        f.pose = pose;
        f.image = read_png((sdir / (stem + ".png")).string());
        f.gt.classes = static_cast<int>(classes.size());
        int rows = 0, cols = 0;
        const auto vis = read_pgm((sdir / (stem + "_visibility.pgm")).string(), rows, cols);
        f.gt.rows = rows;
        f.gt.cols = cols;
        for (auto v : vis) f.gt.visibility.push_back(v > 127 ? 1.0 : 0.0);
        for (auto k : classes) {
            int r2 = 0, c2 = 0;
            const auto m = read_pgm((sdir / (stem + "_" + class_name(k) + ".pgm")).string(), r2, c2);
            if (r2 != rows || c2 != cols) throw std::runtime_error(sdir.string() + ": map sizes disagree");
            for (auto v : m) f.gt.maps.push_back(v > 127 ? 1.0 : 0.0);
        }
        seq.frames.push_back(std::move(f));
    }
    return seq;
}

LoadedDataset load_dataset(const std::string& dir) {
    const fs::path mpath = fs::path(dir) / "manifest.txt";
    std::ifstream manifest(mpath);
    if (!manifest) throw std::runtime_error("cannot open " + mpath.string());
    LoadedDataset out;
    std::string line;
    if (!std::getline(manifest, line)) throw std::runtime_error(mpath.string() + ": empty manifest");
    {
        std::istringstream is(line);
        std::string head, name;
        is >> head;
        if (head != "classes") throw std::runtime_error(mpath.string() + ": first line must list the classes");
        while (is >> name) out.classes.push_back(parse_class(name));
    }
    while (std::getline(manifest, line)) {
        if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
        std::istringstream is(line);
        std::string name;
        std::size_t frames = 0;
        if (!(is >> name >> frames)) throw std::runtime_error(mpath.string() + ": bad line '" + line + "'");
        const fs::path sdir = fs::path(dir) / name;
        Sequence seq = load_sequence(sdir.string(), out.classes);
        if (seq.frames.size() != frames) {
            throw std::runtime_error((sdir / "poses.txt").string() + ": " + std::to_string(seq.frames.size()) +
                                     " poses for " + std::to_string(frames) + " frames");
        }
        out.sequences.push_back(std::move(seq));
    }
    return out;
}

std::vector<std::uint64_t> parse_seed_range(const std::string& text) {
    std::vector<std::uint64_t> out;
    const auto dots = text.find("..");
    try {
        if (dots != std::string::npos) {
            const std::uint64_t a = std::stoull(text.substr(0, dots));
            const std::uint64_t b = std::stoull(text.substr(dots + 2));
            if (b < a) throw std::invalid_argument("empty");
            for (std::uint64_t s = a; s <= b; ++s) out.push_back(s);
        } else {
            std::istringstream is(text);
            std::string item;
            while (std::getline(is, item, ',')) out.push_back(std::stoull(item));
        }
    } catch (const std::exception&) {
        throw std::invalid_argument("bad seed list '" + text + "' (expected a..b or a,b,c)");
    }
    if (out.empty()) throw std::invalid_argument("seed list '" + text + "' is empty");
    return out;
}

}  // namespace fbev::world
