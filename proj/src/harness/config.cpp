#include "fbev/harness/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <functional>
#include <sstream>

namespace fbev::harness {

namespace {

std::string trim(const std::string& s) {
    const auto b = s.find_first_not_of(" \t\r");
    if (b == std::string::npos) return "";
    const auto e = s.find_last_not_of(" \t\r");
    return s.substr(b, e - b + 1);
}

std::string fmt_double(double v) {
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

double to_double(const std::string& key, const std::string& v) {
    try {
        std::size_t used = 0;
        const double d = std::stod(v, &used);
        if (used != v.size()) throw std::invalid_argument(v);
        return d;
    } catch (const std::exception&) {
        throw ConfigError("config key '" + key + "': expected a number, got '" + v + "'");
    }
}

long long to_int(const std::string& key, const std::string& v) {
    long long out = 0;
    const auto res = std::from_chars(v.data(), v.data() + v.size(), out);
    if (res.ec != std::errc() || res.ptr != v.data() + v.size())
        throw ConfigError("config key '" + key + "': expected an integer, got '" + v + "'");
    return out;
}

bool to_bool(const std::string& key, const std::string& v) {
    if (v == "true" || v == "1") return true;
    if (v == "false" || v == "0") return false;
    throw ConfigError("config key '" + key + "': expected true or false, got '" + v + "'");
}

std::vector<std::string> split_list(const std::string& v) {
    std::vector<std::string> out;
    std::stringstream ss(v);
    std::string item;
    while (std::getline(ss, item, ',')) {
        item = trim(item);
        if (!item.empty()) out.push_back(item);
    }
    return out;
}

struct Key {
    const char* name;
    std::function<std::string(const ExperimentConfig&)> get;
    std::function<void(ExperimentConfig&, const std::string&, const std::string&)> set;
};

#define FBEV_DOUBLE(NAME, FIELD)                                                                       \
    Key{NAME, [](const ExperimentConfig& c) { return fmt_double(c.FIELD); },                          \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_double(k, v); }}
#define FBEV_INT(NAME, FIELD)                                                                          \
    Key{NAME, [](const ExperimentConfig& c) { return std::to_string(c.FIELD); },                      \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) {                          \
            c.FIELD = static_cast<decltype(c.FIELD)>(to_int(k, v));                                    \
        }}
#define FBEV_BOOL(NAME, FIELD)                                                                         \
    Key{NAME, [](const ExperimentConfig& c) { return std::string(c.FIELD ? "true" : "false"); },      \
        [](ExperimentConfig& c, const std::string& k, const std::string& v) { c.FIELD = to_bool(k, v); }}
#define FBEV_STRING(NAME, FIELD)                                                                       \
    Key{NAME, [](const ExperimentConfig& c) { return c.FIELD; },                                      \
        [](ExperimentConfig& c, const std::string&, const std::string& v) { c.FIELD = v; }}

const std::vector<Key>& keys() {
    static const std::vector<Key> table = {
        FBEV_INT("image_h", net.vt.camera.image_h),
        FBEV_INT("image_w", net.vt.camera.image_w),
        FBEV_DOUBLE("focal", net.vt.camera.f),
        FBEV_DOUBLE("u0", net.vt.camera.u0),
        FBEV_DOUBLE("v0", camera_v0),
        FBEV_DOUBLE("camera_height", camera_height),
        FBEV_INT("channels", net.vt.channels),
        FBEV_INT("levels", net.vt.levels),
        FBEV_INT("decoder_layers", net.vt.decoder_layers),
        FBEV_INT("heads", net.vt.heads),
        FBEV_INT("history", net.history),
        Key{"stem_widths",
            [](const ExperimentConfig& c) {
                std::string s;
                for (std::size_t i = 0; i < c.net.stem_widths.size(); ++i)
                    s += (i ? "," : "") + std::to_string(c.net.stem_widths[i]);
                return s;
            },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.net.stem_widths.clear();
                for (const auto& item : split_list(v)) c.net.stem_widths.push_back(static_cast<int>(to_int(k, item)));
            }},
        FBEV_INT("head_mid", net.head_mid),
        FBEV_INT("head_up", net.head_up),
        FBEV_INT("bev_rows", net.vt.bev.Z),
        FBEV_INT("bev_cols", net.vt.bev.X),
        FBEV_DOUBLE("cell_m", net.vt.bev.cell_m),
        FBEV_DOUBLE("z_min", net.vt.bev.z_min),
        Key{"classes",
            [](const ExperimentConfig& c) {
                std::string s;
                for (std::size_t i = 0; i < c.world.classes.size(); ++i)
                    s += (i ? "," : "") + world::class_name(c.world.classes[i]);
                return s;
            },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                c.world.classes.clear();
                for (const auto& item : split_list(v)) {
                    try {
                        c.world.classes.push_back(world::parse_class(item));
                    } catch (const std::exception&) {
                        throw ConfigError("config key '" + k + "': unknown class '" + item + "'");
                    }
                }
            }},
        FBEV_DOUBLE("road_width_min", world.road_width_min),
        FBEV_DOUBLE("road_width_max", world.road_width_max),
        FBEV_DOUBLE("route_length", world.route_length),
        FBEV_DOUBLE("route_back", world.route_back),
        FBEV_DOUBLE("max_curvature", world.max_curvature),
        FBEV_BOOL("straight_road", world.straight_road),
        FBEV_DOUBLE("side_road_prob", world.side_road_prob),
        FBEV_INT("crossings_min", world.crossings_min),
        FBEV_INT("crossings_max", world.crossings_max),
        FBEV_INT("cars_min", world.cars_min),
        FBEV_INT("cars_max", world.cars_max),
        FBEV_INT("pedestrians_min", world.pedestrians_min),
        FBEV_INT("pedestrians_max", world.pedestrians_max),
        FBEV_DOUBLE("car_speed_max", world.car_speed_max),
        FBEV_DOUBLE("pedestrian_speed_max", world.pedestrian_speed_max),
        FBEV_BOOL("lateral_agents", world.lateral_agents),
        FBEV_DOUBLE("agent_zone", world.agent_zone),
        Key{"motion",
            [](const ExperimentConfig& c) { return world::motion_model_name(c.trajectory.model); },
            [](ExperimentConfig& c, const std::string& k, const std::string& v) {
                try {
                    c.trajectory.model = world::parse_motion_model(v);
                } catch (const std::exception&) {
                    throw ConfigError("config key '" + k + "': unknown motion model '" + v + "'");
                }
            }},
        FBEV_DOUBLE("speed_min", trajectory.speed_min),
        FBEV_DOUBLE("speed_max", trajectory.speed_max),
        FBEV_DOUBLE("lateral_jitter", trajectory.lateral_jitter),
        FBEV_INT("frames_per_sequence", frames_per_sequence),
        FBEV_STRING("train_seeds", train_seeds),
        FBEV_STRING("eval_seeds", eval_seeds),
        FBEV_STRING("data_dir", data_dir),
        FBEV_DOUBLE("lr", optim.lr),
        FBEV_INT("warmup_steps", optim.warmup_steps),
        FBEV_INT("steps", optim.steps),
        FBEV_INT("batch", optim.batch),
        FBEV_DOUBLE("weight_decay", optim.weight_decay),
        FBEV_DOUBLE("adam_beta1", optim.beta1),
        FBEV_DOUBLE("adam_beta2", optim.beta2),
        FBEV_DOUBLE("adam_eps", optim.eps),
        FBEV_DOUBLE("grad_clip", optim.grad_clip),
        FBEV_DOUBLE("alpha", alpha),
        FBEV_DOUBLE("beta", beta),
        FBEV_BOOL("class_weighting", class_weighting),
        FBEV_INT("seed", seed),
        FBEV_INT("log_every", log_every),
    };
    return table;
}

#undef FBEV_DOUBLE
#undef FBEV_INT
#undef FBEV_BOOL
#undef FBEV_STRING

void require(bool ok, const std::string& what) {
    if (!ok) throw ConfigError("invalid config: " + what);
}

}  // namespace

ExperimentConfig desk_preset() {
    ExperimentConfig c;
    c.preset = "desk";
    return c;
}

ExperimentConfig paper_preset() {
    ExperimentConfig c;
    c.preset = "paper";
    c.net.vt.camera = {800.0, 512.0, 1024, 1024};
    c.camera_v0 = 512.0;
    c.net.vt.bev = {98, 100, 0.5, 1.0};
    c.net.vt.levels = 5;
    c.net.vt.channels = 512;
    c.net.vt.decoder_layers = 2;
    c.net.vt.heads = 4;
    c.net.history = 2;
    c.net.stem_widths = {64, 128, 256};
    c.net.head_mid = 128;
    c.net.head_up = 128;
    c.optim.lr = 4e-4;
    c.optim.warmup_steps = 1500;
    c.optim.steps = 40000;
    c.optim.batch = 64;
    c.alpha = 0.001;
    c.beta = 0.01;
    return c;
}

void ExperimentConfig::validate() const {
    require(preset == "desk" || preset == "paper", "preset must be desk or paper");
    try {
        net.vt.camera.validate();
        net.vt.bev.validate();
        world.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    require(camera_height > 0.0, "camera_height must be positive");
    require(net.vt.channels > 0, "channels must be positive");
    require(net.vt.levels >= 1 && net.vt.levels <= 5, "levels must be in 1..5");
    require(net.vt.decoder_layers >= 0, "decoder_layers must be nonnegative");
    require(net.vt.heads > 0 && net.vt.channels % net.vt.heads == 0, "heads must divide channels");
    require(net.history >= 0, "history must be nonnegative");
    require(net.stem_widths.size() == 3, "stem_widths needs three entries");
    for (int w : net.stem_widths) require(w > 0, "stem_widths must be positive");
    require(net.head_mid > 0 && net.head_up > 0, "head widths must be positive");
    require(frames_per_sequence > 0, "frames_per_sequence must be positive");
    require(optim.lr >= 0.0, "lr must be nonnegative");
    require(optim.warmup_steps >= 0, "warmup_steps must be nonnegative");
    require(optim.steps > 0, "steps must be positive");
    require(optim.warmup_steps <= optim.steps, "warmup_steps must not exceed steps");
    require(optim.batch > 0, "batch must be positive");
    require(optim.weight_decay >= 0.0, "weight_decay must be nonnegative");
    require(optim.beta1 >= 0.0 && optim.beta1 < 1.0, "adam_beta1 must be in [0, 1)");
    require(optim.beta2 >= 0.0 && optim.beta2 < 1.0, "adam_beta2 must be in [0, 1)");
    require(optim.eps > 0.0, "adam_eps must be positive");
    require(optim.grad_clip >= 0.0, "grad_clip must be nonnegative");
    require(alpha >= 0.0 && beta >= 0.0, "loss weights must be nonnegative");
    require(log_every > 0, "log_every must be positive");
    try {
        world::parse_seed_range(train_seeds);
        world::parse_seed_range(eval_seeds);
    } catch (const std::exception& e) {
        throw ConfigError(std::string("invalid config: bad seed range: ") + e.what());
    }
}

std::string ExperimentConfig::to_text() const {
    std::string out = "preset = " + preset + "\n";
    for (const auto& k : keys()) out += std::string(k.name) + " = " + k.get(*this) + "\n";
    return out;
}

world::DatasetConfig ExperimentConfig::dataset_config() const {
    world::DatasetConfig d;
    d.world = world;
    d.trajectory = trajectory;
    d.camera = {net.vt.camera, camera_v0, camera_height};
    d.gt_spec = net.vt.bev.upsampled(2);
    d.frames_per_sequence = frames_per_sequence;
    return d;
}

model::NetworkConfig ExperimentConfig::network_config() const {
    model::NetworkConfig n = net;
    n.classes = num_classes();
    return n;
}

void apply_setting(ExperimentConfig& cfg, const std::string& key, const std::string& value) {
    if (key == "preset") {
        if (value != "desk" && value != "paper") throw ConfigError("config key 'preset': unknown preset '" + value + "'");
        cfg.preset = value;
        return;
    }
    for (const auto& k : keys()) {
        if (key == k.name) {
            k.set(cfg, key, value);
            return;
        }
    }
    throw ConfigError("unknown config key '" + key + "'");
}

ExperimentConfig parse_config(const std::string& text) {
    std::vector<std::pair<std::string, std::string>> entries;
    std::string preset = "desk";
    std::stringstream ss(text);
    std::string line;
    int line_no = 0;
    while (std::getline(ss, line)) {
        ++line_no;
        const auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = trim(line);
        if (line.empty()) continue;
        const auto eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(line_no) + ": expected 'key = value'");
        const std::string key = trim(line.substr(0, eq));
        const std::string value = trim(line.substr(eq + 1));
        if (key.empty()) throw ConfigError("config line " + std::to_string(line_no) + ": empty key");
        if (key == "preset") preset = value;
        entries.emplace_back(key, value);
    }
    ExperimentConfig cfg;
    if (preset == "paper")
        cfg = paper_preset();
    else if (preset == "desk")
        cfg = desk_preset();
    else
        throw ConfigError("config key 'preset': unknown preset '" + preset + "'");
    for (const auto& [k, v] : entries) apply_setting(cfg, k, v);
    cfg.validate();
    return cfg;
}

ExperimentConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    std::stringstream buf;
    buf << in.rdbuf();
    return parse_config(buf.str());
}

}  // namespace fbev::harness
