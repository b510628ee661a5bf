#include "fbev/harness/checkpoint.hpp"

#include <cstdint>
#include <cstring>
#include <fstream>
#include <sstream>
#include <stdexcept>

namespace fbev::harness {

namespace {

constexpr char kMagic[8] = {'F', 'B', 'E', 'V', 'C', 'K', 'P', 'T'};

void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

std::uint64_t read_u64(std::istream& is, const std::string& path) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw std::runtime_error("truncated checkpoint " + path);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

std::string shape_text(const diff::Shape& s) {
    std::string out;
    for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "x" : "") + std::to_string(s[i]);
    return out.empty() ? "scalar" : out;
}

diff::Shape parse_shape(const std::string& text) {
    diff::Shape s;
    if (text == "scalar") return s;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, 'x')) s.push_back(std::stoi(item));
    return s;
}

void put(Checkpoint& c, std::string name, diff::Shape shape, std::vector<double> data) {
    c.arrays.push_back({std::move(name), std::move(shape), std::move(data)});
}

std::string bank_key(std::size_t b, std::size_t k, const char* what) {
    return "bank/" + std::to_string(b) + "/" + std::to_string(k) + "/" + what;
}

void copy_into(Value& v, const NamedArray& a) {
    if (a.shape != v.shape())
        throw std::runtime_error("checkpoint array " + a.name + " has shape " + shape_text(a.shape) + ", expected " +
                                 shape_text(v.shape()));
    v.mutable_data() = a.data;
}

void load_params(model::ParameterSet& ps, const Checkpoint& ckpt) {
    for (auto& p : ps.items()) copy_into(p.value, ckpt.get("param/" + p.name));
}

}  // namespace

const NamedArray* Checkpoint::find(const std::string& name) const {
    for (const auto& a : arrays)
        if (a.name == name) return &a;
    return nullptr;
}

const NamedArray& Checkpoint::get(const std::string& name) const {
    const NamedArray* a = find(name);
    if (!a) throw std::runtime_error("checkpoint has no array " + name);
    return *a;
}

std::string manifest_path(const std::string& path) { return path + ".manifest"; }

void write_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream blob(path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot write checkpoint " + path);
    std::ostringstream manifest;
    std::istringstream cfg_text(ckpt.config.to_text());
    for (std::string line; std::getline(cfg_text, line);) manifest << "# " << line << '\n';
    manifest << "arrays " << ckpt.arrays.size() << '\n';
    blob.write(kMagic, sizeof(kMagic));
    write_u64(blob, ckpt.arrays.size());
    std::uint64_t offset = sizeof(kMagic) + 8;
    for (const auto& a : ckpt.arrays) {
        if (diff::numel(a.shape) != a.data.size())
            throw std::runtime_error("checkpoint array " + a.name + " size does not match its shape");
        const std::uint64_t nbytes = a.data.size() * sizeof(double);
        write_u64(blob, nbytes);
        offset += 8;
        manifest << a.name << ' ' << shape_text(a.shape) << ' ' << offset << '\n';
        static_assert(sizeof(double) == 8);
        for (double d : a.data) {
            std::uint64_t bits;
            std::memcpy(&bits, &d, 8);
            write_u64(blob, bits);
        }
        offset += nbytes;
    }
    if (!blob) throw std::runtime_error("failed writing checkpoint " + path);
    std::ofstream mf(manifest_path(path));
    if (!mf) throw std::runtime_error("cannot write manifest " + manifest_path(path));
    mf << manifest.str();
    if (!mf) throw std::runtime_error("failed writing manifest " + manifest_path(path));
}

Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream mf(manifest_path(path));
    if (!mf) throw std::runtime_error("cannot open manifest " + manifest_path(path));
    Checkpoint ckpt;
    std::string cfg_text;
    std::vector<std::pair<std::string, diff::Shape>> entries;
    std::vector<std::uint64_t> offsets;
    std::size_t count = 0;
    for (std::string line; std::getline(mf, line);) {
        if (line.rfind("# ", 0) == 0) {
            cfg_text += line.substr(2) + '\n';
        } else if (line.rfind("arrays ", 0) == 0) {
            count = std::stoull(line.substr(7));
        } else if (!line.empty()) {
            std::istringstream ls(line);
            std::string name, shape;
            std::uint64_t off = 0;
            if (!(ls >> name >> shape >> off)) throw std::runtime_error("bad manifest line in " + manifest_path(path));
            entries.emplace_back(name, parse_shape(shape));
            offsets.push_back(off);
        }
    }
    if (entries.size() != count) throw std::runtime_error("manifest array count mismatch in " + manifest_path(path));
    ckpt.config = parse_config(cfg_text);

    std::ifstream blob(path, std::ios::binary);
    if (!blob) throw std::runtime_error("cannot open checkpoint " + path);
    char magic[8];
    if (!blob.read(magic, 8) || std::memcmp(magic, kMagic, 8) != 0)
        throw std::runtime_error("not a checkpoint file: " + path);
    if (read_u64(blob, path) != count) throw std::runtime_error("checkpoint and manifest disagree: " + path);
    for (std::size_t i = 0; i < count; ++i) {
        const std::uint64_t nbytes = read_u64(blob, path);
        const auto pos = static_cast<std::uint64_t>(blob.tellg());
        const std::size_t n = diff::numel(entries[i].second);
        if (nbytes != n * sizeof(double) || pos != offsets[i])
            throw std::runtime_error("checkpoint array " + entries[i].first + " does not match the manifest");
        NamedArray a{entries[i].first, entries[i].second, std::vector<double>(n)};
        for (std::size_t j = 0; j < n; ++j) {
            const std::uint64_t bits = read_u64(blob, path);
            std::memcpy(&a.data[j], &bits, 8);
        }
        ckpt.arrays.push_back(std::move(a));
    }
    return ckpt;
}

Checkpoint capture(const Trainer& trainer) {
    Checkpoint c;
    c.config = trainer.config();
    put(c, "trainer/step", {1}, {static_cast<double>(trainer.steps_done())});
    std::vector<double> cursors(trainer.cursors().begin(), trainer.cursors().end());
    put(c, "trainer/cursors", {static_cast<int>(cursors.size())}, cursors);
    const auto& items = trainer.network().params().items();
    for (const auto& p : items) put(c, "param/" + p.name, p.value.shape(), p.value.data());
    const auto& opt = trainer.optimizer();
    for (std::size_t i = 0; i < items.size(); ++i) {
        put(c, "adam_m/" + items[i].name, items[i].value.shape(), opt.first_moments()[i]);
        put(c, "adam_v/" + items[i].name, items[i].value.shape(), opt.second_moments()[i]);
    }
    const auto& banks = trainer.banks();
    for (std::size_t b = 0; b < banks.size(); ++b) {
        const auto entries = banks[b].read();
        put(c, "bank/" + std::to_string(b) + "/size", {1}, {static_cast<double>(entries.size())});
        for (std::size_t k = 0; k < entries.size(); ++k) {
            const auto& e = entries[k];
            put(c, bank_key(b, k, "feature"), e.feature.shape(), e.feature.data());
            put(c, bank_key(b, k, "pose"), {5},
                {static_cast<double>(e.pose.t), static_cast<double>(e.pose.scene_id), e.pose.x, e.pose.z, e.pose.yaw});
        }
    }
    return c;
}

Trainer restore_trainer(const Checkpoint& ckpt, const std::vector<world::Sequence>& data) {
    Trainer t(ckpt.config, data);
    auto& items = t.network().params().items();
    load_params(t.network().params(), ckpt);
    auto& opt = t.optimizer();
    for (std::size_t i = 0; i < items.size(); ++i) {
        const auto& m = ckpt.get("adam_m/" + items[i].name);
        const auto& v = ckpt.get("adam_v/" + items[i].name);
        if (m.data.size() != opt.first_moments()[i].size() || v.data.size() != opt.second_moments()[i].size())
            throw std::runtime_error("checkpoint optimizer state does not match parameter " + items[i].name);
        opt.first_moments()[i] = m.data;
        opt.second_moments()[i] = v.data;
    }
    opt.set_steps_taken(static_cast<int>(ckpt.get("trainer/step").data.at(0)));
    const auto& cursors = ckpt.get("trainer/cursors").data;
    if (cursors.size() != t.cursors().size()) throw std::runtime_error("checkpoint batch size does not match");
    for (std::size_t b = 0; b < cursors.size(); ++b) {
        const auto pos = static_cast<std::size_t>(cursors[b]);
        if (pos >= t.frame_count()) throw std::runtime_error("checkpoint stream position beyond the training data");
        t.cursors()[b] = pos;
    }
    for (std::size_t b = 0; b < t.banks().size(); ++b) {
        auto& bank = t.banks()[b];
        bank.clear();
        const auto n = static_cast<std::size_t>(ckpt.get("bank/" + std::to_string(b) + "/size").data.at(0));
        for (std::size_t k = 0; k < n; ++k) {
            const auto& f = ckpt.get(bank_key(b, k, "feature"));
            const auto& p = ckpt.get(bank_key(b, k, "pose")).data;
            temporal::EgoPose pose;
            pose.t = static_cast<int>(p.at(0));
            pose.scene_id = static_cast<std::int64_t>(p.at(1));
            pose.x = p.at(2);
            pose.z = p.at(3);
            pose.yaw = p.at(4);
            bank.push(Value::constant(f.shape, f.data), pose);
        }
    }
    return t;
}

model::Network restore_network(const Checkpoint& ckpt) {
    model::Network net(ckpt.config.network_config(), ckpt.config.seed);
    load_params(net.params(), ckpt);
    return net;
}

}  // namespace fbev::harness
