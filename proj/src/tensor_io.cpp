#include "plate/tensor_io.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>
#include <utility>
#include <vector>

#include <json.hpp>

#include "plate/error.hpp"

namespace plate {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

constexpr const char* kFormat = "plate-tensors";
constexpr int kVersion = 1;

std::uint64_t to_little(std::uint64_t v) {
    if constexpr (std::endian::native == std::endian::little) return v;
    else {
        std::uint64_t out = 0;
        for (int i = 0; i < 8; ++i) out |= ((v >> (8 * i)) & 0xffu) << (8 * (7 - i));
        return out;
    }
}

using TensorMap = std::map<std::string, Matrix>;

fs::path temp_sibling(const fs::path& target) {
    fs::path parent = target.parent_path();
    if (parent.empty()) parent = ".";
    return parent / ("." + target.filename().string() + ".tmp");
}

void write_bundle(const fs::path& target, json meta, const std::vector<std::pair<std::string, const Matrix*>>& tensors) {
    const fs::path dir = target.has_filename() ? target : target.parent_path();  // "out/" names "out"
    const fs::path tmp = temp_sibling(dir);
    fs::remove_all(tmp);
    fs::create_directories(tmp);
    json list = json::array();
    for (const auto& [name, m] : tensors) {
        const std::string file = name + ".bin";
        write_tensor(tmp / file, *m);
        list.push_back({{"name", name}, {"file", file}, {"rows", m->rows()}, {"cols", m->cols()}});
    }
    meta["format"] = kFormat;
    meta["version"] = kVersion;
    meta["tensors"] = std::move(list);
    {
        std::ofstream out(tmp / "manifest.json", std::ios::binary);
        if (!out) throw FormatError("cannot write manifest in " + tmp.string());
        out << meta.dump(2) << '\n';
        if (!out) throw FormatError("failed writing manifest in " + tmp.string());
    }
    if (fs::exists(dir)) fs::remove_all(dir);
    fs::rename(tmp, dir);
}

json parse_json(const std::string& text, const std::string& what) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(what + ": " + e.what(), e.byte);
    }
}

std::pair<json, TensorMap> read_bundle(const fs::path& dir, const std::string& kind) {
    const json meta = parse_json(read_file(dir / "manifest.json"), (dir / "manifest.json").string());
    try {
        if (meta.at("format").get<std::string>() != kFormat)
            throw FormatError(dir.string() + ": not a tensor checkpoint");
        if (meta.at("version").get<int>() != kVersion)
            throw FormatError(dir.string() + ": unsupported checkpoint version");
        if (meta.at("kind").get<std::string>() != kind)
            throw FormatError(dir.string() + ": expected a '" + kind + "' checkpoint, found '" +
                              meta.at("kind").get<std::string>() + "'");
        TensorMap tensors;
        for (const auto& t : meta.at("tensors")) {
            const auto name = t.at("name").get<std::string>();
            const auto file = t.at("file").get<std::string>();
            if (file.find('/') != std::string::npos || file.find("..") != std::string::npos)
                throw FormatError(dir.string() + ": tensor file name '" + file + "' escapes the checkpoint");
            tensors.emplace(name, read_tensor(dir / file, t.at("rows").get<std::size_t>(), t.at("cols").get<std::size_t>()));
        }
        return {meta, std::move(tensors)};
    } catch (const json::exception& e) {
        throw FormatError(dir.string() + ": malformed manifest: " + e.what());
    }
}

const Matrix& need(const TensorMap& t, const std::string& name) {
    auto it = t.find(name);
    if (it == t.end()) throw FormatError("checkpoint is missing tensor '" + name + "'");
    return it->second;
}

json plate_meta(const PlateAdapter& p) {
    return {{"type", "plate"},
            {"d_out", p.selector.d_out},
            {"d_in", p.d_in()},
            {"r", p.selector.r()},
            {"k", p.basis.k},
            {"tau", p.basis.tau},
            {"k_max", p.basis.k_max},
            {"rho", p.rho},
            {"seed", p.seed},
            {"energy_captured", p.basis.energy_captured},
            {"randomized", p.basis.randomized},
            {"indices", p.selector.indices},
            {"anchors", p.selector.anchors},
            {"scores", p.selector.scores}};
}

PlateAdapter plate_from(const json& m, const TensorMap& t, const std::string& prefix) {
    PlateAdapter p;
    p.selector.d_out = m.at("d_out").get<std::size_t>();
    p.selector.indices = m.at("indices").get<std::vector<std::size_t>>();
    p.selector.anchors = m.at("anchors").get<std::vector<std::size_t>>();
    p.selector.scores = m.at("scores").get<std::vector<double>>();
    p.basis.k = m.at("k").get<std::size_t>();
    p.basis.tau = m.at("tau").get<double>();
    p.basis.k_max = m.at("k_max").get<std::size_t>();
    p.basis.energy_captured = m.at("energy_captured").get<double>();
    p.basis.randomized = m.at("randomized").get<bool>();
    p.rho = m.at("rho").get<double>();
    p.seed = m.at("seed").get<std::uint64_t>();
    p.basis.q = need(t, prefix + "Q");
    p.a = need(t, prefix + "A");
    const auto d_in = m.at("d_in").get<std::size_t>();
    if (p.basis.q.rows() != d_in || p.basis.q.cols() != p.basis.k || p.a.rows() != p.selector.r() ||
        p.a.cols() != p.basis.k)
        throw FormatError("plate adapter tensors do not match the manifest shapes");
    for (std::size_t i = 0; i < p.selector.indices.size(); ++i)
        if (p.selector.indices[i] >= p.selector.d_out || (i > 0 && p.selector.indices[i] <= p.selector.indices[i - 1]))
            throw FormatError("plate adapter indices must be strictly increasing and below d_out");
    return p;
}

}  // namespace

void write_file_atomic(const fs::path& path, const std::string& contents) {
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    const fs::path tmp = temp_sibling(path);
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw FormatError("cannot open " + tmp.string() + " for writing");
        out.write(contents.data(), static_cast<std::streamsize>(contents.size()));
        out.flush();
        if (!out) throw FormatError("failed writing " + tmp.string());
    }
    fs::rename(tmp, path);
}

std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_tensor(const fs::path& path, const Matrix& m) {
    std::vector<char> buf(m.size() * 8);
    for (std::size_t i = 0; i < m.size(); ++i) {
        const std::uint64_t bits = to_little(std::bit_cast<std::uint64_t>(m.values()[i]));
        std::memcpy(buf.data() + 8 * i, &bits, 8);
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw FormatError("cannot open " + path.string() + " for writing");
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw FormatError("failed writing " + path.string());
}

Matrix read_tensor(const fs::path& path, std::size_t rows, std::size_t cols) {
    const std::string bytes = read_file(path);
    const std::size_t want = rows * cols * 8;
    if (bytes.size() != want)
        throw FormatError(path.string() + ": expected " + std::to_string(want) + " bytes, found " +
                              std::to_string(bytes.size()),
                          std::min(bytes.size(), want));
    Matrix m(rows, cols);
    for (std::size_t i = 0; i < m.size(); ++i) {
        std::uint64_t bits;
        std::memcpy(&bits, bytes.data() + 8 * i, 8);
        m.values()[i] = std::bit_cast<double>(to_little(bits));
    }
    return m;
}

void save_weights(const Matrix& w, const fs::path& dir) { write_bundle(dir, {{"kind", "weights"}}, {{"W", &w}}); }

Matrix load_weights(const fs::path& dir) {
    auto [meta, t] = read_bundle(dir, "weights");
    return need(t, "W");
}

void save_model(const Mlp& model, const fs::path& dir) {
    json meta = {{"kind", "model"}};
    json layers = json::array();
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        layers.push_back({{"activation", to_string(model.layers[l].activation)}});
        tensors.emplace_back("layer" + std::to_string(l) + ".weight", &model.layers[l].weight);
        tensors.emplace_back("layer" + std::to_string(l) + ".bias", &model.layers[l].bias);
    }
    json heads = json::array();
    for (const auto& [name, h] : model.heads) {
        heads.push_back(name);
        tensors.emplace_back("head." + name + ".weight", &h.weight);
        tensors.emplace_back("head." + name + ".bias", &h.bias);
    }
    meta["layers"] = std::move(layers);
    meta["heads"] = std::move(heads);
    write_bundle(dir, std::move(meta), tensors);
}

Mlp load_model(const fs::path& dir) {
    auto [meta, t] = read_bundle(dir, "model");
    Mlp m;
    try {
        const auto& layers = meta.at("layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            Layer layer;
            layer.activation = parse_activation(layers[l].at("activation").get<std::string>());
            layer.weight = need(t, "layer" + std::to_string(l) + ".weight");
            layer.bias = need(t, "layer" + std::to_string(l) + ".bias");
            if (layer.bias.rows() != 1 || layer.bias.cols() != layer.weight.rows())
                throw FormatError(dir.string() + ": bias shape does not match layer " + std::to_string(l));
            if (l > 0 && layer.weight.cols() != m.layers.back().weight.rows())
                throw FormatError(dir.string() + ": layer " + std::to_string(l) + " does not chain");
            m.layers.push_back(std::move(layer));
        }
        for (const auto& name : meta.at("heads")) {
            const auto n = name.get<std::string>();
            Head h{need(t, "head." + n + ".weight"), need(t, "head." + n + ".bias")};
            if (m.layers.empty() || h.weight.cols() != m.feature_dim() || h.bias.cols() != h.weight.rows())
                throw FormatError(dir.string() + ": head '" + n + "' shape mismatch");
            m.heads.emplace(n, std::move(h));
        }
    } catch (const json::exception& e) {
        throw FormatError(dir.string() + ": malformed model manifest: " + e.what());
    } catch (const ContractError& e) {
        throw FormatError(dir.string() + ": " + e.what());
    }
    return m;
}

void save_plate_adapter(const PlateAdapter& adapter, const fs::path& dir) {
    json meta = plate_meta(adapter);
    meta["kind"] = "plate_adapter";
    write_bundle(dir, std::move(meta), {{"Q", &adapter.basis.q}, {"A", &adapter.a}});
}

PlateAdapter load_plate_adapter(const fs::path& dir) {
    auto [meta, t] = read_bundle(dir, "plate_adapter");
    try {
        return plate_from(meta, t, "");
    } catch (const json::exception& e) {
        throw FormatError(dir.string() + ": malformed adapter manifest: " + e.what());
    }
}

void save_layer_adapters(const LayerAdapters& adapters, const fs::path& dir) {
    json layers = json::array();
    std::vector<std::pair<std::string, const Matrix*>> tensors;
    for (std::size_t l = 0; l < adapters.size(); ++l) {
        const std::string prefix = "layer" + std::to_string(l) + ".";
        const AdapterKind& ad = adapters[l];
        if (const auto* p = std::get_if<PlateAdapter>(&ad)) {
            layers.push_back(plate_meta(*p));
            tensors.emplace_back(prefix + "Q", &p->basis.q);
            tensors.emplace_back(prefix + "A", &p->a);
        } else if (const auto* lo = std::get_if<LoraAdapter>(&ad)) {
            layers.push_back({{"type", "lora"}, {"scale", lo->scale}});
            tensors.emplace_back(prefix + "lora_A", &lo->a);
            tensors.emplace_back(prefix + "lora_B", &lo->b);
        } else {
            layers.push_back({{"type", adapter_kind_name(ad)}});
        }
    }
    write_bundle(dir, {{"kind", "layer_adapters"}, {"layers", std::move(layers)}}, tensors);
}

LayerAdapters load_layer_adapters(const fs::path& dir) {
    auto [meta, t] = read_bundle(dir, "layer_adapters");
    LayerAdapters out;
    try {
        const auto& layers = meta.at("layers");
        for (std::size_t l = 0; l < layers.size(); ++l) {
            const std::string prefix = "layer" + std::to_string(l) + ".";
            const auto type = layers[l].at("type").get<std::string>();
            if (type == "plate") {
                out.emplace_back(plate_from(layers[l], t, prefix));
            } else if (type == "lora") {
                LoraAdapter lo{need(t, prefix + "lora_A"), need(t, prefix + "lora_B"), layers[l].at("scale").get<double>()};
                if (lo.b.cols() != lo.a.rows()) throw FormatError(dir.string() + ": LoRA rank mismatch");
                out.emplace_back(std::move(lo));
            } else if (type == "full") {
                out.emplace_back(FullFineTune{});
            } else if (type == "frozen") {
                out.emplace_back(Frozen{});
            } else {
                throw FormatError(dir.string() + ": unknown adapter type '" + type + "'");
            }
        }
    } catch (const json::exception& e) {
        throw FormatError(dir.string() + ": malformed adapter manifest: " + e.what());
    }
    return out;
}

}  // namespace plate
