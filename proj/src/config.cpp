#include "plate/config.hpp"

#include <string>

#include <json.hpp>

#include "plate/error.hpp"

namespace plate {

namespace {

using json = nlohmann::ordered_json;

std::string to_string(OptimizerKind k) { return k == OptimizerKind::AdamW ? "adamw" : "adam"; }

OptimizerKind parse_optimizer(const std::string& s) {
    if (s == "adam") return OptimizerKind::Adam;
    if (s == "adamw") return OptimizerKind::AdamW;
    throw ContractError("unknown optimizer '" + s + "'");
}

std::string to_string(BasisPath p) {
    switch (p) {
    case BasisPath::Auto: return "auto";
    case BasisPath::Dense: return "dense";
    case BasisPath::Srht: return "srht";
    }
    return "?";
}

BasisPath parse_basis_path(const std::string& s) {
    if (s == "auto") return BasisPath::Auto;
    if (s == "dense") return BasisPath::Dense;
    if (s == "srht") return BasisPath::Srht;
    throw ContractError("unknown basis path '" + s + "'");
}

json train_json(const TrainConfig& t) {
    return {{"epochs", t.epochs},
            {"batch_size", t.batch_size},
            {"learning_rate", t.learning_rate},
            {"optimizer", to_string(t.optimizer)},
            {"weight_decay", t.weight_decay}};
}

json to_json(const ProtocolConfig& c) {
    const auto& b = c.task.blobs;
    json task = {{"kind", to_string(c.task.kind)},
                 {"n_train", c.task.n_train},
                 {"n_test", c.task.n_test},
                 {"noise", c.task.noise},
                 {"rotation_deg", c.task.rotation_deg},
                 {"translation", c.task.translation},
                 {"dim", c.task.dim},
                 {"alpha", c.task.alpha},
                 {"blobs",
                  {{"dim", b.dim},
                   {"latent_dim", b.latent_dim},
                   {"classes", b.classes},
                   {"centre_scale", b.centre_scale},
                   {"within_scale", b.within_scale},
                   {"ambient_noise", b.ambient_noise},
                   {"seed", b.seed}}},
                 {"mnist_dir", c.task.mnist_dir}};
    json method = {{"kind", to_string(c.method.kind)},
                   {"r", c.method.r},
                   {"tau", c.method.tau},
                   {"k_max", c.method.k_max},
                   {"rho", c.method.rho},
                   {"lora_scale", c.method.lora_scale},
                   {"basis", to_string(c.method.basis_path)}};
    json metrics = {{"epsilon", c.metrics.epsilon},
                    {"lambda", c.metrics.lambda},
                    {"samples", c.metrics.samples},
                    {"train_split", c.metrics.train_split},
                    {"max_iters", c.metrics.max_iters}};
    return {{"name", c.name},
            {"task", std::move(task)},
            {"arch", {{"hidden", c.arch.hidden}, {"activation", to_string(c.arch.activation)}}},
            {"stage1", train_json(c.stage1)},
            {"stage2", train_json(c.stage2)},
            {"method", std::move(method)},
            {"seeds", c.seeds},
            {"metrics", std::move(metrics)},
            {"record_wall_time", c.record_wall_time},
            {"checkpoint_dir", c.checkpoint_dir.string()}};
}

bool same_kind(const json& a, const json& b) {
    if (a.is_number() && b.is_number()) {
        // Integers may not receive fractional or negative values.
        if (a.is_number_integer() && !b.is_number_unsigned()) return b.is_number_integer() && b.get<long long>() >= 0;
        return !(a.is_number_integer() && b.is_number_float());
    }
    return a.type() == b.type();
}

// Overlays `user` onto `base`; every user key must already exist in base.
void overlay(json& base, const json& user, const std::string& path) {
    if (!user.is_object()) throw ContractError("config: " + (path.empty() ? "top level" : path) + " must be an object");
    for (const auto& [key, value] : user.items()) {
        const std::string here = path.empty() ? key : path + "." + key;
        if (!base.contains(key)) throw ContractError("config: unknown key '" + here + "'");
        json& slot = base[key];
        if (slot.is_object()) {
            overlay(slot, value, here);
        } else {
            if (!same_kind(slot, value))
                throw ContractError("config: '" + here + "' expects " + std::string(slot.type_name()) + ", got " +
                                    value.type_name());
            slot = value;
        }
    }
}

TrainConfig train_from(const json& j) {
    TrainConfig t;
    t.epochs = j.at("epochs").get<std::size_t>();
    t.batch_size = j.at("batch_size").get<std::size_t>();
    t.learning_rate = j.at("learning_rate").get<double>();
    t.optimizer = parse_optimizer(j.at("optimizer").get<std::string>());
    t.weight_decay = j.at("weight_decay").get<double>();
    return t;
}

ProtocolConfig from_json(const json& j) {
    ProtocolConfig c;
    c.name = j.at("name").get<std::string>();
    const json& t = j.at("task");
    c.task.kind = parse_task_kind(t.at("kind").get<std::string>());
    c.task.n_train = t.at("n_train").get<std::size_t>();
    c.task.n_test = t.at("n_test").get<std::size_t>();
    c.task.noise = t.at("noise").get<double>();
    c.task.rotation_deg = t.at("rotation_deg").get<double>();
    const json& tr = t.at("translation");
    if (tr.size() != 2) throw ContractError("config: task.translation must have 2 entries");
    c.task.translation = {tr[0].get<double>(), tr[1].get<double>()};
    c.task.dim = t.at("dim").get<std::size_t>();
    c.task.alpha = t.at("alpha").get<double>();
    const json& b = t.at("blobs");
    c.task.blobs.dim = b.at("dim").get<std::size_t>();
    c.task.blobs.latent_dim = b.at("latent_dim").get<std::size_t>();
    c.task.blobs.classes = b.at("classes").get<std::size_t>();
    c.task.blobs.centre_scale = b.at("centre_scale").get<double>();
    c.task.blobs.within_scale = b.at("within_scale").get<double>();
    c.task.blobs.ambient_noise = b.at("ambient_noise").get<double>();
    c.task.blobs.seed = b.at("seed").get<std::uint64_t>();
    c.task.mnist_dir = t.at("mnist_dir").get<std::string>();

    const json& a = j.at("arch");
    c.arch.hidden = a.at("hidden").get<std::vector<std::size_t>>();
    c.arch.activation = parse_activation(a.at("activation").get<std::string>());
    c.stage1 = train_from(j.at("stage1"));
    c.stage2 = train_from(j.at("stage2"));

    const json& m = j.at("method");
    c.method.kind = parse_method_kind(m.at("kind").get<std::string>());
    c.method.r = m.at("r").get<std::size_t>();
    c.method.tau = m.at("tau").get<double>();
    c.method.k_max = m.at("k_max").get<std::size_t>();
    c.method.rho = m.at("rho").get<double>();
    c.method.lora_scale = m.at("lora_scale").get<double>();
    c.method.basis_path = parse_basis_path(m.at("basis").get<std::string>());

    c.seeds = j.at("seeds").get<std::vector<std::uint64_t>>();
    const json& me = j.at("metrics");
    c.metrics.epsilon = me.at("epsilon").get<bool>();
    c.metrics.lambda = me.at("lambda").get<bool>();
    c.metrics.samples = me.at("samples").get<std::size_t>();
    c.metrics.train_split = me.at("train_split").get<bool>();
    c.metrics.max_iters = me.at("max_iters").get<int>();
    c.record_wall_time = j.at("record_wall_time").get<bool>();
    c.checkpoint_dir = j.at("checkpoint_dir").get<std::string>();

    PLATE_REQUIRE(!c.seeds.empty(), "config: seeds must not be empty");
    PLATE_REQUIRE(!c.arch.hidden.empty(), "config: arch.hidden must list at least one layer");
    for (auto h : c.arch.hidden) PLATE_REQUIRE(h >= 1, "config: arch.hidden widths must be positive");
    for (const TrainConfig* s : {&c.stage1, &c.stage2}) {
        PLATE_REQUIRE(s->batch_size >= 1, "config: batch_size must be positive");
        PLATE_REQUIRE(s->learning_rate > 0.0, "config: learning_rate must be positive");
    }
    if (c.method.kind == MethodKind::Plate || c.method.kind == MethodKind::Lora)
        PLATE_REQUIRE(c.method.r >= 1, "config: method.r must be positive");
    PLATE_REQUIRE(c.method.tau > 0.0 && c.method.tau < 1.0, "config: method.tau must lie in (0, 1)");
    PLATE_REQUIRE(c.metrics.samples >= 1 && c.metrics.max_iters >= 1, "config: metrics.samples and max_iters must be positive");
    return c;
}

json parse_text(const std::string& text) {
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("config: ") + e.what(), e.byte);
    }
}

ProtocolConfig decode(const json& user) {
    json full = to_json(ProtocolConfig{});
    overlay(full, user, "");
    try {
        return from_json(full);
    } catch (const json::exception& e) {
        throw ContractError(std::string("config: ") + e.what());
    }
}

void apply_dotted(json& target, const std::string& dotted, const json& value) {
    json* node = &target;
    std::size_t start = 0;
    while (true) {
        const std::size_t dot = dotted.find('.', start);
        const std::string key = dotted.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        PLATE_REQUIRE(!key.empty(), "sweep: malformed grid key '" + dotted + "'");
        if (dot == std::string::npos) {
            (*node)[key] = value;
            return;
        }
        if (!node->contains(key)) (*node)[key] = json::object();
        node = &(*node)[key];
        PLATE_REQUIRE(node->is_object(), "sweep: grid key '" + dotted + "' descends into a non-object");
        start = dot + 1;
    }
}

}  // namespace

ProtocolConfig parse_protocol_config(const std::string& json_text) { return decode(parse_text(json_text)); }

std::string protocol_config_json(const ProtocolConfig& cfg) { return to_json(cfg).dump(); }

std::vector<ProtocolConfig> parse_sweep_config(const std::string& json_text) {
    const json root = parse_text(json_text);
    PLATE_REQUIRE(root.is_object(), "sweep: top level must be an object");
    if (!root.contains("base") && !root.contains("grid")) return {decode(root)};
    for (const auto& [key, _] : root.items())
        PLATE_REQUIRE(key == "base" || key == "grid", "sweep: unknown key '" + key + "'");
    const json base = root.value("base", json::object());
    const json grid = root.value("grid", json::object());
    PLATE_REQUIRE(grid.is_object(), "sweep: grid must be an object of arrays");

    std::vector<std::pair<std::string, json>> axes;
    for (const auto& [key, values] : grid.items()) {
        PLATE_REQUIRE(values.is_array() && !values.empty(), "sweep: grid axis '" + key + "' must be a non-empty array");
        axes.emplace_back(key, values);
    }
    std::vector<ProtocolConfig> out;
    std::vector<std::size_t> pos(axes.size(), 0);
    while (true) {
        json cell = base;
        for (std::size_t a = 0; a < axes.size(); ++a) apply_dotted(cell, axes[a].first, axes[a].second[pos[a]]);
        out.push_back(decode(cell));
        // Last axis varies fastest.
        std::size_t a = axes.size();
        while (a > 0) {
            --a;
            if (++pos[a] < axes[a].second.size()) break;
            pos[a] = 0;
            if (a == 0) return out;
        }
        if (axes.empty()) return out;
    }
}

}  // namespace plate
