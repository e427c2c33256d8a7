#include <doctest.h>

#include <filesystem>
#include <fstream>

#include <json.hpp>

#include "helpers.hpp"
#include "plate/config.hpp"
#include "plate/error.hpp"
#include "plate/report.hpp"
#include "plate/tensor_io.hpp"

using namespace plate;
namespace fs = std::filesystem;

namespace {

fs::path scratch(const std::string& name) {
    const fs::path p = fs::temp_directory_path() / ("plate_io_" + name);
    fs::remove_all(p);
    fs::create_directories(p);
    return p;
}

}  // namespace

TEST_CASE("tensor files round trip bit-exactly and reject bad lengths") {
    const fs::path dir = scratch("tensor");
    const Matrix m = testing::random_matrix(3, 4, 1);
    write_tensor(dir / "t.bin", m);
    CHECK(read_tensor(dir / "t.bin", 3, 4) == m);
    CHECK(fs::file_size(dir / "t.bin") == 96);
    try {
        read_tensor(dir / "t.bin", 4, 4);
        FAIL("expected a length error");
    } catch (const FormatError& e) {
        CHECK(e.byte_offset() == 96);
    }
    CHECK_THROWS_AS(read_file(dir / "missing"), FormatError);
}

TEST_CASE("model, adapter and layer-adapter checkpoints round trip") {
    const fs::path dir = scratch("ckpt");
    Mlp m = make_mlp({5, 7, 6}, Activation::Tanh, 3);
    add_head(m, "task1", 2, 1);
    add_head(m, "task2", 3, 2);
    save_model(m, dir / "model");
    const Mlp back = load_model(dir / "model");
    CHECK(params_to_vector(back).values == params_to_vector(m).values);
    save_model(m, (dir / "slash").string() + "/");
    CHECK(params_to_vector(load_model(dir / "slash")).values == params_to_vector(m).values);
    CHECK(back.layers[1].activation == Activation::Tanh);

    PlateAdapter p = plate_init(m.layers[0].weight, 2, 0.6, 0, 0.5, 4);
    p.a = testing::random_matrix(p.a.rows(), p.a.cols(), 5);
    save_plate_adapter(p, dir / "adapter");
    const PlateAdapter pb = load_plate_adapter(dir / "adapter");
    CHECK(pb.a == p.a);
    CHECK(pb.basis.q == p.basis.q);
    CHECK(pb.selector.indices == p.selector.indices);
    CHECK(pb.rho == p.rho);

    LoraAdapter l = lora_init(6, 7, 2, 0.5, 1);
    const LayerAdapters ad{p, l};
    save_layer_adapters(ad, dir / "layers");
    const LayerAdapters adb = load_layer_adapters(dir / "layers");
    REQUIRE(adb.size() == 2);
    CHECK(std::get<LoraAdapter>(adb[1]).a == l.a);
    CHECK(std::get<PlateAdapter>(adb[0]).a == p.a);

    save_weights(m.layers[0].weight, dir / "w");
    CHECK(load_weights(dir / "w") == m.layers[0].weight);
    CHECK_THROWS_AS(load_model(dir / "w"), FormatError);
}

TEST_CASE("checkpoints: tampered manifests are rejected") {
    const fs::path dir = scratch("tamper");
    save_weights(Matrix{{1, 2}}, dir / "w");
    std::ofstream(dir / "w" / "manifest.json") << "{\"format\": \"plate-tensors\", \"version\": 1, \"kind\": \"weights\", "
                                                  "\"tensors\": [{\"name\": \"W\", \"file\": \"../x\", \"rows\": 1, \"cols\": 2}]}";
    CHECK_THROWS_AS(load_weights(dir / "w"), FormatError);
    std::ofstream(dir / "w" / "manifest.json") << "{not json";
    CHECK_THROWS_AS(load_weights(dir / "w"), FormatError);
}

TEST_CASE("config: defaults, overrides and strict keys") {
    const ProtocolConfig c = parse_protocol_config(R"({"name": "x", "method": {"kind": "lora", "r": 4}, "seeds": [3, 4]})");
    CHECK(c.name == "x");
    CHECK(c.method.kind == MethodKind::Lora);
    CHECK(c.method.r == 4);
    CHECK(c.seeds == std::vector<std::uint64_t>{3, 4});
    CHECK(c.stage1.epochs == TrainConfig{}.epochs);

    CHECK_THROWS_WITH_AS(parse_protocol_config(R"({"method": {"rank": 4}})"), doctest::Contains("method.rank"),
                         ContractError);
    CHECK_THROWS_AS(parse_protocol_config(R"({"stage1": {"loss": "mse"}})"), ContractError);
    CHECK_THROWS_AS(parse_protocol_config(R"({"method": {"r": -1}})"), ContractError);
    CHECK_THROWS_AS(parse_protocol_config(R"({"method": {"r": 1.5}})"), ContractError);
    CHECK_THROWS_AS(parse_protocol_config(R"({"method": {"kind": "adapter"}})"), ContractError);
    CHECK_THROWS_AS(parse_protocol_config(R"({"seeds": []})"), ContractError);
    CHECK_THROWS_AS(parse_protocol_config("{oops"), FormatError);

    const ProtocolConfig round = parse_protocol_config(protocol_config_json(c));
    CHECK(protocol_config_json(round) == protocol_config_json(c));
}

TEST_CASE("config: sweep grids expand in file order") {
    const auto grid = parse_sweep_config(R"({
        "base": {"task": {"kind": "two_moons"}, "seeds": [0]},
        "grid": {"method.r": [2, 4, 8], "method.tau": [0.5, 0.9]}
    })");
    REQUIRE(grid.size() == 6);
    CHECK(grid[0].method.r == 2);
    CHECK(grid[0].method.tau == 0.5);
    CHECK(grid[1].method.tau == 0.9);
    CHECK(grid[2].method.r == 4);
    CHECK(grid[5].method.r == 8);
    CHECK(parse_sweep_config(R"({"name": "plain"})").size() == 1);
    CHECK_THROWS_AS(parse_sweep_config(R"({"base": {}, "grid": {"method.rank": [1]}})"), ContractError);
    CHECK_THROWS_AS(parse_sweep_config(R"({"base": {}, "grid": {"method.r": []}})"), ContractError);
    CHECK_THROWS_AS(parse_sweep_config(R"({"base": {}, "extra": 1})"), ContractError);
}

TEST_CASE("report: CSV quoting and number formatting") {
    CHECK(csv_field("plain") == "plain");
    CHECK(csv_field("a,b") == "\"a,b\"");
    CHECK(csv_field("say \"hi\"") == "\"say \"\"hi\"\"\"");
    CHECK(format_double(0.1) == "0.1");
    CHECK(format_double(1e-300) == "1e-300");
    CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);

    RunResult r;
    r.method = "plate";
    r.name = "a,b";
    r.r = 4;
    r.tau = 0.9;
    r.acc1_base = 0.9;
    r.acc1_after = 0.85;
    r.forgetting = 0.05;
    r.epsilon = 0.25;
    RunResult bad;
    bad.failed = true;
    bad.error = "boom";
    const std::string csv = results_csv({r, bad});
    CHECK(std::count(csv.begin(), csv.end(), '\n') == 2);
    CHECK(csv.find("plate,4,0.9,0,0,0,0.9,0,0.85,0.05,0.25,,0,\"a,b\"") != std::string::npos);

    SweepOutput out;
    out.runs = {r, bad};
    const auto j = nlohmann::json::parse(results_json(out));
    CHECK(j["runs"].size() == 1);
    CHECK(j["failures"].size() == 1);
    CHECK(j["failures"][0]["error"] == "boom");
    CHECK(j["runs"][0]["lambda"].is_null());
}
