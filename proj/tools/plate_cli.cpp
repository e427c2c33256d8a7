#include <algorithm>
#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "plate/adapters.hpp"
#include "plate/config.hpp"
#include "plate/error.hpp"
#include "plate/geometry.hpp"
#include "plate/protocol.hpp"
#include "plate/report.hpp"
#include "plate/subspace.hpp"
#include "plate/tensor_io.hpp"

namespace fs = std::filesystem;
using json = nlohmann::ordered_json;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitFormat = 2;
constexpr int kExitContract = 3;
constexpr int kExitFailure = 4;

struct BuildArgs {
    std::string weights;
    std::optional<std::size_t> layer;
    std::size_t r = 1;
    double tau = 0.9;
    std::size_t k_max = 0;
    double rho = 0.5;
    std::uint64_t seed = 0;
    std::string srht = "auto";
    std::string out;
};

struct RunArgs {
    std::string config;
    std::string out;
    bool no_checkpoints = false;
};

struct HeatmapArgs {
    std::string run;
    std::vector<double> grid;  // xmin xmax ymin ymax steps
    std::string head = "task1";
    std::string out;
};

struct CurvatureArgs {
    std::string run;
    std::string family = "plate";
    std::vector<double> rhos;
    std::optional<std::size_t> r;
    std::optional<double> tau;
    std::size_t samples = 512;
    std::size_t lora_warm_steps = 10;
    std::string out;
};

json score_histogram(const std::vector<double>& scores, std::size_t bins) {
    std::vector<std::size_t> counts(bins, 0);
    for (double s : scores) {
        const double c = std::clamp(s, 0.0, 1.0);
        counts[std::min(bins - 1, static_cast<std::size_t>(c * static_cast<double>(bins)))]++;
    }
    json edges = json::array();
    for (std::size_t b = 0; b <= bins; ++b) edges.push_back(static_cast<double>(b) / static_cast<double>(bins));
    return {{"edges", edges}, {"counts", counts}};
}

int cmd_build_adapter(const BuildArgs& a) {
    const plate::Matrix w = a.layer ? [&] {
        const plate::Mlp m = plate::load_model(a.weights);
        PLATE_REQUIRE(*a.layer < m.layers.size(), "--layer " + std::to_string(*a.layer) + " out of range");
        return m.layers[*a.layer].weight;
    }()
                             : plate::load_weights(a.weights);
    plate::PlateOptions o;
    o.r = a.r;
    o.tau = a.tau;
    o.k_max = a.k_max;
    o.rho = a.rho;
    o.seed = a.seed;
    o.path = a.srht == "on" ? plate::BasisPath::Srht : a.srht == "off" ? plate::BasisPath::Dense : plate::BasisPath::Auto;
    const plate::PlateAdapter p = plate::plate_init(w, o);
    plate::save_plate_adapter(p, a.out);

    const json summary = {{"d_out", p.d_out()},
                          {"d_in", p.d_in()},
                          {"r", p.selector.r()},
                          {"k", p.basis.k},
                          {"tau", p.basis.tau},
                          {"k_max", p.basis.k_max},
                          {"energy_captured", p.basis.energy_captured},
                          {"randomized", p.basis.randomized},
                          {"trainable_params", plate::trainable_param_count(plate::AdapterKind{p}, p.d_out(), p.d_in())},
                          {"selected_indices", p.selector.indices},
                          {"score_histogram", score_histogram(p.selector.scores, 10)}};
    plate::write_file_atomic(fs::path(a.out) / "summary.json", summary.dump(2) + "\n");
    std::cout << "k=" << p.basis.k << " energy_captured=" << plate::format_double(p.basis.energy_captured)
              << " selected=" << p.selector.r() << "\n";
    return kExitOk;
}

int finish_runs(const plate::SweepOutput& out, const std::string& dir) {
    plate::write_results(out, dir);
    std::size_t ok = 0;
    for (const auto& r : out.runs) {
        if (r.failed)
            std::cerr << "run failed (cell " << r.grid_index << ", seed " << r.seed << "): " << r.error << "\n";
        else
            ++ok;
    }
    std::cout << ok << " of " << out.runs.size() << " runs succeeded; results in " << dir << "\n";
    return ok > 0 ? kExitOk : kExitFailure;
}

std::vector<plate::ProtocolConfig> with_checkpoints(std::vector<plate::ProtocolConfig> grid, const RunArgs& a) {
    for (auto& c : grid)
        if (a.no_checkpoints)
            c.checkpoint_dir.clear();
        else if (c.checkpoint_dir.empty())
            c.checkpoint_dir = fs::path(a.out) / "runs";
    return grid;
}

int cmd_run(const RunArgs& a) {
    const auto cfg = plate::parse_protocol_config(plate::read_file(a.config));
    return finish_runs(plate::sweep(with_checkpoints({cfg}, a)), a.out);
}

int cmd_sweep(const RunArgs& a) {
    const auto grid = plate::parse_sweep_config(plate::read_file(a.config));
    return finish_runs(plate::sweep(with_checkpoints(grid, a)), a.out);
}

int cmd_heatmap(const HeatmapArgs& a) {
    PLATE_REQUIRE(a.grid.size() == 5, "--grid takes xmin xmax ymin ymax steps");
    const double steps_d = a.grid[4];
    PLATE_REQUIRE(steps_d >= 1 && steps_d == static_cast<double>(static_cast<std::size_t>(steps_d)),
                  "--grid steps must be a positive integer");
    const fs::path run(a.run);
    const plate::Mlp m0 = plate::load_model(run / "theta0");
    const plate::Mlp m1 = plate::load_model(run / "theta1");
    PLATE_REQUIRE(m0.input_dim() == 2 && m1.input_dim() == 2,
                  "heatmap needs a 2-D input model, got input dimension " + std::to_string(m0.input_dim()));
    const plate::Matrix pts =
        plate::grid_points(a.grid[0], a.grid[1], a.grid[2], a.grid[3], static_cast<std::size_t>(steps_d));
    const std::vector<double> delta = plate::jacobian_drift_field(m0, m1, a.head, pts);
    std::ostringstream os;
    os << "x,y,delta\r\n";
    for (std::size_t i = 0; i < pts.rows(); ++i)
        os << plate::format_double(pts(i, 0)) << ',' << plate::format_double(pts(i, 1)) << ','
           << plate::format_double(delta[i]) << "\r\n";
    plate::write_file_atomic(a.out, os.str());
    return kExitOk;
}

int cmd_curvature(const CurvatureArgs& a) {
    PLATE_REQUIRE(!a.rhos.empty(), "--rhos needs at least one value");
    const fs::path run(a.run);
    const json meta = json::parse(plate::read_file(run / "run.json"));
    plate::ProtocolConfig cfg = plate::parse_protocol_config(meta.at("config").dump());
    const auto seed = meta.at("seed").get<std::uint64_t>();
    const plate::Mlp theta0 = plate::load_model(run / "theta0");

    const plate::TaskData data = plate::make_task_data(cfg.task, plate::derive_seed(seed, "data"));
    plate::Dataset old = data.test1;
    if (a.samples < old.size()) {
        std::vector<std::size_t> idx(a.samples);
        for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
        old = plate::subset(old, idx);
    }
    const plate::OldTask task{&theta0, "task1", &old, data.loss};
    const plate::ParamLayout layout = plate::param_layout(theta0);

    plate::MethodSpec method = cfg.method;
    if (a.r) method.r = *a.r;
    if (a.tau) method.tau = *a.tau;
    plate::UpdateSubspace s = plate::UpdateSubspace::full(layout);
    if (a.family == "plate") {
        method.kind = plate::MethodKind::Plate;
        s = plate::UpdateSubspace::plate(layout, plate::build_adapters(theta0, method, seed));
    } else if (a.family == "lora") {
        cfg.method = method;
        cfg.method.kind = plate::MethodKind::Lora;
        s = plate::UpdateSubspace::lora_tangent(layout, plate::lora_warm_start(theta0, cfg, data, seed, a.lora_warm_steps));
    }
    plate::CurvatureOptions co;
    co.seed = plate::derive_seed(seed, "curvature");
    const plate::CurvatureReport curv = plate::restricted_curvature(task, s, co);
    plate::DriftOptions dopt;
    dopt.seed = plate::derive_seed(seed, "drift");
    dopt.bootstrap = 10;
    const plate::DriftReport drift = plate::drift_radius(task, s, dopt);
    const plate::SweepResult sw = plate::worst_direction_sweep(task, curv.top_direction, a.rhos);

    std::ostringstream os;
    os << "rho,forgetting\r\n";
    for (const auto& p : sw.points) os << plate::format_double(p.rho) << ',' << plate::format_double(p.forgetting) << "\r\n";
    plate::write_file_atomic(a.out, os.str());
    const json side = {{"family", a.family},
                       {"dimension", s.dimension()},
                       {"lambda", curv.lambda_s},
                       {"epsilon", drift.epsilon},
                       {"epsilon_bootstrap_se", drift.bootstrap_se},
                       {"beta", plate::loss_beta(data.loss)},
                       {"quadratic", sw.quadratic},
                       {"linear", sw.linear},
                       {"half_lambda", 0.5 * curv.lambda_s}};
    plate::write_file_atomic(fs::path(a.out).string() + ".json", side.dump(2) + "\n");
    std::cout << "lambda=" << plate::format_double(curv.lambda_s) << " epsilon=" << plate::format_double(drift.epsilon)
              << " slope=" << plate::format_double(sw.quadratic) << "\n";
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Weight-only low-energy adapters and two-task retention experiments"};
    app.require_subcommand(1);

    BuildArgs build;
    auto* b = app.add_subcommand("build-adapter", "Build a PLATE adapter from a frozen weight matrix");
    b->add_option("--weights", build.weights, "Weights checkpoint (or model checkpoint with --layer)")->required();
    b->add_option("--layer", build.layer, "Take the weight of this layer from a model checkpoint");
    b->add_option("--r", build.r, "Number of trainable output rows")->required()->check(CLI::PositiveNumber);
    b->add_option("--tau", build.tau, "Energy threshold in (0, 1)")->check(CLI::Range(0.0, 1.0));
    b->add_option("--kmax", build.k_max, "Basis dimension cap (0: min(512, d_in))");
    b->add_option("--rho", build.rho, "Adapter scale");
    b->add_option("--seed", build.seed, "Seed");
    b->add_option("--srht", build.srht, "Basis path")->check(CLI::IsMember({"auto", "on", "off"}));
    b->add_option("--out", build.out, "Output checkpoint directory")->required();

    RunArgs run;
    auto* r = app.add_subcommand("run", "Run the two-task protocol for one config");
    auto* sw = app.add_subcommand("sweep", "Run a grid of configs");
    for (auto* sub : {r, sw}) {
        sub->add_option("--config", run.config, "JSON config file")->required();
        sub->add_option("--out", run.out, "Output directory")->required();
        sub->add_flag("--no-checkpoints", run.no_checkpoints, "Skip per-run checkpoints");
    }

    HeatmapArgs heat;
    auto* h = app.add_subcommand("heatmap", "Jacobian drift field of a 2-D input run");
    h->add_option("--run", heat.run, "Run directory with theta0 and theta1")->required();
    h->add_option("--grid", heat.grid, "xmin xmax ymin ymax steps")->required()->expected(5);
    h->add_option("--head", heat.head, "Head to read the outputs through");
    h->add_option("--out", heat.out, "Output CSV")->required();

    CurvatureArgs curv;
    auto* c = app.add_subcommand("curvature", "Forgetting along the top restricted-curvature direction");
    c->add_option("--run", curv.run, "Run directory")->required();
    c->add_option("--family", curv.family, "Update family")->check(CLI::IsMember({"plate", "lora", "full"}));
    c->add_option("--rhos", curv.rhos, "Step sizes")->required()->delimiter(',');
    c->add_option("--r", curv.r, "Override the rank from the run config");
    c->add_option("--tau", curv.tau, "Override tau from the run config");
    c->add_option("--samples", curv.samples, "Old-task points used")->check(CLI::PositiveNumber);
    c->add_option("--lora-warm-steps", curv.lora_warm_steps,
                  "Stage-2 batches taken before the LoRA tangent (0: tangent at B = 0)");
    c->add_option("--out", curv.out, "Output CSV (a .json sidecar is written next to it)")->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? kExitOk : kExitContract;
    }

    try {
        if (*b) return cmd_build_adapter(build);
        if (*r) return cmd_run(run);
        if (*sw) return cmd_sweep(run);
        if (*h) return cmd_heatmap(heat);
        if (*c) return cmd_curvature(curv);
    } catch (const plate::FormatError& e) {
        std::cerr << "error: " << e.what() << " (byte offset " << e.byte_offset() << ")\n";
        return kExitFormat;
    } catch (const fs::filesystem_error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const nlohmann::json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFormat;
    } catch (const plate::ContractError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitContract;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitFailure;
    }
    return kExitFailure;
}
