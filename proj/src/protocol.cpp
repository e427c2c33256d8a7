#include "plate/protocol.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <map>
#include <memory>
#include <mutex>
#include <numeric>
#include <thread>
#include <tuple>

#include <json.hpp>

#include "plate/config.hpp"
#include "plate/error.hpp"
#include "plate/geometry.hpp"
#include "plate/numerics/rng.hpp"
#include "plate/subspace.hpp"
#include "plate/tensor_io.hpp"

namespace plate {

namespace {

constexpr const char* kHead1 = "task1";
constexpr const char* kHead2 = "task2";

TrainConfig seeded(TrainConfig cfg, std::uint64_t seed, std::string_view tag, LossKind loss) {
    cfg.seed = derive_seed(seed, tag);
    cfg.loss = loss;
    return cfg;
}

std::pair<Dataset, Dataset> mnist_split(const std::string& dir, bool train) {
    namespace fs = std::filesystem;
    const fs::path base(dir);
    const Dataset all = train ? load_idx(base / "train-images-idx3-ubyte", base / "train-labels-idx1-ubyte")
                              : load_idx(base / "t10k-images-idx3-ubyte", base / "t10k-labels-idx1-ubyte");
    return {filter_classes(all, 0, 5), filter_classes(all, 5, 5)};
}

Dataset head_rows(const Dataset& d, std::size_t n) {
    if (n == 0 || n >= d.size()) return d;
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    return subset(d, idx);
}

std::string stage1_key(const ProtocolConfig& cfg, std::uint64_t seed) {
    ProtocolConfig k = cfg;
    k.name = "";
    k.method = MethodSpec{};
    k.stage2 = TrainConfig{};
    k.metrics = MetricsSpec{};
    k.record_wall_time = true;
    k.checkpoint_dir.clear();
    k.seeds = {seed};
    const TaskSpec defaults{};
    k.task.rotation_deg = defaults.rotation_deg;
    k.task.translation = defaults.translation;
    k.task.alpha = defaults.alpha;
    return protocol_config_json(k);
}

void fill_metrics(RunResult& res, const ProtocolConfig& cfg, const TaskData& data, const Stage1Result& s1,
                  std::uint64_t seed) {
    if (!cfg.metrics.epsilon && !cfg.metrics.lambda) return;
    if (cfg.method.kind == MethodKind::Frozen) return;
    const Dataset old = head_rows(cfg.metrics.train_split ? data.train1 : data.test1, cfg.metrics.samples);
    const LayerAdapters init = build_adapters(s1.model, cfg.method, seed);
    const ParamLayout layout = param_layout(s1.model);
    const UpdateSubspace s = cfg.method.kind == MethodKind::Plate  ? UpdateSubspace::plate(layout, init)
                             : cfg.method.kind == MethodKind::Lora ? UpdateSubspace::lora_tangent(layout, init)
                                                                   : UpdateSubspace::full(layout);
    const OldTask task{&s1.model, kHead1, &old, data.loss};
    if (cfg.metrics.epsilon) {
        DriftOptions o;
        o.max_iters = cfg.metrics.max_iters;
        o.seed = derive_seed(seed, "metrics");
        res.epsilon = drift_radius(task, s, o).epsilon;
    }
    if (cfg.metrics.lambda) {
        CurvatureOptions o;
        o.max_iters = cfg.metrics.max_iters;
        o.seed = derive_seed(seed, "metrics");
        res.lambda = restricted_curvature(task, s, o).lambda_s;
    }
}

RunResult execute(const ProtocolConfig& cfg, std::size_t grid_index, std::uint64_t seed, const TaskData& data,
                  const Stage1Result& s1, double stage1_seconds) {
    const auto t0 = std::chrono::steady_clock::now();
    RunResult res;
    res.name = cfg.name;
    res.grid_index = grid_index;
    res.method = to_string(cfg.method.kind);
    res.seed = seed;
    res.classification = data.loss == LossKind::SoftmaxCrossEntropy;
    if (cfg.method.kind == MethodKind::Plate || cfg.method.kind == MethodKind::Lora) res.r = cfg.method.r;
    if (cfg.method.kind == MethodKind::Plate) res.tau = cfg.method.tau;
    res.stage1_curve = s1.curve;
    res.acc1_base = s1.base.accuracy;
    res.loss1_base = s1.base.loss;

    const Stage2Result s2 = run_stage2(cfg, data, s1, seed);
    res.stage2_curve = s2.curve;
    for (const auto& ad : s2.adapters)
        if (const auto* p = std::get_if<PlateAdapter>(&ad)) {
            res.layer_k.push_back(p->basis.k);
            res.k += p->basis.k;
        }
    res.trainable_params = backbone_trainable_count(s2.model, s2.adapters);
    res.trainable_total = model_trainable_count(s2.model, s2.adapters, kHead2);
    const Evaluation e2 = evaluate(s2.model, s2.adapters, kHead2, data.test2, data.loss);
    const Evaluation e1 = evaluate(s2.model, s2.adapters, kHead1, data.test1, data.loss);
    res.acc2 = e2.accuracy;
    res.loss2 = e2.loss;
    res.acc1_after = e1.accuracy;
    res.loss1_after = e1.loss;
    res.forgetting = res.classification ? res.acc1_base - res.acc1_after : res.loss1_after - res.loss1_base;
    fill_metrics(res, cfg, data, s1, seed);

    if (!cfg.checkpoint_dir.empty()) {
        char tag[32];
        std::snprintf(tag, sizeof tag, "cell%03zu-", grid_index);
        const auto dir = cfg.checkpoint_dir / (tag + res.method + "-seed" + std::to_string(seed));
        std::filesystem::create_directories(dir);
        save_model(s1.model, dir / "theta0");
        save_model(merged(s2.model, s2.adapters), dir / "theta1");
        save_layer_adapters(s2.adapters, dir / "adapters");
        const auto run = nlohmann::ordered_json{{"config", nlohmann::ordered_json::parse(protocol_config_json(cfg))},
                                                {"seed", seed}};
        write_file_atomic(dir / "run.json", run.dump(2) + "\n");
    }
    const auto t1 = std::chrono::steady_clock::now();
    if (cfg.record_wall_time)
        res.wall_seconds = stage1_seconds + std::chrono::duration<double>(t1 - t0).count();
    return res;
}

double mean_of(const std::vector<double>& v) {
    return v.empty() ? 0.0 : std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size());
}

double std_of(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean_of(v);
    double acc = 0.0;
    for (double x : v) acc += (x - m) * (x - m);
    return std::sqrt(acc / static_cast<double>(v.size() - 1));
}

}  // namespace

std::string to_string(TaskKind k) {
    switch (k) {
    case TaskKind::TwoMoons: return "two_moons";
    case TaskKind::RotatedRegression: return "rotated_regression";
    case TaskKind::Blobs: return "blobs";
    case TaskKind::Mnist: return "mnist";
    }
    return "?";
}

TaskKind parse_task_kind(const std::string& s) {
    if (s == "two_moons") return TaskKind::TwoMoons;
    if (s == "rotated_regression") return TaskKind::RotatedRegression;
    if (s == "blobs") return TaskKind::Blobs;
    if (s == "mnist") return TaskKind::Mnist;
    throw ContractError("unknown task kind '" + s + "'");
}

std::string to_string(MethodKind k) {
    switch (k) {
    case MethodKind::Full: return "full";
    case MethodKind::Lora: return "lora";
    case MethodKind::Plate: return "plate";
    case MethodKind::Frozen: return "frozen";
    }
    return "?";
}

MethodKind parse_method_kind(const std::string& s) {
    if (s == "full") return MethodKind::Full;
    if (s == "lora") return MethodKind::Lora;
    if (s == "plate") return MethodKind::Plate;
    if (s == "frozen") return MethodKind::Frozen;
    throw ContractError("unknown method '" + s + "'");
}

TaskData make_task_data(const TaskSpec& spec, std::uint64_t seed) {
    PLATE_REQUIRE((spec.n_train >= 2 && spec.n_test >= 2) || spec.kind == TaskKind::Mnist,
                  "task: n_train and n_test must be at least 2");
    TaskData d;
    const std::uint64_t s_train = derive_seed(seed, "train");
    const std::uint64_t s_test = derive_seed(seed, "test");
    switch (spec.kind) {
    case TaskKind::TwoMoons: {
        auto moons = [&](std::size_t n, std::uint64_t s, bool second) {
            return second ? gen_two_moons(n, spec.noise, spec.rotation_deg, spec.translation, derive_seed(s, "task2"))
                          : gen_two_moons(n, spec.noise, 0.0, {0.0, 0.0}, derive_seed(s, "task1"));
        };
        d.train1 = moons(spec.n_train, s_train, false);
        d.test1 = moons(spec.n_test, s_test, false);
        d.train2 = moons(spec.n_train, s_train, true);
        d.test2 = moons(spec.n_test, s_test, true);
        d.loss = LossKind::SoftmaxCrossEntropy;
        d.out1 = d.out2 = 2;
        break;
    }
    case TaskKind::RotatedRegression: {
        std::tie(d.train1, d.train2) = gen_rotated_regression(spec.dim, spec.alpha, spec.n_train, s_train);
        std::tie(d.test1, d.test2) = gen_rotated_regression(spec.dim, spec.alpha, spec.n_test, s_test);
        d.loss = LossKind::Mse;
        d.out1 = d.out2 = 1;
        break;
    }
    case TaskKind::Blobs: {
        PLATE_REQUIRE(spec.blobs.classes >= 2 && spec.blobs.classes % 2 == 0, "blobs: need an even class count");
        const std::size_t half = spec.blobs.classes / 2;
        d.train1 = gen_blobs(spec.blobs, 0, half, spec.n_train, derive_seed(s_train, "task1"));
        d.test1 = gen_blobs(spec.blobs, 0, half, spec.n_test, derive_seed(s_test, "task1"));
        d.train2 = gen_blobs(spec.blobs, half, half, spec.n_train, derive_seed(s_train, "task2"));
        d.test2 = gen_blobs(spec.blobs, half, half, spec.n_test, derive_seed(s_test, "task2"));
        d.loss = LossKind::SoftmaxCrossEntropy;
        d.out1 = d.out2 = half;
        break;
    }
    case TaskKind::Mnist: {
        PLATE_REQUIRE(!spec.mnist_dir.empty(), "mnist task needs mnist_dir");
        std::tie(d.train1, d.train2) = mnist_split(spec.mnist_dir, true);
        std::tie(d.test1, d.test2) = mnist_split(spec.mnist_dir, false);
        d.train1 = head_rows(d.train1, spec.n_train);
        d.train2 = head_rows(d.train2, spec.n_train);
        d.test1 = head_rows(d.test1, spec.n_test);
        d.test2 = head_rows(d.test2, spec.n_test);
        d.loss = LossKind::SoftmaxCrossEntropy;
        d.out1 = d.out2 = 5;
        break;
    }
    }
    for (Dataset* ds : {&d.train1, &d.train2}) ds->split = Split::Train;
    for (Dataset* ds : {&d.test1, &d.test2}) ds->split = Split::Test;
    return d;
}

Stage1Result run_stage1(const ProtocolConfig& cfg, const TaskData& data, std::uint64_t seed) {
    std::vector<std::size_t> dims{data.train1.inputs.cols()};
    dims.insert(dims.end(), cfg.arch.hidden.begin(), cfg.arch.hidden.end());
    PLATE_REQUIRE(dims.size() >= 2, "architecture needs at least one hidden layer");
    Stage1Result r;
    r.model = make_mlp(dims, cfg.arch.activation, derive_seed(seed, "model"));
    add_head(r.model, kHead1, data.out1, derive_seed(seed, "head1"));
    LayerAdapters all_full;
    r.curve = train(r.model, all_full, data.train1, kHead1, seeded(cfg.stage1, seed, "stage1", data.loss)).epoch_loss;
    r.base = evaluate(r.model, {}, kHead1, data.test1, data.loss);
    return r;
}

LayerAdapters build_adapters(const Mlp& model, const MethodSpec& method, std::uint64_t seed) {
    LayerAdapters out;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Matrix& w = model.layers[l].weight;
        const std::uint64_t s = derive_seed(seed, "adapter-layer" + std::to_string(l));
        switch (method.kind) {
        case MethodKind::Full:
            out.emplace_back(FullFineTune{});
            break;
        case MethodKind::Frozen:
            out.emplace_back(Frozen{});
            break;
        case MethodKind::Lora:
            out.emplace_back(lora_init(w.rows(), w.cols(), method.r, method.lora_scale, s));
            break;
        case MethodKind::Plate: {
            PlateOptions o;
            o.r = method.r;
            o.tau = method.tau;
            o.k_max = method.k_max == 0 ? 0 : std::min(method.k_max, w.cols());
            o.rho = method.rho;
            o.seed = s;
            o.path = method.basis_path;
            out.emplace_back(plate_init(w, o));
            break;
        }
        }
    }
    return out;
}

LayerAdapters lora_warm_start(const Mlp& model, const ProtocolConfig& cfg, const TaskData& data, std::uint64_t seed,
                              std::size_t steps) {
    PLATE_REQUIRE(cfg.method.kind == MethodKind::Lora, "lora_warm_start: method must be lora");
    Mlp copy = model;
    if (!copy.heads.count(kHead2)) add_head(copy, kHead2, data.out2, derive_seed(seed, "head2"));
    LayerAdapters adapters = build_adapters(copy, cfg.method, seed);
    if (steps == 0) return adapters;
    const std::size_t n = std::min(data.train2.size(), steps * cfg.stage2.batch_size);
    std::vector<std::size_t> idx(n);
    std::iota(idx.begin(), idx.end(), std::size_t{0});
    TrainConfig t = seeded(cfg.stage2, seed, "lora-warm", data.loss);
    t.epochs = (steps * cfg.stage2.batch_size + n - 1) / n;
    train(copy, adapters, subset(data.train2, idx), kHead2, t);
    return adapters;
}

Stage2Result run_stage2(const ProtocolConfig& cfg, const TaskData& data, const Stage1Result& stage1,
                        std::uint64_t seed) {
    Stage2Result r;
    r.model = stage1.model;
    add_head(r.model, kHead2, data.out2, derive_seed(seed, "head2"));
    r.adapters = build_adapters(r.model, cfg.method, seed);
    r.curve = train(r.model, r.adapters, data.train2, kHead2, seeded(cfg.stage2, seed, "stage2", data.loss)).epoch_loss;
    return r;
}

unsigned thread_count_from_env() {
    const char* env = std::getenv("PLATE_THREADS");
    if (!env || !*env) return 1;
    char* end = nullptr;
    const long v = std::strtol(env, &end, 10);
    if (*end != '\0' || v < 1) throw ContractError(std::string("PLATE_THREADS must be a positive integer, got '") + env + "'");
    return static_cast<unsigned>(std::min<long>(v, 256));
}

std::vector<RunResult> run_protocol(const ProtocolConfig& cfg, unsigned threads) {
    return sweep({cfg}, threads).runs;
}

SweepOutput sweep(const std::vector<ProtocolConfig>& grid, unsigned threads) {
    PLATE_REQUIRE(!grid.empty(), "sweep: empty grid");
    for (const auto& cfg : grid) PLATE_REQUIRE(!cfg.seeds.empty(), "config '" + cfg.name + "' has no seeds");
    if (threads == 0) threads = thread_count_from_env();

    struct Job {
        std::size_t cell;
        std::uint64_t seed;
    };
    std::vector<Job> jobs;
    for (std::size_t c = 0; c < grid.size(); ++c)
        for (auto s : grid[c].seeds) jobs.push_back({c, s});

    struct Shared {
        std::once_flag once;
        std::shared_ptr<const TaskData> data;
        std::shared_ptr<const Stage1Result> stage1;
        double seconds = 0.0;
        std::string error;
    };
    std::mutex mu;
    std::map<std::string, std::shared_ptr<Shared>> cache;
    auto shared_for = [&](const ProtocolConfig& cfg, std::uint64_t seed) {
        // Task-2 data depends on the full task spec, so it is keyed separately.
        const std::string key = stage1_key(cfg, seed);
        std::shared_ptr<Shared> sh;
        {
            std::lock_guard lock(mu);
            auto& slot = cache[key];
            if (!slot) slot = std::make_shared<Shared>();
            sh = slot;
        }
        std::call_once(sh->once, [&] {
            const auto t0 = std::chrono::steady_clock::now();
            try {
                auto data = std::make_shared<TaskData>(make_task_data(cfg.task, derive_seed(seed, "data")));
                sh->stage1 = std::make_shared<Stage1Result>(run_stage1(cfg, *data, seed));
                sh->data = std::move(data);
            } catch (const std::exception& e) {
                sh->error = e.what();
            }
            sh->seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        });
        return sh;
    };

    std::vector<RunResult> results(jobs.size());
    std::atomic<std::size_t> next{0};
    auto worker = [&] {
        for (std::size_t j = next++; j < jobs.size(); j = next++) {
            const ProtocolConfig& cfg = grid[jobs[j].cell];
            const std::uint64_t seed = jobs[j].seed;
            RunResult& out = results[j];
            try {
                const auto sh = shared_for(cfg, seed);
                if (!sh->error.empty()) throw NumericalError("stage 1 failed: " + sh->error);
                // Task-2 data may differ between cells sharing stage 1.
                const TaskData data = make_task_data(cfg.task, derive_seed(seed, "data"));
                out = execute(cfg, jobs[j].cell, seed, data, *sh->stage1, sh->seconds);
            } catch (const std::exception& e) {
                out = RunResult{};
                out.name = cfg.name;
                out.grid_index = jobs[j].cell;
                out.method = to_string(cfg.method.kind);
                out.seed = seed;
                out.failed = true;
                out.error = e.what();
            }
        }
    };
    const unsigned n_workers = std::max(1u, std::min<unsigned>(threads, static_cast<unsigned>(jobs.size())));
    if (n_workers == 1) {
        worker();
    } else {
        std::vector<std::thread> pool;
        for (unsigned t = 0; t < n_workers; ++t) pool.emplace_back(worker);
        for (auto& t : pool) t.join();
    }
    SweepOutput out;
    out.runs = std::move(results);
    out.aggregates = aggregate(out.runs);
    return out;
}

std::vector<Aggregate> aggregate(const std::vector<RunResult>& runs) {
    std::map<std::size_t, std::vector<const RunResult*>> cells;
    for (const auto& r : runs)
        if (!r.failed) cells[r.grid_index].push_back(&r);
    std::vector<Aggregate> out;
    for (const auto& [cell, rs] : cells) {
        Aggregate a;
        a.grid_index = cell;
        a.name = rs.front()->name;
        a.method = rs.front()->method;
        a.r = rs.front()->r;
        a.tau = rs.front()->tau;
        a.runs = rs.size();
        std::vector<double> f, acc, loss;
        for (const auto* r : rs) {
            f.push_back(r->forgetting);
            acc.push_back(r->acc2);
            loss.push_back(r->loss2);
        }
        a.forgetting_mean = mean_of(f);
        a.forgetting_std = std_of(f);
        a.acc2_mean = mean_of(acc);
        a.acc2_std = std_of(acc);
        a.loss2_mean = mean_of(loss);
        a.loss2_std = std_of(loss);
        out.push_back(a);
    }
    return out;
}

}  // namespace plate
