#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "plate/adapters.hpp"
#include "plate/datasets.hpp"
#include "plate/model.hpp"

namespace plate {

enum class TaskKind { TwoMoons, RotatedRegression, Blobs, Mnist };

std::string to_string(TaskKind k);
TaskKind parse_task_kind(const std::string& s);

struct TaskSpec {
    TaskKind kind = TaskKind::TwoMoons;
    std::size_t n_train = 1000;
    std::size_t n_test = 2000;
    // two moons
    double noise = 0.1;
    double rotation_deg = 90.0;
    std::array<double, 2> translation{0.0, 0.0};
    // rotated regression
    std::size_t dim = 100;
    double alpha = 0.0;
    // blobs
    BlobSpec blobs{};
    // mnist: directory with the four standard IDX files
    std::string mnist_dir;
};

struct ArchSpec {
    std::vector<std::size_t> hidden{64, 64, 64};
    Activation activation = Activation::Relu;
};

enum class MethodKind { Full, Lora, Plate, Frozen };

std::string to_string(MethodKind k);
MethodKind parse_method_kind(const std::string& s);

struct MethodSpec {
    MethodKind kind = MethodKind::Plate;
    std::size_t r = 8;
    double tau = 0.9;
    std::size_t k_max = 0;  // 0 picks min(512, d_in) per layer
    double rho = 0.5;
    double lora_scale = 0.5;
    BasisPath basis_path = BasisPath::Auto;
};

struct MetricsSpec {
    bool epsilon = false;
    bool lambda = false;
    std::size_t samples = 512;  // old-task points used for the estimates
    bool train_split = false;   // estimate on task-1 training data instead of test
    int max_iters = 40;
};

struct ProtocolConfig {
    std::string name = "run";
    TaskSpec task{};
    ArchSpec arch{};
    TrainConfig stage1{};
    TrainConfig stage2{};
    MethodSpec method{};
    std::vector<std::uint64_t> seeds{0};
    MetricsSpec metrics{};
    bool record_wall_time = true;
    std::filesystem::path checkpoint_dir;  // empty: no per-run checkpoints
};

/// Both tasks, train and test splits, for one seed.
struct TaskData {
    Dataset train1, test1, train2, test2;
    LossKind loss = LossKind::SoftmaxCrossEntropy;
    std::size_t out1 = 0;
    std::size_t out2 = 0;
};

TaskData make_task_data(const TaskSpec& spec, std::uint64_t seed);

/// Trained task-1 model (head "task1") and its baseline on the task-1 test split.
struct Stage1Result {
    Mlp model;
    Evaluation base;
    std::vector<double> curve;
};

Stage1Result run_stage1(const ProtocolConfig& cfg, const TaskData& data, std::uint64_t seed);

/// Adapters for every layer of `model` as configured by `method`.
LayerAdapters build_adapters(const Mlp& model, const MethodSpec& method, std::uint64_t seed);

/// LoRA adapters after `steps` stage-2 mini-batches on task 2 (fresh "task2"
/// head on a copy of `model`). At B = 0 the LoRA tangent only spans dB A0;
/// a short warm start makes the B0 dA half nonzero too. steps = 0 returns
/// the initial adapters.
LayerAdapters lora_warm_start(const Mlp& model, const ProtocolConfig& cfg, const TaskData& data, std::uint64_t seed,
                              std::size_t steps);

struct Stage2Result {
    Mlp model;  // backbone and both heads after stage 2 (adapters not merged)
    LayerAdapters adapters;
    std::vector<double> curve;
};

Stage2Result run_stage2(const ProtocolConfig& cfg, const TaskData& data, const Stage1Result& stage1,
                        std::uint64_t seed);

struct RunResult {
    std::string name;
    std::size_t grid_index = 0;
    std::string method;
    std::size_t r = 0;
    double tau = 0.0;
    std::size_t k = 0;  // total basis columns over PLATE layers
    std::vector<std::size_t> layer_k;
    std::uint64_t seed = 0;
    std::size_t trainable_params = 0;  // backbone weight-update entries
    std::size_t trainable_total = 0;   // including biases and the task-2 head
    bool classification = true;
    double acc1_base = 0.0, acc2 = 0.0, acc1_after = 0.0;
    double loss1_base = 0.0, loss2 = 0.0, loss1_after = 0.0;
    double forgetting = 0.0;  // higher = worse retention
    std::optional<double> epsilon;
    std::optional<double> lambda;
    std::vector<double> stage1_curve;
    std::vector<double> stage2_curve;
    double wall_seconds = 0.0;
    bool failed = false;
    std::string error;
};

/// Worker count from PLATE_THREADS (default 1).
unsigned thread_count_from_env();

std::vector<RunResult> run_protocol(const ProtocolConfig& cfg, unsigned threads = 0);

struct Aggregate {
    std::size_t grid_index = 0;
    std::string name;
    std::string method;
    std::size_t r = 0;
    double tau = 0.0;
    std::size_t runs = 0;
    double forgetting_mean = 0.0, forgetting_std = 0.0;
    double acc2_mean = 0.0, acc2_std = 0.0;
    double loss2_mean = 0.0, loss2_std = 0.0;
};

struct SweepOutput {
    std::vector<RunResult> runs;  // grid order, then seed order
    std::vector<Aggregate> aggregates;
};

/// Runs every grid cell for every seed; stage-1 training is shared between
/// cells whose task-1 setup, architecture, stage-1 config and seed agree.
SweepOutput sweep(const std::vector<ProtocolConfig>& grid, unsigned threads = 0);

std::vector<Aggregate> aggregate(const std::vector<RunResult>& runs);

}  // namespace plate
