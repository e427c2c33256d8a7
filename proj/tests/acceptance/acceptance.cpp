// Acceptance gate: one PASS/FAIL line per criterion.
//   plate_acceptance                 all criteria in order
//   plate_acceptance --criterion N   just one

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <numbers>
#include <sstream>
#include <string>
#include <vector>

#include <unistd.h>

#include <CLI11.hpp>
#include <Eigen/Dense>

#include "plate/adapters.hpp"
#include "plate/basis.hpp"
#include "plate/datasets.hpp"
#include "plate/geometry.hpp"
#include "plate/model.hpp"
#include "plate/numerics/linalg.hpp"
#include "plate/protocol.hpp"
#include "plate/report.hpp"
#include "plate/subspace.hpp"

using namespace plate;
namespace fs = std::filesystem;

namespace {

enum class Status { Pass, Fail, Skip };

struct Verdict {
    Status status = Status::Fail;
    std::string detail;
};

Verdict verdict(bool ok, std::string detail) { return {ok ? Status::Pass : Status::Fail, std::move(detail)}; }

std::string fmt(double v, int prec = 4) {
    std::ostringstream os;
    os.precision(prec);
    os << v;
    return os.str();
}

void note(const std::string& s) { std::cout << "  " << s << '\n' << std::flush; }

double mean(const std::vector<double>& v) {
    double s = 0.0;
    for (double x : v) s += x;
    return v.empty() ? 0.0 : s / static_cast<double>(v.size());
}

double sample_std(const std::vector<double>& v) {
    if (v.size() < 2) return 0.0;
    const double m = mean(v);
    double s = 0.0;
    for (double x : v) s += (x - m) * (x - m);
    return std::sqrt(s / static_cast<double>(v.size() - 1));
}

Dataset head_rows(const Dataset& d, std::size_t n) {
    std::vector<std::size_t> idx(std::min(n, d.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) idx[i] = i;
    return subset(d, idx);
}

TrainConfig train_cfg(std::size_t epochs, std::size_t batch, double lr, LossKind loss, std::uint64_t seed) {
    TrainConfig c;
    c.epochs = epochs;
    c.batch_size = batch;
    c.learning_rate = lr;
    c.loss = loss;
    c.seed = seed;
    return c;
}

// ---- 1: exact invariance ----------------------------------------------------

Verdict criterion_1() {
    const Dataset data = gen_two_moons(48, 0.1, 0.0, {0.0, 0.0}, 11);
    Mlp model = make_mlp({2, 64, 64, 64}, Activation::Relu, 12);
    add_head(model, "task1", 2, 13);
    LayerAdapters none;
    train(model, none, data, "task1", train_cfg(200, 16, 1e-2, LossKind::SoftmaxCrossEntropy, 14));
    const double acc = evaluate(model, none, "task1", data, LossKind::SoftmaxCrossEntropy).accuracy;

    SeededRng rng(15);
    const auto delta = nullspace_update(model, data.inputs, 1.0, rng);
    const auto theta0 = params_to_vector(model).values;
    std::vector<double> theta1 = theta0;
    for (std::size_t i = 0; i < theta1.size(); ++i) theta1[i] += delta[i];
    const OldTask task{&model, "task1", &data, LossKind::SoftmaxCrossEntropy};
    const double f = forgetting(task, theta0, theta1);
    const Matrix out0 = forward(model, {}, "task1", data.inputs);
    const Matrix out1 = forward(with_params(model, theta1), {}, "task1", data.inputs);
    const double dev = max_abs(out1 - out0);
    const double step = norm2(delta);
    note("train accuracy " + fmt(acc) + ", |delta theta| = " + fmt(step));
    return verdict(step > 0.5 && std::abs(f) <= 1e-9 && dev <= 1e-9,
                   "|F0| = " + fmt(std::abs(f)) + ", max output deviation = " + fmt(dev));
}

// ---- 2: gradient suite ------------------------------------------------------

double normwise_rel(const Matrix& a, const Matrix& b) {
    const double num = frobenius_norm(a - b);
    const double den = std::max({frobenius_norm(a), frobenius_norm(b), 1e-8});
    return num / den;
}

Verdict criterion_2() {
    const std::vector<std::string> kinds{"full", "frozen", "lora", "plate", "mixed"};
    std::size_t cases = 0;
    std::size_t failures = 0;
    double worst = 0.0;
    std::uint64_t seed = 0;
    for (const auto& kind : kinds)
        for (Activation act : {Activation::Relu, Activation::Tanh, Activation::Identity})
            for (LossKind lk : {LossKind::Mse, LossKind::SoftmaxCrossEntropy})
                for (int rep = 0; rep < 2; ++rep) {
                    SeededRng rng(derive_seed(1000 + seed++, "gradcase"));
                    std::vector<std::size_t> dims{2 + rng.below(5)};
                    const std::size_t depth = 1 + rng.below(3);
                    for (std::size_t l = 0; l < depth; ++l) dims.push_back(3 + rng.below(6));
                    const std::size_t outs = 2 + rng.below(3);
                    const std::size_t n = 3 + rng.below(6);
                    Mlp m = make_mlp(dims, act, rng.next_u64());
                    add_head(m, "h", outs, rng.next_u64());
                    for (auto& layer : m.layers)
                        for (double& b : layer.bias.values()) b = 0.2 * rng.normal();
                    Dataset ds;
                    ds.inputs = gaussian_matrix(n, dims[0], rng);
                    if (lk == LossKind::Mse) {
                        ds.targets = gaussian_matrix(n, outs, rng);
                    } else {
                        std::vector<int> y(n);
                        for (int& v : y) v = static_cast<int>(rng.below(outs));
                        ds.targets = y;
                        ds.num_classes = outs;
                    }
                    LayerAdapters ad;
                    for (std::size_t l = 0; l < m.layers.size(); ++l) {
                        const Matrix& w = m.layers[l].weight;
                        std::string k = kind;
                        if (kind == "mixed") k = kinds[rng.below(4)];
                        if (k == "full") {
                            ad.push_back(FullFineTune{});
                        } else if (k == "frozen") {
                            ad.push_back(Frozen{});
                        } else if (k == "lora") {
                            LoraAdapter la = lora_init(w.rows(), w.cols(), 1 + rng.below(3), 0.5, rng.next_u64());
                            la.b = gaussian_matrix(la.b.rows(), la.b.cols(), rng);
                            ad.push_back(la);
                        } else {
                            PlateAdapter p = plate_init(w, 1 + rng.below(w.rows() - 1), 0.5, 0, 0.5, rng.next_u64());
                            p.a = gaussian_matrix(p.a.rows(), p.a.cols(), rng);
                            ad.push_back(p);
                        }
                    }

                    ForwardCache cache;
                    const Matrix out = forward(m, ad, "h", ds.inputs, &cache);
                    const auto grads = backward(m, ad, "h", cache, loss_and_grad(out, ds.targets, lk).grad);
                    auto slots = trainable_slots(m, ad, "h");
                    bool ok = slots.size() == grads.size();
                    for (std::size_t s = 0; ok && s < slots.size(); ++s) {
                        Matrix fd(slots[s].value->rows(), slots[s].value->cols());
                        for (std::size_t i = 0; i < fd.size(); ++i) {
                            double& v = slots[s].value->values()[i];
                            const double keep = v;
                            const double h = 1e-5 * std::max(1.0, std::abs(keep));
                            v = keep + h;
                            const double lp = loss_value(forward(m, ad, "h", ds.inputs), ds.targets, lk);
                            v = keep - h;
                            const double lm = loss_value(forward(m, ad, "h", ds.inputs), ds.targets, lk);
                            v = keep;
                            fd.values()[i] = (lp - lm) / (2.0 * h);
                        }
                        const double e = normwise_rel(fd, grads[s]);
                        worst = std::max(worst, e);
                        if (e > 1e-4) {
                            ok = false;
                            note("case " + std::to_string(cases) + " (" + kind + ", " + to_string(act) + ", " +
                                 to_string(lk) + ") tensor " + slots[s].name + ": rel err " + fmt(e));
                        }
                    }
                    ++cases;
                    if (!ok) ++failures;
                }
    return verdict(cases >= 50 && failures == 0, std::to_string(cases) + " cases, " + std::to_string(failures) +
                                                     " failed, worst relative error " + fmt(worst));
}

// ---- 3: basis correctness ---------------------------------------------------

Matrix with_spectrum(std::size_t rows, const std::vector<double>& s, std::uint64_t seed) {
    const std::size_t d = s.size();
    SeededRng rng(seed);
    const Matrix u = qr_orthonormalize(gaussian_matrix(rows, d, rng));
    const Matrix v = qr_orthonormalize(gaussian_matrix(d, d, rng));
    Matrix us = u;
    for (std::size_t i = 0; i < rows; ++i)
        for (std::size_t j = 0; j < d; ++j) us(i, j) *= s[j];
    return matmul_nt(us, v);
}

Verdict criterion_3() {
    double worst_dense = 0.0;
    bool dense_ok = true;
    const std::vector<std::pair<std::size_t, std::size_t>> shapes{{64, 32}, {128, 64}, {256, 128}, {512, 256}};
    std::uint64_t seed = 0;
    for (auto [rows, cols] : shapes)
        for (double tau : {0.6, 0.9}) {
            SeededRng rng(derive_seed(300 + seed++, "basis"));
            const Matrix w = gaussian_matrix(rows, cols, rng);
            const InputBasis b = dense_low_energy_basis(w, tau, cols / 2);
            Eigen::MatrixXd we(rows, cols);
            for (std::size_t i = 0; i < rows; ++i)
                for (std::size_t j = 0; j < cols; ++j) we(i, j) = w(i, j);
            // Brute force: one-sided Jacobi SVD of W; the bottom-k right
            // singular vectors span the low-energy subspace.
            const Eigen::JacobiSVD<Eigen::MatrixXd> svd(we, Eigen::ComputeFullV);
            Matrix oracle(cols, b.k);
            for (std::size_t i = 0; i < cols; ++i)
                for (std::size_t j = 0; j < b.k; ++j)
                    oracle(i, j) = svd.matrixV()(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(cols - 1 - j));
            for (double a : principal_angles(b.q, oracle)) worst_dense = std::max(worst_dense, a);
            if (b.k == 0) dense_ok = false;
        }
    dense_ok = dense_ok && worst_dense < 1e-6;
    note("dense vs brute-force Jacobi SVD: worst angle " + fmt(worst_dense));

    double worst_srht = 0.0;
    bool srht_ok = true;
    for (std::uint64_t s = 0; s < 10; ++s) {
        const std::size_t d = s % 2 == 0 ? 256 : 512;
        std::vector<double> spec(d);
        SeededRng rng(derive_seed(400 + s, "spectrum"));
        for (std::size_t i = 0; i < d; ++i) spec[i] = i < d - 16 ? 1.0 + rng.uniform() : 1e-3 * (1.0 + rng.uniform());
        const Matrix w = with_spectrum(d + 32, spec, 500 + s);
        SrhtConfig cfg;
        cfg.seed = s;
        const InputBasis dense = dense_low_energy_basis(w, 0.99, 16);
        const InputBasis srht = srht_low_energy_basis(w, 0.99, 16, cfg);
        if (dense.k != srht.k) {
            srht_ok = false;
            note("seed " + std::to_string(s) + ": k differs (" + std::to_string(dense.k) + " vs " +
                 std::to_string(srht.k) + ")");
            continue;
        }
        for (double a : principal_angles(srht.q, dense.q)) worst_srht = std::max(worst_srht, a);
    }
    srht_ok = srht_ok && worst_srht < 0.1;
    note("SRHT vs dense on gapped spectra, 10 seeds: worst angle " + fmt(worst_srht) + " rad");
    return verdict(dense_ok && srht_ok, "dense worst angle " + fmt(worst_dense) + ", SRHT worst angle " +
                                            fmt(worst_srht) + " rad");
}

// ---- 4: bound checks ----------------------------------------------------------

struct TrainedTask {
    Mlp model;
    Dataset data;
    LossKind loss;
};

// The quadratic cap describes forgetting around a minimizer, so the old-task
// models are trained full-batch with a decaying step until the gradient is
// negligible.
void train_to_stationarity(TrainedTask& t, std::uint64_t seed) {
    LayerAdapters none;
    for (double lr : {1e-2, 3e-3, 1e-3, 3e-4, 1e-4, 3e-5, 1e-5})
        train(t.model, none, t.data, "task1", train_cfg(1000, t.data.size(), lr, t.loss, seed));
}

TrainedTask trained_moons(std::uint64_t seed) {
    TrainedTask t{make_mlp({2, 32, 32}, Activation::Tanh, derive_seed(seed, "model")),
                  gen_two_moons(200, 0.05, 0.0, {0.0, 0.0}, derive_seed(seed, "data")), LossKind::SoftmaxCrossEntropy};
    add_head(t.model, "task1", 2, derive_seed(seed, "head"));
    train_to_stationarity(t, derive_seed(seed, "train"));
    return t;
}

TrainedTask trained_regression(std::uint64_t seed) {
    TrainedTask t{make_mlp({8, 32, 32}, Activation::Tanh, derive_seed(seed, "model")),
                  gen_rotated_regression(8, 0.0, 200, derive_seed(seed, "data")).first, LossKind::Mse};
    add_head(t.model, "task1", 1, derive_seed(seed, "head"));
    train_to_stationarity(t, derive_seed(seed, "train"));
    return t;
}

Verdict criterion_4() {
    const std::vector<double> rhos{1e-3, 3e-3, 1e-2};
    std::size_t checks = 0, bound_fail = 0, cap_fail = 0;
    double worst_ratio = 0.0;  // max forgetting / cap
    double worst_grad = 0.0;
    for (int family = 0; family < 2; ++family)
        for (std::uint64_t seed = 0; seed < 10; ++seed) {
            const TrainedTask t = family == 0 ? trained_moons(seed) : trained_regression(seed);
            std::vector<double> grad;
            loss_gradient(t.model, "task1", t.data, t.loss, grad);
            worst_grad = std::max(worst_grad, norm2(grad));
            const ParamLayout layout = param_layout(t.model);
            LayerAdapters plate_ad, lora_ad;
            for (std::size_t l = 0; l < t.model.layers.size(); ++l) {
                const Matrix& w = t.model.layers[l].weight;
                plate_ad.push_back(plate_init(w, 8, 0.9, 0, 0.5, derive_seed(seed, "plate" + std::to_string(l))));
                lora_ad.push_back(lora_init(w.rows(), w.cols(), 4, 0.5, derive_seed(seed, "lora" + std::to_string(l))));
            }
            std::vector<std::pair<std::string, UpdateSubspace>> family_s;
            family_s.emplace_back("plate", UpdateSubspace::plate(layout, plate_ad));
            family_s.emplace_back("lora-tangent", UpdateSubspace::lora_tangent(layout, lora_ad));
            SeededRng rng(derive_seed(seed, "random-subspace"));
            for (int i = 0; i < 3; ++i)
                family_s.emplace_back("random" + std::to_string(i), UpdateSubspace::random_backbone(layout, 20, rng));

            const OldTask task{&t.model, "task1", &t.data, t.loss};
            for (const auto& [name, s] : family_s) {
                ++checks;
                const BoundCheck bc = bound_check_gn(task, s);
                if (!bc.holds) {
                    ++bound_fail;
                    note(std::string(family == 0 ? "moons" : "regression") + " seed " + std::to_string(seed) + " " +
                         name + ": lambda " + fmt(bc.lambda_s) + " > beta eps^2 " + fmt(bc.beta_eps_sq) +
                         " + slack " + fmt(bc.slack));
                }
                for (double rho : rhos) {
                    const auto rf = random_direction_forgetting(task, s, rho, 200, derive_seed(seed, name));
                    const double cap = 0.5 * bc.beta_eps_sq * rho * rho * 1.2;
                    const double ratio = cap > 0.0 ? rf.max_forgetting / cap : (rf.max_forgetting > 0.0 ? 1e9 : 0.0);
                    worst_ratio = std::max(worst_ratio, ratio);
                    if (rf.max_forgetting > cap) {
                        ++cap_fail;
                        note(std::string(family == 0 ? "moons" : "regression") + " seed " + std::to_string(seed) +
                             " " + name + " rho " + fmt(rho) + ": max forgetting " + fmt(rf.max_forgetting) +
                             " > cap " + fmt(cap));
                    }
                }
            }
        }
    note("largest old-task gradient norm at theta0: " + fmt(worst_grad));
    return verdict(bound_fail == 0 && cap_fail == 0,
                   std::to_string(checks) + " subspaces, bound failures " + std::to_string(bound_fail) +
                       ", cap failures " + std::to_string(cap_fail) + ", worst forgetting/cap " + fmt(worst_ratio));
}

// ---- 5: worst-direction slope ordering ----------------------------------------

Verdict criterion_5() {
    const std::vector<double> rhos{0.01, 0.02, 0.03, 0.04, 0.05, 0.06, 0.07, 0.08};
    int ordered = 0;
    for (std::uint64_t seed = 0; seed < 10; ++seed) {
        ProtocolConfig cfg;
        cfg.task.kind = TaskKind::Blobs;
        cfg.task.n_train = 2000;
        cfg.task.n_test = 1000;
        cfg.task.blobs.seed = 100 + seed;
        cfg.arch.hidden = {128, 128, 128};
        cfg.arch.activation = Activation::Relu;
        cfg.stage1.epochs = 10;
        cfg.stage1.batch_size = 128;
        cfg.stage1.learning_rate = 1e-3;
        const TaskData data = make_task_data(cfg.task, seed);
        const Stage1Result s1 = run_stage1(cfg, data, seed);
        const Dataset old = head_rows(data.train1, 512);
        const OldTask task{&s1.model, "task1", &old, data.loss};
        const ParamLayout layout = param_layout(s1.model);

        MethodSpec plate_m;
        plate_m.kind = MethodKind::Plate;
        plate_m.r = 32;
        plate_m.tau = 0.8;
        ProtocolConfig lora_cfg = cfg;
        lora_cfg.method.kind = MethodKind::Lora;
        lora_cfg.method.r = 8;
        lora_cfg.stage2.batch_size = 128;
        const std::vector<std::pair<std::string, UpdateSubspace>> fam{
            {"plate", UpdateSubspace::plate(layout, build_adapters(s1.model, plate_m, seed))},
            {"lora", UpdateSubspace::lora_tangent(layout, lora_warm_start(s1.model, lora_cfg, data, seed, 10))},
            {"full", UpdateSubspace::full(layout)}};
        std::map<std::string, double> slope;
        for (const auto& [name, s] : fam) {
            CurvatureOptions co;
            co.seed = seed;
            const CurvatureReport cr = restricted_curvature(task, s, co);
            slope[name] = worst_direction_sweep(task, cr.top_direction, rhos).quadratic;
        }
        const bool ok = slope["plate"] < slope["lora"] && slope["lora"] < slope["full"];
        if (ok) ++ordered;
        note("seed " + std::to_string(seed) + " (task-1 acc " + fmt(s1.base.accuracy, 3) + "): slopes plate " +
             fmt(slope["plate"]) + ", lora " + fmt(slope["lora"]) + ", full " + fmt(slope["full"]) +
             (ok ? "" : "  [out of order]"));
    }
    return verdict(ordered >= 8, "slope(PLATE) < slope(LoRA) < slope(full) in " + std::to_string(ordered) +
                                     "/10 seeds (blob stand-in, 64-D, 5 classes)");
}

// ---- 6: rotated regression --------------------------------------------------

std::vector<std::uint64_t> seeds_0_to(std::uint64_t n) {
    std::vector<std::uint64_t> s(n);
    for (std::uint64_t i = 0; i < n; ++i) s[i] = i;
    return s;
}

Verdict criterion_6() {
    ProtocolConfig base;
    base.name = "regression";
    base.task.kind = TaskKind::RotatedRegression;
    base.task.dim = 100;
    base.task.n_train = 1000;
    base.task.n_test = 10000;
    base.arch.hidden = {512, 512};
    base.arch.activation = Activation::Tanh;
    for (TrainConfig* t : {&base.stage1, &base.stage2}) {
        t->epochs = 100;
        t->batch_size = 128;
        t->learning_rate = 1e-3;
        t->optimizer = OptimizerKind::Adam;
    }
    base.seeds = seeds_0_to(10);
    base.record_wall_time = false;

    const std::vector<double> alphas{std::numbers::pi / 2.0, 3.0 * std::numbers::pi / 4.0, std::numbers::pi};
    std::vector<ProtocolConfig> grid;
    for (double a : alphas)
        for (MethodKind mk : {MethodKind::Full, MethodKind::Lora, MethodKind::Plate}) {
            ProtocolConfig c = base;
            c.task.alpha = a;
            c.method.kind = mk;
            c.method.r = mk == MethodKind::Lora ? 8 : 50;
            c.method.tau = 0.6;
            grid.push_back(c);
        }
    const SweepOutput out = sweep(grid, 0);
    std::map<std::pair<std::size_t, std::string>, std::vector<const RunResult*>> by;
    for (const auto& r : out.runs) {
        if (r.failed) return verdict(false, "run failed: " + r.error);
        by[{r.grid_index / 3, r.method}].push_back(&r);
    }
    bool ok = true;
    for (std::size_t ai = 0; ai < alphas.size(); ++ai) {
        auto mf = [&](const std::string& m) {
            std::vector<double> v;
            for (auto* r : by[{ai, m}]) v.push_back(r->forgetting);
            return mean(v);
        };
        auto ml = [&](const std::string& m) {
            std::vector<double> v;
            for (auto* r : by[{ai, m}]) v.push_back(r->loss2);
            return mean(v);
        };
        const double f_full = mf("full"), f_lora = mf("lora"), f_plate = mf("plate");
        const double l_lora = ml("lora"), l_plate = ml("plate");
        const bool here = f_plate <= 0.5 * std::min(f_full, f_lora) && l_plate <= 2.0 * l_lora;
        ok = ok && here;
        note("alpha " + fmt(alphas[ai], 4) + ": forgetting full " + fmt(f_full) + ", lora " + fmt(f_lora) +
             ", plate " + fmt(f_plate) + "; task-2 loss full " + fmt(ml("full")) + ", lora " + fmt(l_lora) +
             ", plate " + fmt(l_plate) + (here ? "" : "  [violated]"));
    }
    return verdict(ok, "PLATE forgetting <= 0.5x min(full, LoRA) and task-2 loss <= 2x LoRA at the 3 largest alphas, "
                       "10 seeds");
}

// ---- 7: knob monotonicity ---------------------------------------------------

Verdict criterion_7() {
    ProtocolConfig base;
    base.name = "moons-knobs";
    base.task.kind = TaskKind::TwoMoons;
    base.task.n_train = 1000;
    base.task.n_test = 2000;
    base.arch.hidden = {64, 64, 64};
    base.arch.activation = Activation::Relu;
    base.stage1 = train_cfg(60, 64, 5e-3, LossKind::SoftmaxCrossEntropy, 0);
    base.stage2 = train_cfg(40, 64, 5e-3, LossKind::SoftmaxCrossEntropy, 0);
    base.method.kind = MethodKind::Plate;
    base.seeds = seeds_0_to(10);
    base.record_wall_time = false;
    const std::vector<std::size_t> rs{2, 8, 32};
    const std::vector<double> taus{0.5, 0.8, 0.95};
    std::vector<ProtocolConfig> grid;
    for (std::size_t r : rs)
        for (double tau : taus) {
            ProtocolConfig c = base;
            c.method.r = r;
            c.method.tau = tau;
            grid.push_back(c);
        }
    const SweepOutput out = sweep(grid, 0);
    std::vector<std::vector<double>> acc2(grid.size()), forget(grid.size());
    for (const auto& r : out.runs) {
        if (r.failed) return verdict(false, "run failed: " + r.error);
        acc2[r.grid_index].push_back(r.acc2);
        forget[r.grid_index].push_back(r.forgetting);
    }
    auto cell = [&](std::size_t ri, std::size_t ti) { return ri * taus.size() + ti; };
    for (std::size_t ri = 0; ri < rs.size(); ++ri) {
        std::string row = "r=" + std::to_string(rs[ri]) + ":";
        for (std::size_t ti = 0; ti < taus.size(); ++ti) {
            const auto c = cell(ri, ti);
            row += "  tau " + fmt(taus[ti], 3) + " acc2 " + fmt(mean(acc2[c]), 3) + "+-" + fmt(sample_std(acc2[c]), 2) +
                   " forget " + fmt(mean(forget[c]), 3) + "+-" + fmt(sample_std(forget[c]), 2);
        }
        note(row);
    }
    int violations = 0;
    for (std::size_t ti = 0; ti < taus.size(); ++ti)
        for (std::size_t ri = 0; ri + 1 < rs.size(); ++ri) {
            const auto a = cell(ri, ti), b = cell(ri + 1, ti);
            const double tol = std::max(sample_std(acc2[a]), sample_std(acc2[b]));
            if (mean(acc2[b]) < mean(acc2[a]) - tol) {
                ++violations;
                note("acc2 decreases from r=" + std::to_string(rs[ri]) + " to r=" + std::to_string(rs[ri + 1]) +
                     " at tau " + fmt(taus[ti], 3));
            }
        }
    for (std::size_t ri = 0; ri < rs.size(); ++ri)
        for (std::size_t ti = 0; ti + 1 < taus.size(); ++ti) {
            const auto a = cell(ri, ti), b = cell(ri, ti + 1);
            const double tol = std::max(sample_std(forget[a]), sample_std(forget[b]));
            if (mean(forget[b]) > mean(forget[a]) + tol) {
                ++violations;
                note("forgetting increases from tau " + fmt(taus[ti], 3) + " to " + fmt(taus[ti + 1], 3) +
                     " at r=" + std::to_string(rs[ri]));
            }
        }
    return verdict(violations == 0, "3x3 r x tau grid, 10 seeds, " + std::to_string(violations) +
                                        " monotonicity violations beyond 1 std");
}

// ---- 8: parameter accounting ------------------------------------------------

Verdict criterion_8() {
    int bad = 0;
    std::size_t plate_layers = 0, lora_layers = 0;
    for (std::uint64_t c = 0; c < 20; ++c) {
        SeededRng rng(derive_seed(800 + c, "accounting"));
        std::vector<std::size_t> dims{3 + rng.below(10)};
        const std::size_t depth = 1 + rng.below(3);
        for (std::size_t l = 0; l < depth; ++l) dims.push_back(4 + rng.below(20));
        Mlp m = make_mlp(dims, Activation::Tanh, rng.next_u64());
        add_head(m, "h", 3, rng.next_u64());
        LayerAdapters ad;
        std::vector<std::size_t> formula;
        for (const auto& layer : m.layers) {
            const std::size_t d_out = layer.weight.rows(), d_in = layer.weight.cols();
            switch (rng.below(4)) {
            case 0:
                ad.push_back(FullFineTune{});
                formula.push_back(d_out * d_in);
                break;
            case 1:
                ad.push_back(Frozen{});
                formula.push_back(0);
                break;
            case 2: {
                LoraAdapter la = lora_init(d_out, d_in, 1 + rng.below(4), 0.5, rng.next_u64());
                la.b = gaussian_matrix(la.b.rows(), la.b.cols(), rng);
                formula.push_back(la.r() * (d_in + d_out));
                ad.push_back(la);
                ++lora_layers;
                break;
            }
            default: {
                PlateAdapter p = plate_init(layer.weight, 1 + rng.below(d_out - 1), 0.3 + 0.6 * rng.uniform(), 0,
                                            0.5, rng.next_u64());
                formula.push_back(p.selector.r() * p.basis.k);
                ad.push_back(p);
                ++plate_layers;
            }
            }
        }
        Dataset ds;
        ds.inputs = gaussian_matrix(16, dims[0], rng);
        std::vector<int> y(16);
        for (int& v : y) v = static_cast<int>(rng.below(3));
        ds.targets = y;
        ds.num_classes = 3;
        ForwardCache cache;
        const Matrix out = forward(m, ad, "h", ds.inputs, &cache);
        const auto grads =
            backward(m, ad, "h", cache, loss_and_grad(out, ds.targets, LossKind::SoftmaxCrossEntropy).grad);
        const auto slots = trainable_slots(m, ad, "h");
        std::size_t all_nonzero = 0, weight_nonzero = 0;
        for (std::size_t s = 0; s < slots.size(); ++s) {
            std::size_t nz = 0;
            for (double g : grads[s].values()) nz += g != 0.0;
            all_nonzero += nz;
            const bool backbone_weight = slots[s].name.rfind("head.", 0) != 0 &&
                                         slots[s].name.find(".bias") == std::string::npos;
            if (backbone_weight) weight_nonzero += nz;
        }
        std::size_t formula_total = 0;
        bool per_layer = true;
        for (std::size_t l = 0; l < ad.size(); ++l) {
            formula_total += formula[l];
            per_layer = per_layer && trainable_param_count(ad[l], m.layers[l].weight.rows(),
                                                           m.layers[l].weight.cols()) == formula[l];
        }
        const bool ok = per_layer && weight_nonzero == backbone_trainable_count(m, ad) &&
                        weight_nonzero == formula_total && all_nonzero == model_trainable_count(m, ad, "h");
        if (!ok) {
            ++bad;
            note("config " + std::to_string(c) + ": enumerated " + std::to_string(weight_nonzero) + "/" +
                 std::to_string(all_nonzero) + ", counted " + std::to_string(backbone_trainable_count(m, ad)) + "/" +
                 std::to_string(model_trainable_count(m, ad, "h")) + ", formula " + std::to_string(formula_total));
        }
    }
    return verdict(bad == 0, "20 random configurations (" + std::to_string(plate_layers) + " PLATE, " +
                                 std::to_string(lora_layers) + " LoRA layers), " + std::to_string(bad) + " mismatches");
}

// ---- 9: MNIST retention -----------------------------------------------------

fs::path mnist_dir() {
    if (const char* env = std::getenv("PLATE_MNIST_DIR"); env && *env) return env;
    return fs::path(PLATE_SOURCE_DIR) / "data" / "mnist";
}

bool has_mnist(const fs::path& dir) {
    for (const char* f : {"train-images-idx3-ubyte", "train-labels-idx1-ubyte", "t10k-images-idx3-ubyte",
                          "t10k-labels-idx1-ubyte"})
        if (!fs::exists(dir / f)) return false;
    return true;
}

Verdict criterion_9() {
    const fs::path dir = mnist_dir();
    if (!has_mnist(dir))
        return {Status::Skip, "MNIST IDX files not found in " + dir.string() + " (set PLATE_MNIST_DIR)"};
    ProtocolConfig base;
    base.name = "mnist";
    base.task.kind = TaskKind::Mnist;
    base.task.mnist_dir = dir.string();
    base.arch.hidden = {256, 256, 256};
    base.arch.activation = Activation::Relu;
    for (TrainConfig* t : {&base.stage1, &base.stage2}) {
        t->epochs = 10;
        t->batch_size = 128;
        t->learning_rate = 1e-3;
    }
    base.seeds = seeds_0_to(3);
    base.record_wall_time = false;

    // PLATE rank giving ~10% of the backbone weights, LoRA rank at the same budget.
    Mlp probe = make_mlp({784, 256, 256, 256}, Activation::Relu, 0);
    std::size_t full_count = 0, lora_per_rank = 0;
    for (const auto& l : probe.layers) {
        full_count += l.weight.size();
        lora_per_rank += l.weight.rows() + l.weight.cols();
    }
    MethodSpec pm;
    pm.kind = MethodKind::Plate;
    pm.tau = 0.8;
    std::size_t best_r = 1;
    double best_gap = 1e300;
    std::size_t plate_count = 0;
    for (std::size_t r : {32, 64, 96, 128, 160, 192, 224, 256}) {
        pm.r = r;
        const std::size_t count = backbone_trainable_count(probe, build_adapters(probe, pm, 0));
        const double gap = std::abs(static_cast<double>(count) / static_cast<double>(full_count) - 0.1);
        if (gap < best_gap) {
            best_gap = gap;
            best_r = r;
            plate_count = count;
        }
    }
    const std::size_t lora_r = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::lround(static_cast<double>(plate_count) / static_cast<double>(lora_per_rank))));
    ProtocolConfig plate_cfg = base, lora_cfg = base;
    plate_cfg.method = pm;
    plate_cfg.method.r = best_r;
    lora_cfg.method.kind = MethodKind::Lora;
    lora_cfg.method.r = lora_r;
    const SweepOutput out = sweep({plate_cfg, lora_cfg}, 0);
    std::vector<double> acc2, fp, fl;
    for (const auto& r : out.runs) {
        if (r.failed) return verdict(false, "run failed: " + r.error);
        if (r.grid_index == 0) {
            acc2.push_back(r.acc2);
            fp.push_back(r.forgetting);
        } else {
            fl.push_back(r.forgetting);
        }
    }
    note("PLATE r=" + std::to_string(best_r) + " (" + fmt(100.0 * static_cast<double>(plate_count) /
                                                               static_cast<double>(full_count), 3) +
         "% of backbone weights), LoRA r=" + std::to_string(lora_r));
    const bool ok = mean(acc2) >= 0.97 && mean(fp) <= 0.05 && mean(fp) < mean(fl);
    return verdict(ok, "PLATE acc2 " + fmt(mean(acc2)) + ", forgetting " + fmt(mean(fp)) + "; LoRA forgetting " +
                           fmt(mean(fl)));
}

// ---- 10: determinism --------------------------------------------------------

std::map<std::string, std::string> snapshot(const fs::path& root) {
    std::map<std::string, std::string> files;
    for (const auto& e : fs::recursive_directory_iterator(root)) {
        if (!e.is_regular_file()) continue;
        std::ifstream in(e.path(), std::ios::binary);
        std::ostringstream ss;
        ss << in.rdbuf();
        files[fs::relative(e.path(), root).generic_string()] = ss.str();
    }
    return files;
}

Verdict criterion_10() {
    const fs::path scratch = fs::temp_directory_path() / ("plate_acceptance_10_" + std::to_string(::getpid()));
    fs::remove_all(scratch);
    ProtocolConfig base;
    base.name = "determinism";
    base.task.n_train = 300;
    base.task.n_test = 300;
    base.arch.hidden = {32, 32};
    base.stage1 = train_cfg(15, 32, 5e-3, LossKind::SoftmaxCrossEntropy, 0);
    base.stage2 = train_cfg(10, 32, 5e-3, LossKind::SoftmaxCrossEntropy, 0);
    base.seeds = {0, 1, 2};
    base.metrics.epsilon = true;
    base.metrics.lambda = true;
    base.metrics.samples = 128;
    base.record_wall_time = false;
    std::vector<ProtocolConfig> grid;
    for (MethodKind mk : {MethodKind::Plate, MethodKind::Lora, MethodKind::Full}) {
        ProtocolConfig c = base;
        c.method.kind = mk;
        c.method.r = 4;
        grid.push_back(c);
    }
    std::vector<std::map<std::string, std::string>> snaps;
    for (const char* threads : {"1", "3", "1"}) {
        // Same path every pass: run.json records the checkpoint directory.
        const fs::path dir = scratch / "out";
        fs::remove_all(dir);
        for (auto& c : grid) c.checkpoint_dir = dir / "runs";
        ::setenv("PLATE_THREADS", threads, 1);
        write_results(sweep(grid, 0), dir);
        snaps.push_back(snapshot(dir));
    }
    ::unsetenv("PLATE_THREADS");
    fs::remove_all(scratch);
    const bool same = snaps[0] == snaps[1] && snaps[0] == snaps[2];
    for (std::size_t i = 1; i < snaps.size(); ++i)
        for (const auto& [name, bytes] : snaps[0]) {
            const auto it = snaps[i].find(name);
            if (it == snaps[i].end() || it->second != bytes) note("run " + std::to_string(i) + " differs: " + name);
        }
    std::size_t checkpoints = 0;
    for (const auto& [name, _] : snaps[0]) checkpoints += name.rfind("runs/", 0) == 0;
    return verdict(same && snaps[0].count("results.csv") == 1 && checkpoints > 0,
                   std::to_string(snaps[0].size()) + " files (" + std::to_string(checkpoints) +
                       " checkpoint files) compared across PLATE_THREADS=1, 3, 1: " +
                       (same ? "bitwise identical" : "differ"));
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"acceptance criteria"};
    int only = 0;
    app.add_option("--criterion", only, "run a single criterion (1-10)")->check(CLI::Range(1, 10));
    CLI11_PARSE(app, argc, argv);

    const std::vector<std::function<Verdict()>> all{criterion_1, criterion_2, criterion_3, criterion_4,
                                                    criterion_5, criterion_6, criterion_7, criterion_8,
                                                    criterion_9, criterion_10};
    bool failed = false;
    for (int c = 1; c <= 10; ++c) {
        if (only != 0 && c != only) continue;
        const auto t0 = std::chrono::steady_clock::now();
        Verdict v;
        try {
            v = all[static_cast<std::size_t>(c - 1)]();
        } catch (const std::exception& e) {
            v = {Status::Fail, std::string("exception: ") + e.what()};
        }
        const double secs = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        const char* tag = v.status == Status::Pass ? "PASS" : v.status == Status::Skip ? "SKIP" : "FAIL";
        std::cout << tag << " criterion " << c << ": " << v.detail << " [" << fmt(secs, 3) << " s]\n" << std::flush;
        failed = failed || v.status == Status::Fail;
    }
    return failed ? 1 : 0;
}
