#include <algorithm>
#include <cmath>
#include <numeric>
#include <string>

#include "plate/model.hpp"
#include "plate/numerics/rng.hpp"

namespace plate {

namespace {

constexpr double kBeta1 = 0.9;
constexpr double kBeta2 = 0.999;
constexpr double kAdamEps = 1e-8;
constexpr std::size_t kEvalChunk = 4096;

}  // namespace

AdamState make_adam_state(const std::vector<ParamSlot>& slots) {
    AdamState s;
    for (const auto& slot : slots) {
        s.m.emplace_back(slot.value->rows(), slot.value->cols());
        s.v.emplace_back(slot.value->rows(), slot.value->cols());
    }
    return s;
}

void optimizer_step(AdamState& state, std::vector<ParamSlot>& slots, const std::vector<Matrix>& grads,
                    const TrainConfig& cfg) {
    PLATE_REQUIRE(state.m.size() == slots.size() && grads.size() == slots.size(),
                  "optimizer_step: state, slots and gradients disagree in length");
    ++state.step;
    const double t = static_cast<double>(state.step);
    const double c1 = 1.0 - std::pow(kBeta1, t);
    const double c2 = 1.0 - std::pow(kBeta2, t);
    const double lr = cfg.learning_rate;
    const bool decay = cfg.optimizer == OptimizerKind::AdamW && cfg.weight_decay != 0.0;
    for (std::size_t s = 0; s < slots.size(); ++s) {
        auto p = slots[s].value->values();
        auto g = grads[s].values();
        auto m = state.m[s].values();
        auto v = state.v[s].values();
        PLATE_REQUIRE(p.size() == g.size() && p.size() == m.size(), "optimizer_step: shape mismatch in " + slots[s].name);
        for (std::size_t i = 0; i < p.size(); ++i) {
            m[i] = kBeta1 * m[i] + (1.0 - kBeta1) * g[i];
            v[i] = kBeta2 * v[i] + (1.0 - kBeta2) * g[i] * g[i];
            const double mhat = m[i] / c1;
            const double vhat = v[i] / c2;
            if (decay) p[i] -= lr * cfg.weight_decay * p[i];
            p[i] -= lr * mhat / (std::sqrt(vhat) + kAdamEps);
        }
    }
}

TrainResult train(Mlp& model, LayerAdapters& adapters, const Dataset& data, const std::string& head,
                  const TrainConfig& cfg) {
    PLATE_REQUIRE(data.size() >= 1, "train: empty dataset");
    PLATE_REQUIRE(cfg.batch_size >= 1, "train: batch_size must be positive");
    PLATE_REQUIRE(cfg.learning_rate > 0.0, "train: learning_rate must be positive");
    PLATE_REQUIRE(cfg.weight_decay >= 0.0, "train: weight_decay must be non-negative");
    TrainResult result;
    if (cfg.epochs == 0) return result;

    auto slots = trainable_slots(model, adapters, head);
    AdamState state = make_adam_state(slots);
    SeededRng rng(derive_seed(cfg.seed, "shuffle"));
    const std::size_t n = data.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});

    for (std::size_t epoch = 0; epoch < cfg.epochs; ++epoch) {
        Mlp model_snapshot = model;
        LayerAdapters adapter_snapshot = adapters;
        for (std::size_t i = n; i-- > 1;) std::swap(order[i], order[rng.below(i + 1)]);
        double total = 0.0;
        for (std::size_t start = 0; start < n; start += cfg.batch_size) {
            const std::size_t stop = std::min(n, start + cfg.batch_size);
            const std::vector<std::size_t> idx(order.begin() + static_cast<std::ptrdiff_t>(start),
                                               order.begin() + static_cast<std::ptrdiff_t>(stop));
            const Dataset batch = subset(data, idx);
            ForwardCache cache;
            LossResult lr;
            try {
                const Matrix out = forward(model, adapters, head, batch.inputs, &cache);
                lr = loss_and_grad(out, batch.targets, cfg.loss);
            } catch (const NumericalError& e) {
                throw TrainingError(std::string("train: diverged in epoch ") + std::to_string(epoch) + ": " + e.what(),
                                    std::move(model_snapshot), std::move(adapter_snapshot), epoch);
            }
            if (!std::isfinite(lr.loss))
                throw TrainingError("train: loss became non-finite in epoch " + std::to_string(epoch),
                                    std::move(model_snapshot), std::move(adapter_snapshot), epoch);
            total += lr.loss * static_cast<double>(stop - start);
            const auto grads = backward(model, adapters, head, cache, lr.grad);
            optimizer_step(state, slots, grads, cfg);
        }
        result.epoch_loss.push_back(total / static_cast<double>(n));
    }
    return result;
}

Evaluation evaluate(const Mlp& model, const LayerAdapters& adapters, const std::string& head, const Dataset& data,
                    LossKind loss) {
    PLATE_REQUIRE(data.size() >= 1, "evaluate: empty dataset");
    const std::size_t n = data.size();
    Evaluation ev;
    std::size_t correct = 0;
    for (std::size_t start = 0; start < n; start += kEvalChunk) {
        const std::size_t stop = std::min(n, start + kEvalChunk);
        std::vector<std::size_t> idx(stop - start);
        std::iota(idx.begin(), idx.end(), start);
        const Dataset chunk = subset(data, idx);
        const Matrix out = forward(model, adapters, head, chunk.inputs);
        ev.loss += loss_value(out, chunk.targets, loss) * static_cast<double>(stop - start);
        if (chunk.is_classification()) {
            const auto& y = std::get<std::vector<int>>(chunk.targets);
            for (std::size_t i = 0; i < out.rows(); ++i) {
                auto row = out.row(i);
                const auto best = static_cast<int>(std::max_element(row.begin(), row.end()) - row.begin());
                if (best == y[i]) ++correct;
            }
        }
    }
    ev.loss /= static_cast<double>(n);
    ev.accuracy = data.is_classification() ? static_cast<double>(correct) / static_cast<double>(n) : 0.0;
    return ev;
}

}  // namespace plate
