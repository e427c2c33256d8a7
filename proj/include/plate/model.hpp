#pragma once

#include <cstddef>
#include <cstdint>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "plate/adapters.hpp"
#include "plate/dataset.hpp"
#include "plate/error.hpp"
#include "plate/numerics/matrix.hpp"

namespace plate {

enum class Activation { Relu, Tanh, Identity };

struct Layer {
    Matrix weight;  // d_out x d_in
    Matrix bias;    // 1 x d_out
    Activation activation = Activation::Relu;
};

/// Linear read-out on top of the last layer.
struct Head {
    Matrix weight;  // n_out x d_feat
    Matrix bias;    // 1 x n_out
};

struct Mlp {
    std::vector<Layer> layers;
    std::map<std::string, Head> heads;

    std::size_t input_dim() const;
    std::size_t feature_dim() const;
    const Head& head(const std::string& name) const;
    Head& head(const std::string& name);
};

/// One adapter per layer; an empty list means every layer is FullFineTune.
using LayerAdapters = std::vector<AdapterKind>;

/// Layers with dims[0] -> dims[1] -> ...; weights N(0, 1/fan_in), zero biases.
Mlp make_mlp(const std::vector<std::size_t>& dims, Activation act, std::uint64_t seed);

/// Adds (or replaces) a Gaussian-initialized head, scale 1/sqrt(fan_in).
void add_head(Mlp& model, const std::string& name, std::size_t out_dim, std::uint64_t seed);

Activation parse_activation(const std::string& s);
std::string to_string(Activation a);

struct ForwardCache {
    std::vector<Matrix> inputs;  // input to each layer
    std::vector<Matrix> pre;     // pre-activations
    Matrix features;             // output of the last layer
};

/// Head output for a batch (rows are samples). Throws NumericalError naming
/// the layer if an activation becomes non-finite.
Matrix forward(const Mlp& model, const LayerAdapters& adapters, const std::string& head,
               const Matrix& x, ForwardCache* cache = nullptr);

enum class LossKind { Mse, SoftmaxCrossEntropy };

LossKind parse_loss(const std::string& s);
std::string to_string(LossKind l);

struct LossResult {
    double loss = 0.0;
    Matrix grad;  // d loss / d outputs
};

/// mse: mean over samples and output dims; CE: mean negative log-likelihood.
LossResult loss_and_grad(const Matrix& outputs, const Targets& targets, LossKind loss);
double loss_value(const Matrix& outputs, const Targets& targets, LossKind loss);

/// Second derivative of the per-batch loss with respect to the outputs,
/// applied to `v` (same shape as outputs).
Matrix loss_output_hvp(const Matrix& outputs, LossKind loss, const Matrix& v);

/// Named pointer to a trainable tensor.
struct ParamSlot {
    std::string name;
    Matrix* value;
};

/// Trainable tensors in a fixed order: per layer the adapter tensors (plus
/// the bias under FullFineTune), then the active head.
std::vector<ParamSlot> trainable_slots(Mlp& model, LayerAdapters& adapters, const std::string& head);

/// Gradients aligned with trainable_slots.
std::vector<Matrix> backward(const Mlp& model, const LayerAdapters& adapters, const std::string& head,
                             const ForwardCache& cache, const Matrix& output_grad);

/// Total trainable entries including biases and the active head.
std::size_t model_trainable_count(const Mlp& model, const LayerAdapters& adapters, const std::string& head);

/// Weight-update entries only (sum of trainable_param_count over layers).
std::size_t backbone_trainable_count(const Mlp& model, const LayerAdapters& adapters);

/// Layers with adapters folded into their weights.
Mlp merged(const Mlp& model, const LayerAdapters& adapters);

// ---- flat parameter vectors -------------------------------------------------

struct Segment {
    std::string name;  // layer0.weight, layer0.bias, ..., head.<name>.weight
    std::size_t offset = 0;
    std::size_t rows = 0;
    std::size_t cols = 0;

    std::size_t size() const noexcept { return rows * cols; }
    bool operator==(const Segment&) const = default;
};

struct ParamLayout {
    std::vector<Segment> segments;
    std::size_t total = 0;

    const Segment& find(const std::string& name) const;
    bool operator==(const ParamLayout&) const = default;
};

struct ParamVector {
    std::vector<double> values;
    ParamLayout layout;
};

ParamLayout param_layout(const Mlp& model);
ParamVector params_to_vector(const Mlp& model);
/// Writes `values` into the model; the layout must match the model exactly.
void vector_to_params(std::span<const double> values, const ParamLayout& layout, Mlp& model);
Mlp with_params(const Mlp& model, std::span<const double> values);

/// Output directional derivative J v for a flat parameter tangent (n x out).
Matrix jvp(const Mlp& model, const std::string& head, const Matrix& x, std::span<const double> tangent);

/// J^T u as a flat vector in param_layout order (inactive heads get zeros).
std::vector<double> vjp(const Mlp& model, const std::string& head, const Matrix& x, const Matrix& upstream);

/// Loss and its gradient with respect to every parameter.
double loss_gradient(const Mlp& model, const std::string& head, const Dataset& data, LossKind loss,
                     std::vector<double>& grad);

// ---- training ---------------------------------------------------------------

enum class OptimizerKind { Adam, AdamW };

struct TrainConfig {
    std::size_t epochs = 10;
    std::size_t batch_size = 32;
    double learning_rate = 1e-3;
    OptimizerKind optimizer = OptimizerKind::Adam;
    double weight_decay = 0.0;
    LossKind loss = LossKind::SoftmaxCrossEntropy;
    std::uint64_t seed = 0;
};

struct AdamState {
    std::vector<Matrix> m;
    std::vector<Matrix> v;
    std::size_t step = 0;
};

AdamState make_adam_state(const std::vector<ParamSlot>& slots);

/// One Adam/AdamW update (beta1 0.9, beta2 0.999, eps 1e-8, bias correction,
/// decoupled weight decay for AdamW).
void optimizer_step(AdamState& state, std::vector<ParamSlot>& slots, const std::vector<Matrix>& grads,
                    const TrainConfig& cfg);

struct TrainResult {
    std::vector<double> epoch_loss;  // mean training loss per epoch
};

/// Loss became non-finite; carries the state from the start of that epoch.
class TrainingError : public NumericalError {
public:
    TrainingError(const std::string& what, Mlp model, LayerAdapters adapters, std::size_t epoch)
        : NumericalError(what), model_(std::move(model)), adapters_(std::move(adapters)), epoch_(epoch) {}
    const Mlp& last_model() const noexcept { return model_; }
    const LayerAdapters& last_adapters() const noexcept { return adapters_; }
    std::size_t epoch() const noexcept { return epoch_; }

private:
    Mlp model_;
    LayerAdapters adapters_;
    std::size_t epoch_;
};

/// Mini-batch training of the trainable slots; per-epoch Fisher-Yates
/// shuffling from a split seed, last partial batch kept.
TrainResult train(Mlp& model, LayerAdapters& adapters, const Dataset& data, const std::string& head,
                  const TrainConfig& cfg);

struct Evaluation {
    double loss = 0.0;
    double accuracy = 0.0;  // classification only
};

Evaluation evaluate(const Mlp& model, const LayerAdapters& adapters, const std::string& head,
                    const Dataset& data, LossKind loss);

}  // namespace plate
