#include "plate/model.hpp"

#include <algorithm>
#include <cmath>
#include <string>

#include "plate/numerics/linalg.hpp"
#include "plate/numerics/rng.hpp"

namespace plate {

namespace {

const AdapterKind& adapter_at(const LayerAdapters& adapters, std::size_t layer) {
    static const AdapterKind full = FullFineTune{};
    if (adapters.empty()) return full;
    return adapters[layer];
}

void check_adapters(const Mlp& model, const LayerAdapters& adapters) {
    PLATE_REQUIRE(adapters.empty() || adapters.size() == model.layers.size(),
                  "adapter list must be empty or have one entry per layer");
}

void add_bias(Matrix& z, const Matrix& bias) {
    for (std::size_t i = 0; i < z.rows(); ++i) {
        auto row = z.row(i);
        for (std::size_t j = 0; j < z.cols(); ++j) row[j] += bias.values()[j];
    }
}

Matrix column_sums(const Matrix& m) {
    Matrix out(1, m.cols());
    for (std::size_t i = 0; i < m.rows(); ++i) {
        auto row = m.row(i);
        for (std::size_t j = 0; j < m.cols(); ++j) out.values()[j] += row[j];
    }
    return out;
}

Matrix activate(const Matrix& z, Activation act) {
    Matrix h = z;
    switch (act) {
    case Activation::Relu:
        for (double& v : h.values()) v = v > 0.0 ? v : 0.0;
        break;
    case Activation::Tanh:
        for (double& v : h.values()) v = std::tanh(v);
        break;
    case Activation::Identity:
        break;
    }
    return h;
}

// grad <- grad * sigma'(z), elementwise.
void scale_by_derivative(Matrix& grad, const Matrix& z, Activation act) {
    switch (act) {
    case Activation::Relu:
        for (std::size_t i = 0; i < grad.size(); ++i)
            if (!(z.values()[i] > 0.0)) grad.values()[i] = 0.0;
        break;
    case Activation::Tanh:
        for (std::size_t i = 0; i < grad.size(); ++i) {
            const double t = std::tanh(z.values()[i]);
            grad.values()[i] *= 1.0 - t * t;
        }
        break;
    case Activation::Identity:
        break;
    }
}

Matrix view_segment(std::span<const double> flat, const Segment& s) {
    return Matrix(s.rows, s.cols, std::vector<double>(flat.begin() + static_cast<std::ptrdiff_t>(s.offset),
                                                      flat.begin() + static_cast<std::ptrdiff_t>(s.offset + s.size())));
}

void write_segment(std::vector<double>& flat, const Segment& s, const Matrix& m) {
    std::copy(m.values().begin(), m.values().end(), flat.begin() + static_cast<std::ptrdiff_t>(s.offset));
}

const std::vector<int>& labels_of(const Targets& t) { return std::get<std::vector<int>>(t); }

}  // namespace

std::size_t Mlp::input_dim() const {
    PLATE_REQUIRE(!layers.empty(), "model has no layers");
    return layers.front().weight.cols();
}

std::size_t Mlp::feature_dim() const {
    PLATE_REQUIRE(!layers.empty(), "model has no layers");
    return layers.back().weight.rows();
}

const Head& Mlp::head(const std::string& name) const {
    auto it = heads.find(name);
    PLATE_REQUIRE(it != heads.end(), "unknown head '" + name + "'");
    return it->second;
}

Head& Mlp::head(const std::string& name) {
    auto it = heads.find(name);
    PLATE_REQUIRE(it != heads.end(), "unknown head '" + name + "'");
    return it->second;
}

Mlp make_mlp(const std::vector<std::size_t>& dims, Activation act, std::uint64_t seed) {
    PLATE_REQUIRE(dims.size() >= 2, "make_mlp: need at least input and one layer width");
    SeededRng root(derive_seed(seed, "init"));
    Mlp m;
    for (std::size_t l = 0; l + 1 < dims.size(); ++l) {
        PLATE_REQUIRE(dims[l] >= 1 && dims[l + 1] >= 1, "make_mlp: zero width");
        SeededRng rng = root.split("layer" + std::to_string(l));
        Layer layer;
        layer.weight = gaussian_matrix(dims[l + 1], dims[l], rng);
        const double s = 1.0 / std::sqrt(static_cast<double>(dims[l]));
        for (double& v : layer.weight.values()) v *= s;
        layer.bias = Matrix(1, dims[l + 1]);
        layer.activation = act;
        m.layers.push_back(std::move(layer));
    }
    return m;
}

void add_head(Mlp& model, const std::string& name, std::size_t out_dim, std::uint64_t seed) {
    PLATE_REQUIRE(out_dim >= 1, "add_head: output width must be positive");
    PLATE_REQUIRE(!name.empty(), "add_head: empty head name");
    const std::size_t fan_in = model.feature_dim();
    SeededRng rng(derive_seed(seed, "head." + name));
    Head h;
    h.weight = gaussian_matrix(out_dim, fan_in, rng);
    const double s = 1.0 / std::sqrt(static_cast<double>(fan_in));
    for (double& v : h.weight.values()) v *= s;
    h.bias = Matrix(1, out_dim);
    model.heads[name] = std::move(h);
}

Activation parse_activation(const std::string& s) {
    if (s == "relu") return Activation::Relu;
    if (s == "tanh") return Activation::Tanh;
    if (s == "identity") return Activation::Identity;
    throw ContractError("unknown activation '" + s + "'");
}

std::string to_string(Activation a) {
    switch (a) {
    case Activation::Relu: return "relu";
    case Activation::Tanh: return "tanh";
    case Activation::Identity: return "identity";
    }
    return "?";
}

LossKind parse_loss(const std::string& s) {
    if (s == "mse") return LossKind::Mse;
    if (s == "softmax_cross_entropy" || s == "ce") return LossKind::SoftmaxCrossEntropy;
    throw ContractError("unknown loss '" + s + "'");
}

std::string to_string(LossKind l) {
    return l == LossKind::Mse ? "mse" : "softmax_cross_entropy";
}

Matrix forward(const Mlp& model, const LayerAdapters& adapters, const std::string& head, const Matrix& x,
               ForwardCache* cache) {
    check_adapters(model, adapters);
    PLATE_REQUIRE(x.cols() == model.input_dim(), "forward: input width " + std::to_string(x.cols()) +
                                                     " does not match model input " +
                                                     std::to_string(model.input_dim()));
    const Head& h = model.head(head);
    if (cache) {
        cache->inputs.clear();
        cache->pre.clear();
    }
    Matrix cur = x;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        Matrix z = matmul_nt(cur, layer.weight);
        add_bias(z, layer.bias);
        const AdapterKind& ad = adapter_at(adapters, l);
        if (std::holds_alternative<LoraAdapter>(ad) || std::holds_alternative<PlateAdapter>(ad))
            axpy(1.0, adapter_forward(ad, cur, layer.weight.rows()), z);
        Matrix next = activate(z, layer.activation);
        if (!next.all_finite())
            throw NumericalError("forward: non-finite activation in layer " + std::to_string(l));
        if (cache) {
            cache->inputs.push_back(std::move(cur));
            cache->pre.push_back(std::move(z));
        }
        cur = std::move(next);
    }
    Matrix out = matmul_nt(cur, h.weight);
    add_bias(out, h.bias);
    if (!out.all_finite()) throw NumericalError("forward: non-finite output in head '" + head + "'");
    if (cache) cache->features = std::move(cur);
    return out;
}

LossResult loss_and_grad(const Matrix& outputs, const Targets& targets, LossKind loss) {
    const std::size_t n = outputs.rows();
    const std::size_t k = outputs.cols();
    PLATE_REQUIRE(n >= 1, "loss: empty batch");
    LossResult res;
    res.grad = Matrix(n, k);
    if (loss == LossKind::Mse) {
        PLATE_REQUIRE(std::holds_alternative<Matrix>(targets), "loss: mse needs real-valued targets");
        const Matrix& y = std::get<Matrix>(targets);
        PLATE_REQUIRE(y.rows() == n && y.cols() == k, "loss: target shape does not match outputs");
        const double denom = static_cast<double>(n * k);
        double acc = 0.0;
        for (std::size_t i = 0; i < outputs.size(); ++i) {
            const double r = outputs.values()[i] - y.values()[i];
            acc += r * r;
            res.grad.values()[i] = 2.0 * r / denom;
        }
        res.loss = acc / denom;
        return res;
    }
    PLATE_REQUIRE(std::holds_alternative<std::vector<int>>(targets), "loss: cross-entropy needs class labels");
    const auto& y = labels_of(targets);
    PLATE_REQUIRE(y.size() == n, "loss: label count does not match outputs");
    double acc = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        PLATE_REQUIRE(y[i] >= 0 && static_cast<std::size_t>(y[i]) < k,
                      "loss: label " + std::to_string(y[i]) + " outside [0, " + std::to_string(k) + ")");
        auto row = outputs.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        double sum = 0.0;
        for (double v : row) sum += std::exp(v - mx);
        const double lse = mx + std::log(sum);
        acc += lse - row[static_cast<std::size_t>(y[i])];
        auto g = res.grad.row(i);
        for (std::size_t j = 0; j < k; ++j) g[j] = std::exp(row[j] - lse) / static_cast<double>(n);
        g[static_cast<std::size_t>(y[i])] -= 1.0 / static_cast<double>(n);
    }
    res.loss = acc / static_cast<double>(n);
    return res;
}

double loss_value(const Matrix& outputs, const Targets& targets, LossKind loss) {
    return loss_and_grad(outputs, targets, loss).loss;
}

Matrix loss_output_hvp(const Matrix& outputs, LossKind loss, const Matrix& v) {
    PLATE_REQUIRE(outputs.rows() == v.rows() && outputs.cols() == v.cols(), "loss_output_hvp: shape mismatch");
    const std::size_t n = outputs.rows();
    const std::size_t k = outputs.cols();
    if (loss == LossKind::Mse) return (2.0 / static_cast<double>(n * k)) * v;
    Matrix out(n, k);
    for (std::size_t i = 0; i < n; ++i) {
        auto row = outputs.row(i);
        const double mx = *std::max_element(row.begin(), row.end());
        std::vector<double> p(k);
        double sum = 0.0;
        for (std::size_t j = 0; j < k; ++j) sum += p[j] = std::exp(row[j] - mx);
        double pv = 0.0;
        for (std::size_t j = 0; j < k; ++j) {
            p[j] /= sum;
            pv += p[j] * v(i, j);
        }
        for (std::size_t j = 0; j < k; ++j) out(i, j) = p[j] * (v(i, j) - pv) / static_cast<double>(n);
    }
    return out;
}

std::vector<ParamSlot> trainable_slots(Mlp& model, LayerAdapters& adapters, const std::string& head) {
    check_adapters(model, adapters);
    std::vector<ParamSlot> slots;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        Layer& layer = model.layers[l];
        const std::string prefix = "layer" + std::to_string(l) + ".";
        if (adapters.empty()) {
            slots.push_back({prefix + "weight", &layer.weight});
            slots.push_back({prefix + "bias", &layer.bias});
            continue;
        }
        AdapterKind& ad = adapters[l];
        const auto names = adapter_tensor_names(ad);
        const auto ptrs = adapter_trainables(ad, layer.weight);
        for (std::size_t t = 0; t < ptrs.size(); ++t) slots.push_back({prefix + names[t], ptrs[t]});
        if (std::holds_alternative<FullFineTune>(ad)) slots.push_back({prefix + "bias", &layer.bias});
    }
    Head& h = model.head(head);
    slots.push_back({"head." + head + ".weight", &h.weight});
    slots.push_back({"head." + head + ".bias", &h.bias});
    return slots;
}

std::vector<Matrix> backward(const Mlp& model, const LayerAdapters& adapters, const std::string& head,
                             const ForwardCache& cache, const Matrix& output_grad) {
    check_adapters(model, adapters);
    const std::size_t L = model.layers.size();
    PLATE_REQUIRE(cache.inputs.size() == L && cache.pre.size() == L, "backward: cache does not match model");
    const Head& h = model.head(head);
    PLATE_REQUIRE(output_grad.rows() == cache.features.rows() && output_grad.cols() == h.weight.rows(),
                  "backward: output gradient shape mismatch");

    std::vector<std::vector<Matrix>> per_layer(L);
    Matrix head_w = matmul_tn(output_grad, cache.features);
    Matrix head_b = column_sums(output_grad);
    Matrix grad = matmul(output_grad, h.weight);  // d loss / d features
    for (std::size_t li = L; li-- > 0;) {
        const Layer& layer = model.layers[li];
        scale_by_derivative(grad, cache.pre[li], layer.activation);
        const AdapterKind& ad = adapter_at(adapters, li);
        per_layer[li] = adapter_grad(ad, cache.inputs[li], grad);
        if (std::holds_alternative<FullFineTune>(ad)) per_layer[li].push_back(column_sums(grad));
        if (li > 0) {
            Matrix next = matmul(grad, layer.weight);
            if (std::holds_alternative<LoraAdapter>(ad) || std::holds_alternative<PlateAdapter>(ad))
                axpy(1.0, adapter_input_grad(ad, grad, layer.weight.cols()), next);
            grad = std::move(next);
        }
    }
    std::vector<Matrix> out;
    for (auto& g : per_layer)
        for (auto& t : g) out.push_back(std::move(t));
    out.push_back(std::move(head_w));
    out.push_back(std::move(head_b));
    return out;
}

std::size_t model_trainable_count(const Mlp& model, const LayerAdapters& adapters, const std::string& head) {
    check_adapters(model, adapters);
    std::size_t total = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        const AdapterKind& ad = adapter_at(adapters, l);
        total += trainable_param_count(ad, layer.weight.rows(), layer.weight.cols());
        if (std::holds_alternative<FullFineTune>(ad)) total += layer.bias.size();
    }
    const Head& h = model.head(head);
    return total + h.weight.size() + h.bias.size();
}

std::size_t backbone_trainable_count(const Mlp& model, const LayerAdapters& adapters) {
    check_adapters(model, adapters);
    std::size_t total = 0;
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        total += trainable_param_count(adapter_at(adapters, l), model.layers[l].weight.rows(),
                                       model.layers[l].weight.cols());
    return total;
}

Mlp merged(const Mlp& model, const LayerAdapters& adapters) {
    check_adapters(model, adapters);
    Mlp out = model;
    for (std::size_t l = 0; l < model.layers.size(); ++l)
        out.layers[l].weight = effective_weight(model.layers[l].weight, adapter_at(adapters, l));
    return out;
}

const Segment& ParamLayout::find(const std::string& name) const {
    for (const auto& s : segments)
        if (s.name == name) return s;
    throw ContractError("parameter layout has no segment '" + name + "'");
}

ParamLayout param_layout(const Mlp& model) {
    ParamLayout layout;
    auto push = [&](std::string name, const Matrix& m) {
        layout.segments.push_back({std::move(name), layout.total, m.rows(), m.cols()});
        layout.total += m.size();
    };
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        push("layer" + std::to_string(l) + ".weight", model.layers[l].weight);
        push("layer" + std::to_string(l) + ".bias", model.layers[l].bias);
    }
    for (const auto& [name, h] : model.heads) {
        push("head." + name + ".weight", h.weight);
        push("head." + name + ".bias", h.bias);
    }
    return layout;
}

ParamVector params_to_vector(const Mlp& model) {
    ParamVector pv;
    pv.layout = param_layout(model);
    pv.values.resize(pv.layout.total);
    std::size_t s = 0;
    for (const auto& layer : model.layers) {
        write_segment(pv.values, pv.layout.segments[s++], layer.weight);
        write_segment(pv.values, pv.layout.segments[s++], layer.bias);
    }
    for (const auto& [name, h] : model.heads) {
        write_segment(pv.values, pv.layout.segments[s++], h.weight);
        write_segment(pv.values, pv.layout.segments[s++], h.bias);
    }
    return pv;
}

void vector_to_params(std::span<const double> values, const ParamLayout& layout, Mlp& model) {
    PLATE_REQUIRE(layout == param_layout(model), "vector_to_params: layout does not match the model");
    PLATE_REQUIRE(values.size() == layout.total, "vector_to_params: vector length does not match layout");
    std::size_t s = 0;
    for (auto& layer : model.layers) {
        layer.weight = view_segment(values, layout.segments[s++]);
        layer.bias = view_segment(values, layout.segments[s++]);
    }
    for (auto& [name, h] : model.heads) {
        h.weight = view_segment(values, layout.segments[s++]);
        h.bias = view_segment(values, layout.segments[s++]);
    }
}

Mlp with_params(const Mlp& model, std::span<const double> values) {
    Mlp out = model;
    vector_to_params(values, param_layout(model), out);
    return out;
}

Matrix jvp(const Mlp& model, const std::string& head, const Matrix& x, std::span<const double> tangent) {
    const ParamLayout layout = param_layout(model);
    PLATE_REQUIRE(tangent.size() == layout.total, "jvp: tangent length does not match layout");
    PLATE_REQUIRE(x.cols() == model.input_dim(), "jvp: input width mismatch");
    Matrix cur = x;
    Matrix dcur(x.rows(), x.cols());
    for (std::size_t l = 0; l < model.layers.size(); ++l) {
        const Layer& layer = model.layers[l];
        const Matrix dw = view_segment(tangent, layout.segments[2 * l]);
        const Matrix db = view_segment(tangent, layout.segments[2 * l + 1]);
        Matrix z = matmul_nt(cur, layer.weight);
        add_bias(z, layer.bias);
        Matrix dz = matmul_nt(cur, dw);
        if (l > 0) axpy(1.0, matmul_nt(dcur, layer.weight), dz);
        add_bias(dz, db);
        scale_by_derivative(dz, z, layer.activation);
        cur = activate(z, layer.activation);
        dcur = std::move(dz);
    }
    const Head& h = model.head(head);
    const Matrix dw = view_segment(tangent, layout.find("head." + head + ".weight"));
    const Matrix db = view_segment(tangent, layout.find("head." + head + ".bias"));
    Matrix out = matmul_nt(dcur, h.weight);
    axpy(1.0, matmul_nt(cur, dw), out);
    add_bias(out, db);
    return out;
}

std::vector<double> vjp(const Mlp& model, const std::string& head, const Matrix& x, const Matrix& upstream) {
    ForwardCache cache;
    forward(model, {}, head, x, &cache);
    const auto grads = backward(model, {}, head, cache, upstream);
    const ParamLayout layout = param_layout(model);
    std::vector<double> flat(layout.total, 0.0);
    const std::size_t L = model.layers.size();
    for (std::size_t i = 0; i < 2 * L; ++i) write_segment(flat, layout.segments[i], grads[i]);
    write_segment(flat, layout.find("head." + head + ".weight"), grads[2 * L]);
    write_segment(flat, layout.find("head." + head + ".bias"), grads[2 * L + 1]);
    return flat;
}

double loss_gradient(const Mlp& model, const std::string& head, const Dataset& data, LossKind loss,
                     std::vector<double>& grad) {
    PLATE_REQUIRE(data.size() >= 1, "loss_gradient: empty dataset");
    ForwardCache cache;
    const Matrix out = forward(model, {}, head, data.inputs, &cache);
    const LossResult lr = loss_and_grad(out, data.targets, loss);
    const auto grads = backward(model, {}, head, cache, lr.grad);
    const ParamLayout layout = param_layout(model);
    grad.assign(layout.total, 0.0);
    const std::size_t L = model.layers.size();
    for (std::size_t i = 0; i < 2 * L; ++i) write_segment(grad, layout.segments[i], grads[i]);
    write_segment(grad, layout.find("head." + head + ".weight"), grads[2 * L]);
    write_segment(grad, layout.find("head." + head + ".bias"), grads[2 * L + 1]);
    return lr.loss;
}

}  // namespace plate
