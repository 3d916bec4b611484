#include "oris/nn.hpp"

#include <algorithm>
#include <array>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <istream>
#include <ostream>

namespace oris::nn {

namespace {

constexpr std::array<char, 8> kMagic = {'O', 'R', 'I', 'S', 'N', 'E', 'T', '\0'};
constexpr std::uint32_t kFormatVersion = 1;

void apply_activation(Activation act, const Matrix& pre, Matrix& post) {
    switch (act) {
        case Activation::identity:
            post = pre;
            break;
        case Activation::relu:
            post = pre.cwiseMax(0.0);
            break;
        case Activation::tanh:
            post = pre.array().tanh().matrix();
            break;
        case Activation::sigmoid:
            post = pre.unaryExpr([](double x) {
                // Split on sign to avoid exp overflow.
                if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
                const double e = std::exp(x);
                return e / (1.0 + e);
            });
            break;
    }
}

// Multiplies `grad` in place by the activation derivative at (pre, post).
void activation_backward(Activation act, const Matrix& pre, const Matrix& post, Matrix& grad) {
    switch (act) {
        case Activation::identity:
            break;
        case Activation::relu:
            grad = (pre.array() > 0.0).select(grad, 0.0);
            break;
        case Activation::tanh:
            grad.array() *= (1.0 - post.array().square());
            break;
        case Activation::sigmoid:
            grad.array() *= post.array() * (1.0 - post.array());
            break;
    }
}

template <typename T>
void write_le(std::ostream& out, T value) {
    static_assert(std::endian::native == std::endian::little, "big-endian hosts are not supported");
    out.write(reinterpret_cast<const char*>(&value), sizeof(T));
}

template <typename T>
T read_le(std::istream& in) {
    T value{};
    in.read(reinterpret_cast<char*>(&value), sizeof(T));
    if (!in) throw ConfigError("truncated network checkpoint");
    return value;
}

}  // namespace

std::string to_string(Activation act) {
    switch (act) {
        case Activation::identity: return "identity";
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
    }
    return "identity";
}

Activation activation_from_string(const std::string& name) {
    if (name == "identity") return Activation::identity;
    if (name == "relu") return Activation::relu;
    if (name == "tanh") return Activation::tanh;
    if (name == "sigmoid") return Activation::sigmoid;
    throw ConfigError("unknown activation '" + name + "'");
}

double Gradients::squared_norm() const {
    double total = 0.0;
    for (const auto& w : weights) total += w.squaredNorm();
    for (const auto& b : biases) total += b.squaredNorm();
    return total;
}

bool Gradients::all_finite() const {
    return std::all_of(weights.begin(), weights.end(), [](const Matrix& m) { return m.allFinite(); }) &&
           std::all_of(biases.begin(), biases.end(), [](const Vector& v) { return v.allFinite(); });
}

void Gradients::scale(double factor) {
    for (auto& w : weights) w *= factor;
    for (auto& b : biases) b *= factor;
    input *= factor;
}

void Gradients::add(const Gradients& other) {
    if (other.weights.size() != weights.size()) throw ContractError("gradient structures differ");
    for (std::size_t l = 0; l < weights.size(); ++l) {
        weights[l] += other.weights[l];
        biases[l] += other.biases[l];
    }
}

MlpNet::MlpNet(std::vector<int> layer_sizes, Activation hidden, Activation output, std::uint64_t init_seed)
    : layer_sizes_(std::move(layer_sizes)), hidden_(hidden), output_(output), init_seed_(init_seed) {
    if (layer_sizes_.size() < 2) throw ContractError("an MlpNet needs at least an input and an output layer");
    for (int n : layer_sizes_) {
        if (n <= 0) throw ContractError("layer sizes must be positive");
    }
    // He-uniform weights, zero biases.
    Rng rng(mix_seed(init_seed_));
    for (std::size_t l = 0; l + 1 < layer_sizes_.size(); ++l) {
        const int fan_in = layer_sizes_[l];
        const int fan_out = layer_sizes_[l + 1];
        const double limit = std::sqrt(6.0 / fan_in);
        std::uniform_real_distribution<double> dist(-limit, limit);
        Matrix w(fan_out, fan_in);
        for (int c = 0; c < fan_in; ++c) {
            for (int r = 0; r < fan_out; ++r) w(r, c) = dist(rng);
        }
        weights_.push_back(std::move(w));
        biases_.push_back(Vector::Zero(fan_out));
    }
}

void MlpNet::check_input(const Matrix& inputs) const {
    if (weights_.empty()) throw UsageError("network has no layers");
    if (inputs.rows() != layer_sizes_.front()) {
        throw ContractError("input dimension " + std::to_string(inputs.rows()) + " does not match layer size " +
                            std::to_string(layer_sizes_.front()));
    }
}

Matrix MlpNet::forward_batch(const Matrix& inputs) {
    check_input(inputs);
    const std::size_t n = weights_.size();
    activations_.resize(n + 1);
    preacts_.resize(n);
    activations_[0] = inputs;
    for (std::size_t l = 0; l < n; ++l) {
        preacts_[l].noalias() = weights_[l] * activations_[l];
        preacts_[l].colwise() += biases_[l];
        apply_activation(l + 1 == n ? output_ : hidden_, preacts_[l], activations_[l + 1]);
    }
    return activations_.back();
}

Vector MlpNet::forward(const Vector& input) { return forward_batch(input); }

Matrix MlpNet::predict_batch(const Matrix& inputs) const {
    check_input(inputs);
    Matrix current = inputs;
    Matrix pre;
    const std::size_t n = weights_.size();
    for (std::size_t l = 0; l < n; ++l) {
        pre.noalias() = weights_[l] * current;
        pre.colwise() += biases_[l];
        apply_activation(l + 1 == n ? output_ : hidden_, pre, current);
    }
    return current;
}

Vector MlpNet::predict(const Vector& input) const { return predict_batch(input); }

const Matrix& MlpNet::output_preactivation() const {
    if (preacts_.empty()) throw UsageError("no forward pass has been recorded");
    return preacts_.back();
}

Gradients MlpNet::backward(const Matrix& upstream, GradientAt at, bool parameter_gradients) const {
    if (activations_.empty()) throw UsageError("backward called without a recorded forward pass");
    const std::size_t n = weights_.size();
    if (upstream.rows() != layer_sizes_.back() || upstream.cols() != activations_.back().cols()) {
        throw ContractError("upstream gradient shape does not match the recorded output");
    }
    Gradients grads;
    if (parameter_gradients) {
        grads.weights.resize(n);
        grads.biases.resize(n);
    }
    Matrix delta = upstream;
    if (at == GradientAt::output) activation_backward(output_, preacts_[n - 1], activations_[n], delta);
    for (std::size_t l = n; l-- > 0;) {
        if (parameter_gradients) {
            grads.weights[l].noalias() = delta * activations_[l].transpose();
            grads.biases[l] = delta.rowwise().sum();
        }
        Matrix prev;
        prev.noalias() = weights_[l].transpose() * delta;
        if (l > 0) activation_backward(hidden_, preacts_[l - 1], activations_[l], prev);
        delta = std::move(prev);
    }
    grads.input = std::move(delta);
    return grads;
}

Gradients MlpNet::backward(const Vector& upstream) const {
    return backward(Matrix(upstream), GradientAt::output, true);
}

std::size_t MlpNet::parameter_count() const {
    std::size_t count = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) count += weights_[l].size() + biases_[l].size();
    return count;
}

std::vector<double> MlpNet::flat_parameters() const {
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        flat.insert(flat.end(), weights_[l].data(), weights_[l].data() + weights_[l].size());
        flat.insert(flat.end(), biases_[l].data(), biases_[l].data() + biases_[l].size());
    }
    return flat;
}

std::vector<double> MlpNet::flatten(const Gradients& grads) const {
    if (grads.weights.size() != weights_.size()) throw ContractError("gradient structure does not match network");
    std::vector<double> flat;
    flat.reserve(parameter_count());
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        flat.insert(flat.end(), grads.weights[l].data(), grads.weights[l].data() + grads.weights[l].size());
        flat.insert(flat.end(), grads.biases[l].data(), grads.biases[l].data() + grads.biases[l].size());
    }
    return flat;
}

void MlpNet::set_flat_parameters(std::span<const double> flat) {
    if (flat.size() != parameter_count()) throw ContractError("flat parameter vector has the wrong length");
    std::size_t offset = 0;
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        std::copy_n(flat.data() + offset, weights_[l].size(), weights_[l].data());
        offset += weights_[l].size();
        std::copy_n(flat.data() + offset, biases_[l].size(), biases_[l].data());
        offset += biases_[l].size();
    }
}

bool MlpNet::same_architecture(const MlpNet& other) const {
    return layer_sizes_ == other.layer_sizes_ && hidden_ == other.hidden_ && output_ == other.output_;
}

bool MlpNet::parameters_finite() const {
    for (std::size_t l = 0; l < weights_.size(); ++l) {
        if (!weights_[l].allFinite() || !biases_[l].allFinite()) return false;
    }
    return true;
}

// Layout: magic[8], u32 version, u32 layer count, u32 sizes..., u8 hidden,
// u8 output, u64 init seed, u64 parameter count, f64 parameters...
void MlpNet::save(std::ostream& out) const {
    out.write(kMagic.data(), kMagic.size());
    write_le<std::uint32_t>(out, kFormatVersion);
    write_le<std::uint32_t>(out, static_cast<std::uint32_t>(layer_sizes_.size()));
    for (int n : layer_sizes_) write_le<std::uint32_t>(out, static_cast<std::uint32_t>(n));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(hidden_));
    write_le<std::uint8_t>(out, static_cast<std::uint8_t>(output_));
    write_le<std::uint64_t>(out, init_seed_);
    const auto flat = flat_parameters();
    write_le<std::uint64_t>(out, flat.size());
    for (double v : flat) write_le<double>(out, v);
    if (!out) throw ConfigError("failed to write network checkpoint");
}

void MlpNet::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ConfigError("cannot open " + path.string() + " for writing");
    save(out);
}

MlpNet MlpNet::load(std::istream& in) {
    std::array<char, 8> magic{};
    in.read(magic.data(), magic.size());
    if (!in || magic != kMagic) throw ConfigError("not a network checkpoint");
    const auto version = read_le<std::uint32_t>(in);
    if (version != kFormatVersion) throw ConfigError("unsupported network checkpoint version " + std::to_string(version));
    const auto count = read_le<std::uint32_t>(in);
    if (count < 2 || count > 64) throw ConfigError("corrupt layer count in network checkpoint");
    std::vector<int> sizes(count);
    for (auto& s : sizes) s = static_cast<int>(read_le<std::uint32_t>(in));
    const auto hidden = read_le<std::uint8_t>(in);
    const auto output = read_le<std::uint8_t>(in);
    if (hidden > 3 || output > 3) throw ConfigError("corrupt activation tag in network checkpoint");
    const auto seed = read_le<std::uint64_t>(in);
    MlpNet net(sizes, static_cast<Activation>(hidden), static_cast<Activation>(output), seed);
    const auto n_params = read_le<std::uint64_t>(in);
    if (n_params != net.parameter_count()) throw ConfigError("parameter count does not match architecture");
    std::vector<double> flat(n_params);
    for (auto& v : flat) v = read_le<double>(in);
    net.set_flat_parameters(flat);
    if (!net.parameters_finite()) throw ConfigError("checkpoint holds non-finite parameters");
    return net;
}

MlpNet MlpNet::load(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    return load(in);
}

AdamState AdamState::for_net(const MlpNet& net, double learning_rate, double beta1, double beta2, double epsilon) {
    if (!(learning_rate > 0.0)) throw ContractError("learning rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0 && beta2 > 0.0 && beta2 < 1.0)) throw ContractError("Adam betas must lie in (0,1)");
    AdamState opt;
    opt.learning_rate = learning_rate;
    opt.beta1 = beta1;
    opt.beta2 = beta2;
    opt.epsilon = epsilon;
    for (std::size_t l = 0; l < net.num_layers(); ++l) {
        opt.first_weights.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
        opt.second_weights.push_back(Matrix::Zero(net.weight(l).rows(), net.weight(l).cols()));
        opt.first_biases.push_back(Vector::Zero(net.bias(l).size()));
        opt.second_biases.push_back(Vector::Zero(net.bias(l).size()));
    }
    return opt;
}

void adam_step(MlpNet& net, const Gradients& grads, AdamState& opt) {
    const std::size_t n = net.num_layers();
    if (grads.weights.size() != n || grads.biases.size() != n || opt.first_weights.size() != n) {
        throw ContractError("gradient or optimizer structure does not match network");
    }
    for (std::size_t l = 0; l < n; ++l) {
        if (grads.weights[l].rows() != net.weight(l).rows() || grads.weights[l].cols() != net.weight(l).cols() ||
            grads.biases[l].size() != net.bias(l).size()) {
            throw ContractError("gradient shape does not match layer " + std::to_string(l));
        }
    }
    if (!grads.all_finite()) throw NumericError("non-finite gradient passed to adam_step");

    opt.step_count += 1;
    const double t = static_cast<double>(opt.step_count);
    const double correction1 = 1.0 - std::pow(opt.beta1, t);
    const double correction2 = 1.0 - std::pow(opt.beta2, t);
    const double lr = opt.learning_rate;
    const double eps = opt.epsilon;

    auto update = [&](auto& param, const auto& g, auto& m, auto& v) {
        m = opt.beta1 * m + (1.0 - opt.beta1) * g;
        v = opt.beta2 * v + (1.0 - opt.beta2) * g.cwiseProduct(g);
        param.array() -= lr * (m.array() / correction1) / ((v.array() / correction2).sqrt() + eps);
    };
    for (std::size_t l = 0; l < n; ++l) {
        update(net.weight(l), grads.weights[l], opt.first_weights[l], opt.second_weights[l]);
        update(net.bias(l), grads.biases[l], opt.first_biases[l], opt.second_biases[l]);
    }
    if (!net.parameters_finite()) throw NumericError("adam_step produced non-finite parameters");
}

void ScalarAdam::step(double& param, double grad) {
    if (!std::isfinite(grad)) throw NumericError("non-finite scalar gradient");
    step_count += 1;
    const double t = static_cast<double>(step_count);
    first = beta1 * first + (1.0 - beta1) * grad;
    second = beta2 * second + (1.0 - beta2) * grad * grad;
    const double m_hat = first / (1.0 - std::pow(beta1, t));
    const double v_hat = second / (1.0 - std::pow(beta2, t));
    param -= learning_rate * m_hat / (std::sqrt(v_hat) + epsilon);
    if (!std::isfinite(param)) throw NumericError("scalar Adam produced a non-finite parameter");
}

void soft_update(MlpNet& target, const MlpNet& source, double tau) {
    if (!target.same_architecture(source)) throw ContractError("soft_update requires identical architectures");
    if (!(tau > 0.0 && tau <= 1.0)) throw ContractError("tau must lie in (0,1]");
    for (std::size_t l = 0; l < target.num_layers(); ++l) {
        if (tau == 1.0) {
            target.weight(l) = source.weight(l);
            target.bias(l) = source.bias(l);
        } else {
            target.weight(l) = (1.0 - tau) * target.weight(l) + tau * source.weight(l);
            target.bias(l) = (1.0 - tau) * target.bias(l) + tau * source.bias(l);
        }
    }
}

}  // namespace oris::nn
