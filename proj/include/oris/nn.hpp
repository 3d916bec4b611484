#pragma once

#include <cstdint>
#include <filesystem>
#include <iosfwd>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "oris/common.hpp"

namespace oris::nn {

enum class Activation : std::uint8_t { identity = 0, relu = 1, tanh = 2, sigmoid = 3 };

std::string to_string(Activation act);
Activation activation_from_string(const std::string& name);

// Where the upstream gradient handed to backward() lives: after the output
// activation (the usual case) or directly on the last layer's pre-activation.
// The latter lets callers fold a sigmoid into a log-loss without dividing by D.
enum class GradientAt { output, pre_activation };

/// Per-parameter gradients of an MlpNet, plus the gradient with respect to the
/// network input (needed when a loss is backpropagated through one network
/// into another, as with actor-through-critic and generator-through-discriminator).
struct Gradients {
    std::vector<Matrix> weights;
    std::vector<Vector> biases;
    Matrix input;

    double squared_norm() const;
    bool all_finite() const;
    void scale(double factor);
    void add(const Gradients& other);
};

/// Dense multilayer perceptron in 64-bit floating point.
///
/// Batched calls take one sample per column. `forward` records the per-layer
/// activations that the following `backward` consumes; `predict` is the
/// read-only path safe to call on shared snapshots.
class MlpNet {
public:
    MlpNet() = default;
    MlpNet(std::vector<int> layer_sizes, Activation hidden, Activation output, std::uint64_t init_seed);

    const std::vector<int>& layer_sizes() const { return layer_sizes_; }
    int input_dim() const { return layer_sizes_.front(); }
    int output_dim() const { return layer_sizes_.back(); }
    std::size_t num_layers() const { return weights_.size(); }
    Activation hidden_activation() const { return hidden_; }
    Activation output_activation() const { return output_; }
    std::uint64_t init_seed() const { return init_seed_; }

    const Matrix& weight(std::size_t layer) const { return weights_.at(layer); }
    const Vector& bias(std::size_t layer) const { return biases_.at(layer); }
    Matrix& weight(std::size_t layer) { return weights_.at(layer); }
    Vector& bias(std::size_t layer) { return biases_.at(layer); }

    Vector forward(const Vector& input);
    Matrix forward_batch(const Matrix& inputs);

    Vector predict(const Vector& input) const;
    Matrix predict_batch(const Matrix& inputs) const;

    // Pre-activation of the output layer from the most recent forward().
    const Matrix& output_preactivation() const;

    Gradients backward(const Matrix& upstream, GradientAt at = GradientAt::output,
                       bool parameter_gradients = true) const;
    Gradients backward(const Vector& upstream) const;

    std::size_t parameter_count() const;
    std::vector<double> flat_parameters() const;
    void set_flat_parameters(std::span<const double> flat);
    std::vector<double> flatten(const Gradients& grads) const;

    bool same_architecture(const MlpNet& other) const;
    bool parameters_finite() const;

    void save(std::ostream& out) const;
    void save(const std::filesystem::path& path) const;
    static MlpNet load(std::istream& in);
    static MlpNet load(const std::filesystem::path& path);

private:
    void check_input(const Matrix& inputs) const;

    std::vector<int> layer_sizes_;
    Activation hidden_ = Activation::relu;
    Activation output_ = Activation::identity;
    std::uint64_t init_seed_ = 0;
    std::vector<Matrix> weights_;
    std::vector<Vector> biases_;

    // Recorded by forward(): activations_[0] is the input, activations_[l+1]
    // the post-activation output of layer l; preacts_[l] its pre-activation.
    std::vector<Matrix> activations_;
    std::vector<Matrix> preacts_;
};

/// Adam moments for one MlpNet.
struct AdamState {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step_count = 0;
    std::vector<Matrix> first_weights;
    std::vector<Vector> first_biases;
    std::vector<Matrix> second_weights;
    std::vector<Vector> second_biases;

    static AdamState for_net(const MlpNet& net, double learning_rate, double beta1 = 0.9,
                             double beta2 = 0.999, double epsilon = 1e-8);
};

void adam_step(MlpNet& net, const Gradients& grads, AdamState& opt);

/// Adam for a single scalar parameter (SAC's log temperature).
struct ScalarAdam {
    double learning_rate = 3e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t step_count = 0;
    double first = 0.0;
    double second = 0.0;

    void step(double& param, double grad);
};

/// target <- (1 - tau) * target + tau * source, element-wise.
void soft_update(MlpNet& target, const MlpNet& source, double tau);

}  // namespace oris::nn
