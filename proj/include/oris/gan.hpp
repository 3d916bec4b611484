#pragma once

#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

#include "oris/nn.hpp"

namespace oris::gan {

/// Per-dimension z-score transform fitted on the offline states.
struct StateNormalizer {
    Vector mean;
    Vector stddev;  // floored at 1e-6

    static StateNormalizer fit(const std::vector<Vector>& states);
    Vector normalize(const Vector& s) const;
    Vector denormalize(const Vector& z) const;
    Matrix normalize_batch(const Matrix& states) const;
};

struct GanHyperParams {
    int z_dim = 8;
    int hidden_width = 128;
    int hidden_layers = 2;
    int iterations = 20000;
    int batch_size = 256;
    double learning_rate = 2e-4;
    double beta1 = 0.5;
    double restart_noise_sigma = 0.05;
    double w_min = 0.1;
    double w_max = 1.0;
    std::uint64_t seed = 0;

    void validate() const;
};

/// Generator over normalized states plus a state discriminator, frozen after
/// pretraining. The generator's tanh output is stretched by `output_scale`
/// so it can reach every normalized value present in the data.
struct GanPair {
    nn::MlpNet generator;
    nn::MlpNet discriminator;
    int z_dim = 8;
    StateNormalizer normalizer;
    Vector output_scale;
    double restart_noise_sigma = 0.05;
    double w_min = 0.1;
    double w_max = 1.0;

    int state_dim() const { return static_cast<int>(normalizer.mean.size()); }

    /// Generated states in normalized units, one column per latent column.
    Matrix generate_normalized(const Matrix& latents) const;
    Vector generate(const Vector& latent) const;
    double discriminate(const Vector& state) const;

    void save(const std::filesystem::path& directory) const;
    static GanPair load(const std::filesystem::path& directory);
};

struct GanTrainReport {
    std::vector<double> discriminator_loss;
    std::vector<double> generator_loss;
    std::vector<double> mean_d_real;
    std::vector<double> mean_d_fake;
};

class GanTrainingError : public NumericError {
public:
    GanTrainingError(const std::string& what, GanTrainReport report)
        : NumericError(what), report_(std::move(report)) {}
    const GanTrainReport& report() const { return report_; }

private:
    GanTrainReport report_;
};

struct PretrainResult {
    GanPair gan;
    GanTrainReport report;
};

/// Discriminator ascent and generator descent on the minimax objective over
/// normalized states. Both gradients are taken against the same pre-step
/// discriminator and applied together once per iteration.
PretrainResult pretrain(const std::vector<Vector>& states, const GanHyperParams& hp);

/// Builds an untrained pair (normalizer fitted on `states`).
GanPair make_untrained(const std::vector<Vector>& states, const GanHyperParams& hp);

/// Value of E[log D(real)] + E[log(1 - D(fake))] for the given batches (normalized units).
double discriminator_objective(const GanPair& gan, const Matrix& real_normalized, const Matrix& fake_normalized);

/// Draw from G(z) + N(0, sigma^2 I) (noise in normalized space), denormalized.
Vector sample_restart(const GanPair& gan, Rng& rng);

/// clip(1 - 2 D, w_min, w_max)
double weight_from_discriminator(double d, double w_min, double w_max);
double weight_of(const GanPair& gan, const Vector& state);
std::vector<double> weights_of(const GanPair& gan, const std::vector<Vector>& states);

}  // namespace oris::gan
