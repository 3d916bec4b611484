#include "oris/gan.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include <json.hpp>

namespace oris::gan {

namespace {

constexpr double kStdFloor = 1e-6;

// log(1 + e^x) without overflow.
double softplus(double x) { return x > 0.0 ? x + std::log1p(std::exp(-x)) : std::log1p(std::exp(x)); }

double sigmoid(double x) {
    if (x >= 0.0) return 1.0 / (1.0 + std::exp(-x));
    const double e = std::exp(x);
    return e / (1.0 + e);
}

Matrix gaussian_matrix(Eigen::Index rows, Eigen::Index cols, Rng& rng) {
    Matrix m(rows, cols);
    std::normal_distribution<double> dist(0.0, 1.0);
    for (Eigen::Index c = 0; c < cols; ++c) {
        for (Eigen::Index r = 0; r < rows; ++r) m(r, c) = dist(rng);
    }
    return m;
}

std::vector<int> layer_sizes(int in, int width, int layers, int out) {
    std::vector<int> sizes{in};
    for (int i = 0; i < layers; ++i) sizes.push_back(width);
    sizes.push_back(out);
    return sizes;
}

}  // namespace

StateNormalizer StateNormalizer::fit(const std::vector<Vector>& states) {
    if (states.empty()) throw ContractError("cannot fit a normalizer on zero states");
    const Eigen::Index dim = states.front().size();
    StateNormalizer norm;
    norm.mean = Vector::Zero(dim);
    for (const auto& s : states) {
        if (s.size() != dim) throw ContractError("states have inconsistent dimensions");
        norm.mean += s;
    }
    norm.mean /= static_cast<double>(states.size());
    norm.stddev = Vector::Zero(dim);
    for (const auto& s : states) norm.stddev += (s - norm.mean).cwiseAbs2();
    norm.stddev = (norm.stddev / static_cast<double>(states.size())).cwiseSqrt().cwiseMax(kStdFloor);
    return norm;
}

Vector StateNormalizer::normalize(const Vector& s) const { return (s - mean).cwiseQuotient(stddev); }

Vector StateNormalizer::denormalize(const Vector& z) const { return z.cwiseProduct(stddev) + mean; }

Matrix StateNormalizer::normalize_batch(const Matrix& states) const {
    return (states.colwise() - mean).array().colwise() / stddev.array();
}

void GanHyperParams::validate() const {
    if (z_dim <= 0 || hidden_width <= 0 || hidden_layers <= 0) throw ConfigError("gan: network sizes must be positive");
    if (iterations <= 0 || batch_size <= 0) throw ConfigError("gan: iterations and batch_size must be positive");
    if (!(learning_rate > 0.0)) throw ConfigError("gan: learning_rate must be positive");
    if (!(beta1 > 0.0 && beta1 < 1.0)) throw ConfigError("gan: beta1 must lie in (0,1)");
    if (!(restart_noise_sigma >= 0.0)) throw ConfigError("gan: restart_noise_sigma must be non-negative");
    if (!(w_min > 0.0)) throw ConfigError("gan: w_min must be positive");
    if (!(w_max >= w_min)) throw ConfigError("gan: w_max must be at least w_min");
}

Matrix GanPair::generate_normalized(const Matrix& latents) const {
    return (generator.predict_batch(latents).array().colwise() * output_scale.array()).matrix();
}

Vector GanPair::generate(const Vector& latent) const {
    return normalizer.denormalize(generate_normalized(latent).col(0));
}

double GanPair::discriminate(const Vector& state) const {
    return discriminator.predict(normalizer.normalize(state))(0);
}

void GanPair::save(const std::filesystem::path& directory) const {
    std::filesystem::create_directories(directory);
    generator.save(directory / "generator.bin");
    discriminator.save(directory / "discriminator.bin");
    auto to_vec = [](const Vector& v) { return std::vector<double>(v.data(), v.data() + v.size()); };
    nlohmann::json meta = {{"format", "oris-gan"},
                           {"version", 1},
                           {"z_dim", z_dim},
                           {"normalizer", {{"mean", to_vec(normalizer.mean)}, {"std", to_vec(normalizer.stddev)}}},
                           {"output_scale", to_vec(output_scale)},
                           {"sigma", restart_noise_sigma},
                           {"w_min", w_min},
                           {"w_max", w_max}};
    std::ofstream out(directory / "gan.json");
    out << meta.dump(2) << '\n';
    if (!out) throw ConfigError("failed to write gan sidecar");
}

GanPair GanPair::load(const std::filesystem::path& directory) {
    std::ifstream in(directory / "gan.json");
    if (!in) throw ConfigError("missing gan.json in " + directory.string());
    GanPair gan;
    try {
        const auto meta = nlohmann::json::parse(in);
        if (meta.at("format") != "oris-gan" || meta.at("version") != 1) throw ConfigError("unsupported gan sidecar");
        auto to_eigen = [](const nlohmann::json& j) {
            const auto v = j.get<std::vector<double>>();
            return Vector(Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size())));
        };
        gan.z_dim = meta.at("z_dim").get<int>();
        gan.normalizer.mean = to_eigen(meta.at("normalizer").at("mean"));
        gan.normalizer.stddev = to_eigen(meta.at("normalizer").at("std"));
        gan.output_scale = to_eigen(meta.at("output_scale"));
        gan.restart_noise_sigma = meta.at("sigma").get<double>();
        gan.w_min = meta.at("w_min").get<double>();
        gan.w_max = meta.at("w_max").get<double>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("malformed gan sidecar: ") + e.what());
    }
    gan.generator = nn::MlpNet::load(directory / "generator.bin");
    gan.discriminator = nn::MlpNet::load(directory / "discriminator.bin");
    if (gan.generator.input_dim() != gan.z_dim || gan.generator.output_dim() != gan.state_dim() ||
        gan.discriminator.input_dim() != gan.state_dim() || gan.discriminator.output_dim() != 1) {
        throw ConfigError("gan checkpoint networks do not match the sidecar");
    }
    return gan;
}

GanPair make_untrained(const std::vector<Vector>& states, const GanHyperParams& hp) {
    hp.validate();
    GanPair gan;
    gan.normalizer = StateNormalizer::fit(states);
    const int dim = static_cast<int>(gan.normalizer.mean.size());
    gan.z_dim = hp.z_dim;
    gan.restart_noise_sigma = hp.restart_noise_sigma;
    gan.w_min = hp.w_min;
    gan.w_max = hp.w_max;
    gan.output_scale = Vector::Ones(dim);
    for (const auto& s : states) gan.output_scale = gan.output_scale.cwiseMax(gan.normalizer.normalize(s).cwiseAbs());
    gan.output_scale *= 1.05;
    gan.generator = nn::MlpNet(layer_sizes(hp.z_dim, hp.hidden_width, hp.hidden_layers, dim), nn::Activation::relu,
                               nn::Activation::tanh, derive_seed(hp.seed, 101));
    gan.discriminator = nn::MlpNet(layer_sizes(dim, hp.hidden_width, hp.hidden_layers, 1), nn::Activation::relu,
                                   nn::Activation::sigmoid, derive_seed(hp.seed, 102));
    return gan;
}

double discriminator_objective(const GanPair& gan, const Matrix& real_normalized, const Matrix& fake_normalized) {
    const Matrix d_real = gan.discriminator.predict_batch(real_normalized);
    const Matrix d_fake = gan.discriminator.predict_batch(fake_normalized);
    return d_real.array().log().mean() + (1.0 - d_fake.array()).log().mean();
}

PretrainResult pretrain(const std::vector<Vector>& states, const GanHyperParams& hp) {
    if (states.size() < 100) throw ContractError("GAN pretraining needs at least 100 states");
    GanPair gan = make_untrained(states, hp);
    const int dim = gan.state_dim();
    const auto n_states = static_cast<Eigen::Index>(states.size());

    Matrix data(dim, n_states);
    for (Eigen::Index i = 0; i < n_states; ++i) data.col(i) = gan.normalizer.normalize(states[static_cast<std::size_t>(i)]);

    auto g_opt = nn::AdamState::for_net(gan.generator, hp.learning_rate, hp.beta1);
    auto d_opt = nn::AdamState::for_net(gan.discriminator, hp.learning_rate, hp.beta1);
    Rng rng = make_rng(hp.seed, 103);
    std::uniform_int_distribution<Eigen::Index> pick(0, n_states - 1);

    const Eigen::Index batch = hp.batch_size;
    const double inv_batch = 1.0 / static_cast<double>(batch);
    GanTrainReport report;
    report.discriminator_loss.reserve(static_cast<std::size_t>(hp.iterations));
    report.generator_loss.reserve(static_cast<std::size_t>(hp.iterations));
    report.mean_d_real.reserve(static_cast<std::size_t>(hp.iterations));
    report.mean_d_fake.reserve(static_cast<std::size_t>(hp.iterations));

    Matrix joint(dim, 2 * batch);
    Matrix upstream(1, 2 * batch);
    for (int it = 0; it < hp.iterations; ++it) {
        // Discriminator: ascend E[log D(s)] + E[log(1 - D(G(z)))].
        for (Eigen::Index k = 0; k < batch; ++k) joint.col(k) = data.col(pick(rng));
        joint.rightCols(batch) = gan.generate_normalized(gaussian_matrix(hp.z_dim, batch, rng));
        gan.discriminator.forward_batch(joint);
        const Matrix& logits = gan.discriminator.output_preactivation();
        double objective = 0.0;
        double d_real = 0.0;
        double d_fake = 0.0;
        for (Eigen::Index k = 0; k < batch; ++k) {
            const double l = logits(0, k);
            const double d = sigmoid(l);
            objective += -softplus(-l);
            d_real += d;
            // Gradient of the negated objective with respect to the logit.
            upstream(0, k) = -(1.0 - d) * inv_batch;
        }
        for (Eigen::Index k = batch; k < 2 * batch; ++k) {
            const double l = logits(0, k);
            const double d = sigmoid(l);
            objective += -softplus(l);
            d_fake += d;
            upstream(0, k) = d * inv_batch;
        }
        objective *= inv_batch;
        const auto d_grads = gan.discriminator.backward(upstream, nn::GradientAt::pre_activation);

        // Generator: descend E[log(1 - D(G(z)))] against the pre-step discriminator.
        const Matrix latents = gaussian_matrix(hp.z_dim, batch, rng);
        const Matrix raw = gan.generator.forward_batch(latents);
        const Matrix fake = (raw.array().colwise() * gan.output_scale.array()).matrix();
        gan.discriminator.forward_batch(fake);
        const Matrix& g_logits = gan.discriminator.output_preactivation();
        double g_loss = 0.0;
        Matrix g_upstream(1, batch);
        for (Eigen::Index k = 0; k < batch; ++k) {
            const double l = g_logits(0, k);
            g_loss += -softplus(l);
            g_upstream(0, k) = -sigmoid(l) * inv_batch;
        }
        g_loss *= inv_batch;
        const auto through_d = gan.discriminator.backward(g_upstream, nn::GradientAt::pre_activation, false);
        const Matrix g_out = (through_d.input.array().colwise() * gan.output_scale.array()).matrix();
        const auto g_grads = gan.generator.backward(g_out);

        report.discriminator_loss.push_back(-objective);
        report.generator_loss.push_back(g_loss);
        report.mean_d_real.push_back(d_real * inv_batch);
        report.mean_d_fake.push_back(d_fake * inv_batch);
        if (!std::isfinite(objective) || !std::isfinite(g_loss)) {
            throw GanTrainingError("non-finite GAN loss at iteration " + std::to_string(it), std::move(report));
        }
        try {
            nn::adam_step(gan.discriminator, d_grads, d_opt);
            nn::adam_step(gan.generator, g_grads, g_opt);
        } catch (const NumericError& e) {
            throw GanTrainingError(std::string(e.what()) + " at iteration " + std::to_string(it), std::move(report));
        }
    }
    return {std::move(gan), std::move(report)};
}

Vector sample_restart(const GanPair& gan, Rng& rng) {
    Matrix z = gaussian_matrix(gan.z_dim, 1, rng);
    Vector x = gan.generate_normalized(z).col(0);
    if (gan.restart_noise_sigma > 0.0) {
        for (Eigen::Index i = 0; i < x.size(); ++i) x(i) += gan.restart_noise_sigma * standard_normal(rng);
    }
    return gan.normalizer.denormalize(x);
}

double weight_from_discriminator(double d, double w_min, double w_max) {
    return std::clamp(1.0 - 2.0 * d, w_min, w_max);
}

double weight_of(const GanPair& gan, const Vector& state) {
    return weight_from_discriminator(gan.discriminate(state), gan.w_min, gan.w_max);
}

std::vector<double> weights_of(const GanPair& gan, const std::vector<Vector>& states) {
    std::vector<double> out;
    if (states.empty()) return out;
    Matrix batch(gan.state_dim(), static_cast<Eigen::Index>(states.size()));
    for (std::size_t i = 0; i < states.size(); ++i) batch.col(static_cast<Eigen::Index>(i)) = states[i];
    const Matrix d = gan.discriminator.predict_batch(gan.normalizer.normalize_batch(batch));
    out.reserve(states.size());
    for (Eigen::Index i = 0; i < d.cols(); ++i) out.push_back(weight_from_discriminator(d(0, i), gan.w_min, gan.w_max));
    return out;
}

}  // namespace oris::gan
