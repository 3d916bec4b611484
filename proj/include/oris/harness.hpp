#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "oris/datagen.hpp"
#include "oris/oris.hpp"

namespace oris::harness {

/// 100 * (raw - random_ref) / (expert_ref - random_ref)
double normalized_score(double raw, double random_ref, double expert_ref);

struct ReferenceReturns {
    double random_return = 0.0;
    double expert_return = 0.0;
};

inline constexpr int kReferenceFixturesVersion = 1;

/// Versioned fixtures file mapping env ids to reference returns.
std::map<std::string, ReferenceReturns> read_reference_fixtures(const std::filesystem::path& path);
void write_reference_fixtures(const std::filesystem::path& path, const std::map<std::string, ReferenceReturns>& refs);

enum class SweepAxis { gravity, gap_type, fraction, ablation };
std::string to_string(SweepAxis axis);
SweepAxis sweep_axis_from_string(const std::string& name);

struct GenerateSettings {
    std::vector<Tier> tiers;
    int episodes = 100;
    bool train_reference = true;
    std::string policy_checkpoint;  // agent directory used instead of training
    ReferenceRunConfig reference;
};

struct ExperimentConfig {
    EnvId env_id = EnvId::pendulum;
    DynamicsPerturbation sim_perturbation;
    std::string dataset_path;
    double dataset_fraction = 1.0;
    std::vector<Variant> variants{Variant::oris};
    std::vector<std::uint64_t> seeds{0};
    std::string output_dir = "runs";
    std::optional<ReferenceReturns> reference;
    std::string reference_fixtures;
    std::string gan_checkpoint;
    std::string agent_checkpoint;
    OrisConfig oris;
    sac::SacHyperParams sac;
    gan::GanHyperParams gan;
    GenerateSettings generate;
    std::optional<SweepAxis> sweep_axis;

    // Canonical JSON of the validated config; the hash is computed from it.
    nlohmann::json document;

    std::string hash() const;
    EnvSpec real_spec() const { return EnvSpec::real(env_id); }
    EnvSpec sim_spec() const { return EnvSpec::simulator(env_id, sim_perturbation); }
};

/// Validates a config document. Unknown keys and out-of-range values are
/// rejected with a message naming the offending field. Relative paths are
/// resolved against `base_dir`.
ExperimentConfig parse_config(const nlohmann::json& doc, const std::filesystem::path& base_dir = {});
ExperimentConfig load_config(const std::filesystem::path& path);

/// Rebuilds the document from the typed fields (used after programmatic edits).
nlohmann::json to_json(const ExperimentConfig& cfg);

inline const std::vector<std::string> kMetricsColumns = {
    "epoch",       "env_steps",   "eval_return_mean", "eval_return_std",         "normalized_score",
    "critic_loss", "actor_loss",  "temperature",      "mean_sim_weight",         "random_rollout_fraction",
    "invalid_restart_count"};

std::string metrics_csv(const std::vector<EpochReport>& reports, const ReferenceReturns& refs,
                        const std::string& config_hash);

struct MetricsRow {
    int epoch = 0;
    std::optional<double> eval_return_mean;
    std::optional<double> normalized_score;
};

struct ParsedMetrics {
    std::string config_hash;
    std::vector<MetricsRow> rows;
    // eval_return_mean of the last evaluated row.
    double final_return() const;
};

ParsedMetrics parse_metrics_csv(const std::string& text);
ParsedMetrics read_metrics_csv(const std::filesystem::path& path);

struct RunOutcome {
    Variant variant = Variant::oris;
    std::uint64_t seed = 0;
    std::vector<EpochReport> reports;
    double final_return = 0.0;
    double final_normalized = 0.0;
    std::filesystem::path metrics_path;
};

struct ScoreRow {
    std::string label;
    Variant variant = Variant::oris;
    std::vector<std::uint64_t> seeds;
    std::vector<double> final_returns;
    std::vector<double> normalized;
    double mean_return = 0.0;
    double mean_normalized = 0.0;
    double std_normalized = 0.0;
};

struct ScoreTable {
    std::vector<ScoreRow> rows;
    std::vector<std::string> failures;

    const ScoreRow* find(const std::string& label, Variant v) const;
};

/// Mean and population standard deviation over seeds, recomputed from the
/// per-run metrics files. Files whose config hash differs from `expected_hash`
/// are refused.
ScoreRow aggregate_runs(const std::string& label, Variant variant, const std::vector<std::filesystem::path>& csvs,
                        const ReferenceReturns& refs, const std::string& expected_hash);

void write_score_table(const ScoreTable& table, const std::filesystem::path& directory, const std::string& config_hash);

ReferenceReturns resolve_reference(const ExperimentConfig& cfg);

/// Loads (and subsamples) the offline dataset named by the config.
Dataset load_offline(const ExperimentConfig& cfg, std::uint64_t seed);

/// One (variant, seed) training run; writes metrics.csv and the agent under
/// `run_dir` when non-empty.
RunOutcome run_single(const ExperimentConfig& cfg, Variant variant, std::uint64_t seed,
                      const std::filesystem::path& run_dir, const gan::GanPair* gan = nullptr);

/// Runs every (variant, seed) of the config and writes the score table.
ScoreTable run(const ExperimentConfig& cfg);

struct SweepPoint {
    std::string label;
    ExperimentConfig config;
};

std::vector<SweepPoint> expand_sweep(const ExperimentConfig& base, SweepAxis axis);

/// Runs all (point x variant x seed) combinations; failing runs are listed in
/// failures.json and the remaining results are still aggregated.
ScoreTable sweep(const ExperimentConfig& base, SweepAxis axis);

}  // namespace oris::harness
