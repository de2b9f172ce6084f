#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>
#include <stdexcept>
#include <string>
#include <vector>

#include "json.hpp"

#include "urbanfuse/dataset.hpp"
#include "urbanfuse/fusion.hpp"
#include "urbanfuse/metrics.hpp"
#include "urbanfuse/synthetic.hpp"
#include "urbanfuse/tsne.hpp"

namespace urbanfuse::pipeline {

/// A failure inside one pipeline stage; what() starts with "[stage]".
class StageError : public std::runtime_error {
public:
    StageError(std::string stage, const std::string& message)
        : std::runtime_error("[" + stage + "] " + message), stage_(std::move(stage)) {}
    const std::string& stage() const noexcept { return stage_; }

private:
    std::string stage_;
};

enum class Mode { synthetic, real };

struct GraphSource {
    std::optional<std::filesystem::path> nodes;
    std::optional<std::filesystem::path> edges;
    int grid_rows = 40;
    int grid_cols = 50;
    double drop_fraction = 0.1;
};

struct EvalConfig {
    int k = 12;
    /// nullopt means exhaustive; defaults to 200 for real data.
    std::optional<std::size_t> subsample_cap;
};

/// Everything needed to regenerate a session bit for bit.
struct ExperimentConfig {
    Mode mode = Mode::synthetic;
    std::uint64_t seed = 1;
    GraphSource graph;
    synth::SynthConfig synth;
    std::optional<std::filesystem::path> dataset_dir;  // real mode
    NormScheme normalization = NormScheme::min_max;
    nlohmann::json model_overrides = nlohmann::json::object();
    EvalConfig eval;
    tsne::TsneConfig tsne;

    /// Re-derives the component seeds (synthetic data, models, k-means,
    /// t-SNE) from the master seed.
    void set_seed(std::uint64_t master);
    nlohmann::json to_json() const;
    static ExperimentConfig from_json(const nlohmann::json& j);
    static ExperimentConfig load(const std::filesystem::path& path);
    /// 16 hex digits of FNV-1a over the canonical JSON form.
    std::string hash() const;
    std::uint64_t eval_seed() const;
    std::optional<std::size_t> effective_subsample_cap() const;
};

/// Standard file locations inside a session directory.
struct SessionLayout {
    std::filesystem::path root;

    std::filesystem::path config() const { return root / "config.json"; }
    std::filesystem::path dataset_dir() const { return root / "dataset"; }
    std::filesystem::path embeddings_dir() const { return root / "embeddings"; }
    std::filesystem::path embedding(fusion::FusionKind k) const;
    std::filesystem::path projection(fusion::FusionKind k) const;
    std::filesystem::path evaluation(fusion::FusionKind k) const;
    std::filesystem::path quadrants(fusion::FusionKind k) const;
    std::filesystem::path clusters(fusion::FusionKind k) const;
    std::filesystem::path index() const { return root / "index.json"; }
    std::filesystem::path summary() const { return root / "summary.txt"; }

    /// `<base>/session-<hash>`
    static SessionLayout for_config(const std::filesystem::path& base, const ExperimentConfig& config);
};

/// Raw dataset as stored in the session plus the normalised view used for
/// training and evaluation.
struct LoadedDataset {
    Dataset raw;
    Dataset normalized;
};

LoadedDataset load_session_dataset(const SessionLayout& layout, const ExperimentConfig& config);

// Individual stages. Each reads its inputs from the session directory and
// writes its artifacts there; failures are reported as StageError.
void stage_generate(const ExperimentConfig& config, const SessionLayout& layout);
void stage_train(const ExperimentConfig& config, const SessionLayout& layout);
std::map<fusion::FusionKind, metrics::EmbeddingEvaluation> stage_evaluate(const ExperimentConfig& config,
                                                                          const SessionLayout& layout);
std::map<fusion::FusionKind, tsne::TsneResult> stage_project(const ExperimentConfig& config,
                                                             const SessionLayout& layout);

struct Session {
    SessionLayout layout;
    ExperimentConfig config;
    LoadedDataset dataset;
    fusion::EmbeddingSet embeddings;
    std::map<fusion::FusionKind, tsne::TsneResult> projections;
    std::map<fusion::FusionKind, metrics::EmbeddingEvaluation> evaluations;
};

/// generate -> train -> evaluate -> project, then report.
Session run_all(const ExperimentConfig& config, const std::filesystem::path& out_base);
Session run_synthetic_experiment(ExperimentConfig config, const std::filesystem::path& out_base);
Session run_real_experiment(ExperimentConfig config, const std::filesystem::path& out_base);

struct ModelReport {
    fusion::FusionKind kind;
    std::optional<double> final_loss;
    metrics::QuadrantSummary quadrants;
    std::optional<double> ground_truth_ari;
};

struct Report {
    std::string config_hash;
    std::vector<ModelReport> models;
    std::vector<std::string> files;  // relative to the session root

    std::string text() const;
    nlohmann::json to_json() const;
};

/// Pure function of the on-disk artifacts. Throws DataError naming the
/// first missing model artifact.
Report report(const std::filesystem::path& session_dir);
/// Writes index.json and summary.txt next to the artifacts.
Report write_report(const std::filesystem::path& session_dir);

/// `cluster_a,cluster_b,s_static,s_dynamic`
void save_evaluation_csv(const std::filesystem::path& path, const std::vector<metrics::SilhouettePair>& pairs);
std::vector<metrics::SilhouettePair> load_evaluation_csv(const std::filesystem::path& path);

/// `node_id,x,y`
void save_projection_csv(const std::filesystem::path& path, const std::vector<NodeId>& ids, const Matrix& coords);

}  // namespace urbanfuse::pipeline
