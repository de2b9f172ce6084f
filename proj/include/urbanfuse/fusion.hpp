#pragma once

#include <array>
#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <string_view>

#include "json.hpp"

#include "urbanfuse/dataset.hpp"
#include "urbanfuse/gae.hpp"

namespace urbanfuse::fusion {

enum class FusionKind { m1_static, m1_dynamic, m2_early, m3_late, m4_hierarchical };

inline constexpr std::array<FusionKind, 5> kAllKinds{FusionKind::m1_static, FusionKind::m1_dynamic,
                                                     FusionKind::m2_early, FusionKind::m3_late,
                                                     FusionKind::m4_hierarchical};

/// Artifact stem: "m1_static", "m1_dynamic", "m2", "m3", "m4".
std::string_view artifact_name(FusionKind kind);
/// Display label: "M1-Static", "M1-Dynamic", "M2", "M3", "M4".
std::string_view display_name(FusionKind kind);
std::optional<FusionKind> kind_from_name(std::string_view name);

/// Joint-loss weights of the hierarchical model.
struct HierarchyWeights {
    double w_static = 1.0;
    double w_dynamic = 1.0;
    double w_top = 1.0;
};

struct ModelSpecs {
    gae::AutoencoderSpec static_spec;
    gae::AutoencoderSpec dynamic_spec;
    gae::AutoencoderSpec early_spec;  // M2
    gae::AutoencoderSpec top_spec;    // third autoencoder of M4
    HierarchyWeights weights;

    /// Defaults sized to `dataset`: hidden 64, latent 8 (static),
    /// 32 (dynamic, fused).
    static ModelSpecs defaults_for(const Dataset& dataset, std::uint64_t seed);
};

void to_json(nlohmann::json& j, const ModelSpecs& s);
/// Missing fields fall back to `defaults`.
ModelSpecs specs_from_json(const nlohmann::json& j, const ModelSpecs& defaults);

struct M1Result {
    gae::TrainResult static_model;
    gae::TrainResult dynamic_model;
};

M1Result train_m1(const Dataset& dataset, const gae::AutoencoderSpec& spec_static,
                  const gae::AutoencoderSpec& spec_dynamic);

/// [static | dynamic] per node, one gated autoencoder.
gae::TrainResult train_m2(const Dataset& dataset, const gae::AutoencoderSpec& spec);

/// Column-wise concatenation of two independently trained embeddings.
Matrix train_m3(const Matrix& z_static, const Matrix& z_dynamic);

/// Static, dynamic and top autoencoders optimised jointly. The top
/// autoencoder is gated and reconstructs the concatenated intermediate
/// embedding; its encoder output is the fused embedding.
class HierarchicalModel : public gae::Objective {
public:
    HierarchicalModel(const Dataset& dataset, const gae::AutoencoderSpec& spec_static,
                      const gae::AutoencoderSpec& spec_dynamic, const gae::AutoencoderSpec& spec_top,
                      const HierarchyWeights& weights);

    double loss_and_grad() override;
    double loss() override;
    std::vector<gae::ParamView> parameters() override;
    std::vector<double> learning_rates() override;
    std::vector<std::pair<std::string, double>> components() const override;

    Matrix embedding() const;
    /// Concatenated [z_static | z_dynamic] at the current parameters.
    Matrix intermediate() const;

    gae::GraphAutoencoder static_model;
    gae::GraphAutoencoder dynamic_model;
    gae::GraphAutoencoder top_model;

private:
    const Adjacency& adjacency_;
    Matrix x_static_;
    Matrix x_dynamic_;
    HierarchyWeights weights_;
    double last_static_ = 0.0, last_dynamic_ = 0.0, last_top_ = 0.0;
};

struct M4Result {
    Matrix embedding;
    gae::TrainReport report;  // total loss plus static/dynamic/top components
    gae::AutoencoderSpec spec_static, spec_dynamic, spec_top;
};

M4Result train_m4(const Dataset& dataset, const gae::AutoencoderSpec& spec_static,
                  const gae::AutoencoderSpec& spec_dynamic, const gae::AutoencoderSpec& spec_top,
                  const HierarchyWeights& weights = {});

struct TrainedEmbedding {
    Matrix embedding;
    std::optional<gae::TrainReport> report;  // absent for M3, which is not trained
    std::vector<gae::AutoencoderSpec> specs;
};

/// All five embeddings of one dataset, in node order.
struct EmbeddingSet {
    std::map<FusionKind, TrainedEmbedding> models;

    bool complete() const { return models.size() == kAllKinds.size(); }
    const Matrix& embedding(FusionKind kind) const;
};

EmbeddingSet train_all(const Dataset& dataset, const ModelSpecs& specs);

/// `<kind>.csv` per model plus manifest.json (specs, seeds, losses).
void save_embedding_set(const EmbeddingSet& set, const std::vector<NodeId>& ids, const std::filesystem::path& dir);
/// Reads embeddings back; throws DataError naming the first missing model.
EmbeddingSet load_embedding_set(const std::filesystem::path& dir, const std::vector<NodeId>& ids);

}  // namespace urbanfuse::fusion
