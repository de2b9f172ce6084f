#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "json.hpp"

#include "urbanfuse/common.hpp"
#include "urbanfuse/dataset.hpp"

namespace urbanfuse::gae {

enum class Activation { relu, identity };

/// GraphSAGE layer with mean aggregation:
///   out[v] = act(W_self h[v] + W_neigh mean_{u in N(v)} h[u] + bias)
/// An isolated node aggregates to the zero vector.
struct SageLayer {
    Matrix w_self;   // d_out x d_in
    Matrix w_neigh;  // d_out x d_in
    Matrix bias;     // 1 x d_out
    Activation activation = Activation::relu;

    static SageLayer glorot(int d_in, int d_out, Activation activation, std::mt19937_64& rng);
    static SageLayer zeros_like(const SageLayer& other);
    int in_dim() const { return static_cast<int>(w_self.cols()); }
    int out_dim() const { return static_cast<int>(w_self.rows()); }
};

struct SageCache {
    Matrix input;
    Matrix neighbor_mean;
    Matrix output;
};

/// Row v of the result is the mean of h over the neighbors of v.
Matrix neighbor_mean(const Matrix& h, const Adjacency& adjacency);
/// Adjoint of neighbor_mean: scatters each row's gradient to its neighbors.
Matrix neighbor_mean_adjoint(const Matrix& grad, const Adjacency& adjacency);

/// Throws std::invalid_argument on a dimension mismatch.
Matrix sage_forward(const SageLayer& layer, const Matrix& h, const Adjacency& adjacency,
                    SageCache* cache = nullptr);
/// Accumulates parameter gradients into `grads` and returns dL/dh.
Matrix sage_backward(const SageLayer& layer, const SageCache& cache, const Matrix& grad_output,
                     const Adjacency& adjacency, SageLayer& grads);

/// Input-conditioned sigmoid gate: weights = sigmoid(X W_g^T + b_g),
/// gated = X * weights (elementwise).
struct FeatureGate {
    Matrix weight;  // d x d
    Matrix bias;    // 1 x d

    static FeatureGate glorot(int d, std::mt19937_64& rng);
    static FeatureGate zeros_like(const FeatureGate& other);
};

struct GateOutput {
    Matrix gated;
    Matrix weights;
};

GateOutput gate_forward(const FeatureGate& gate, const Matrix& x);
Matrix gate_backward(const FeatureGate& gate, const Matrix& x, const Matrix& weights, const Matrix& grad_gated,
                     FeatureGate& grads);

/// Mean squared error over all entries.
double mse(const Matrix& prediction, const Matrix& target);

struct AutoencoderSpec {
    int input_dim = 0;
    int hidden_dim = 64;
    int latent_dim = 16;
    bool use_gate = false;
    int epochs = 300;
    double learning_rate = 1e-3;
    std::uint64_t seed = 0;

    /// Throws std::invalid_argument naming the violated constraint.
    void validate() const;
};

void to_json(nlohmann::json& j, const AutoencoderSpec& s);
void from_json(const nlohmann::json& j, AutoencoderSpec& s);

/// Non-owning handle on one parameter tensor and its gradient.
struct ParamView {
    std::string name;
    Matrix& value;
    Matrix& grad;
};

/// Encoder: [gate] -> SAGE(in -> hidden, ReLU) -> SAGE(hidden -> latent).
/// Decoder: SAGE(latent -> hidden, ReLU) -> SAGE(hidden -> in).
class GraphAutoencoder {
public:
    explicit GraphAutoencoder(const AutoencoderSpec& spec);

    const AutoencoderSpec& spec() const noexcept { return spec_; }

    struct Pass {
        Matrix embedding;
        Matrix reconstruction;
        Matrix gate_weights;  // empty without a gate
    };

    /// Forward pass that keeps the activations needed by backward().
    const Pass& forward(const Matrix& x, const Adjacency& adjacency);
    /// Back-propagates dL/d(reconstruction) plus an optional direct
    /// dL/d(embedding); accumulates parameter gradients and returns dL/dx.
    Matrix backward(const Matrix& grad_reconstruction, const Matrix* grad_embedding, const Adjacency& adjacency);

    /// Stateless forward pass.
    Pass evaluate(const Matrix& x, const Adjacency& adjacency) const;
    Matrix encode(const Matrix& x, const Adjacency& adjacency) const { return evaluate(x, adjacency).embedding; }

    std::vector<ParamView> parameters(const std::string& prefix = "");
    void zero_grad();

    SageLayer encoder1, encoder2, decoder1, decoder2;
    std::optional<FeatureGate> gate;

private:
    AutoencoderSpec spec_;
    SageLayer g_encoder1, g_encoder2, g_decoder1, g_decoder2;
    std::optional<FeatureGate> g_gate;
    SageCache c_encoder1, c_encoder2, c_decoder1, c_decoder2;
    Matrix input_;
    Pass pass_;
};

/// Anything optimised by full-batch gradient descent.
class Objective {
public:
    virtual ~Objective() = default;
    /// Loss at the current parameters, with gradients written to the views.
    virtual double loss_and_grad() = 0;
    virtual double loss() = 0;
    virtual std::vector<ParamView> parameters() = 0;
    /// Per-parameter learning rate, aligned with parameters().
    virtual std::vector<double> learning_rates() = 0;
    /// Named components of the most recent loss evaluation.
    virtual std::vector<std::pair<std::string, double>> components() const { return {}; }
};

/// Adam with bias-corrected moments (beta1 0.9, beta2 0.999, eps 1e-8).
class Adam {
public:
    Adam(const std::vector<ParamView>& params, std::vector<double> learning_rates);
    void step(const std::vector<ParamView>& params);

private:
    std::vector<double> lr_;
    std::vector<Matrix> m_, v_;
    int t_ = 0;
};

struct TrainReport {
    std::vector<double> loss_per_epoch;  // loss before each update
    double final_loss = 0.0;             // loss after the last update
    std::vector<std::pair<std::string, std::vector<double>>> components;
};

void to_json(nlohmann::json& j, const TrainReport& r);

/// Runs `epochs` Adam updates. Throws DivergenceError on a non-finite loss.
TrainReport optimize(Objective& objective, int epochs);

/// Reconstruction objective of a single autoencoder.
class ReconstructionObjective : public Objective {
public:
    ReconstructionObjective(GraphAutoencoder& model, const Matrix& x, const Adjacency& adjacency);
    double loss_and_grad() override;
    double loss() override;
    std::vector<ParamView> parameters() override { return model_.parameters(); }
    std::vector<double> learning_rates() override;

private:
    GraphAutoencoder& model_;
    const Matrix& x_;
    const Adjacency& adjacency_;
};

struct TrainResult {
    GraphAutoencoder model;
    Matrix embedding;
    TrainReport report;
};

TrainResult train(const AutoencoderSpec& spec, const Matrix& x, const Adjacency& adjacency);

struct SpecGrid {
    std::vector<int> hidden_dims;
    std::vector<int> latent_dims;
    std::vector<double> learning_rates;
    std::vector<bool> use_gate;
};

struct GridCell {
    AutoencoderSpec spec;
    double final_loss = 0.0;
    bool diverged = false;
};

struct GridResult {
    AutoencoderSpec best;
    std::vector<GridCell> cells;
};

/// Lowest final loss; ties go to the smaller latent_dim, then the lower
/// learning rate. Throws std::runtime_error if every cell diverged.
const GridCell& select_best(const std::vector<GridCell>& cells);

/// Trains every cell of the grid (other fields taken from `base`).
GridResult grid_search(const SpecGrid& grid, const AutoencoderSpec& base, const Matrix& x,
                       const Adjacency& adjacency);

/// Versioned JSON artifact with a shape manifest.
nlohmann::json model_to_json(GraphAutoencoder& model);
GraphAutoencoder model_from_json(const nlohmann::json& j);

/// `node_id,z1..zd`
void save_embedding_csv(const std::filesystem::path& path, const std::vector<NodeId>& ids, const Matrix& z);

}  // namespace urbanfuse::gae
