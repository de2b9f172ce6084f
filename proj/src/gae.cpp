#include "urbanfuse/gae.hpp"

#include <cmath>
#include <fstream>
#include <limits>
#include <stdexcept>

#include "urbanfuse/csv.hpp"

namespace urbanfuse::gae {

namespace {

Matrix glorot_matrix(int rows, int cols, std::mt19937_64& rng) {
    const double limit = std::sqrt(6.0 / static_cast<double>(rows + cols));
    std::uniform_real_distribution<double> dist(-limit, limit);
    Matrix m(rows, cols);
    // Fill in a fixed (row-major) order so layouts never change the draw.
    for (int r = 0; r < rows; ++r)
        for (int c = 0; c < cols; ++c) m(r, c) = dist(rng);
    return m;
}

void check_dims(const char* what, Eigen::Index got, Eigen::Index want) {
    if (got != want) {
        throw std::invalid_argument(std::string(what) + ": dimension mismatch (got " + std::to_string(got) +
                                    ", expected " + std::to_string(want) + ")");
    }
}

}  // namespace

SageLayer SageLayer::glorot(int d_in, int d_out, Activation activation, std::mt19937_64& rng) {
    SageLayer layer;
    layer.w_self = glorot_matrix(d_out, d_in, rng);
    layer.w_neigh = glorot_matrix(d_out, d_in, rng);
    layer.bias = Matrix::Zero(1, d_out);
    layer.activation = activation;
    return layer;
}

SageLayer SageLayer::zeros_like(const SageLayer& other) {
    SageLayer layer;
    layer.w_self = Matrix::Zero(other.w_self.rows(), other.w_self.cols());
    layer.w_neigh = Matrix::Zero(other.w_neigh.rows(), other.w_neigh.cols());
    layer.bias = Matrix::Zero(1, other.bias.cols());
    layer.activation = other.activation;
    return layer;
}

Matrix neighbor_mean(const Matrix& h, const Adjacency& adjacency) {
    check_dims("neighbor_mean", h.rows(), static_cast<Eigen::Index>(adjacency.size()));
    Matrix out = Matrix::Zero(h.rows(), h.cols());
    for (std::size_t v = 0; v < adjacency.size(); ++v) {
        const auto nbrs = adjacency.neighbors(v);
        if (nbrs.empty()) continue;
        const auto row = static_cast<Eigen::Index>(v);
        for (int u : nbrs) out.row(row) += h.row(u);
        out.row(row) /= static_cast<double>(nbrs.size());
    }
    return out;
}

Matrix neighbor_mean_adjoint(const Matrix& grad, const Adjacency& adjacency) {
    Matrix out = Matrix::Zero(grad.rows(), grad.cols());
    for (std::size_t v = 0; v < adjacency.size(); ++v) {
        const auto nbrs = adjacency.neighbors(v);
        if (nbrs.empty()) continue;
        const double w = 1.0 / static_cast<double>(nbrs.size());
        for (int u : nbrs) out.row(u) += w * grad.row(static_cast<Eigen::Index>(v));
    }
    return out;
}

Matrix sage_forward(const SageLayer& layer, const Matrix& h, const Adjacency& adjacency, SageCache* cache) {
    check_dims("sage_forward", h.cols(), layer.w_self.cols());
    check_dims("sage_forward (neighbor weights)", layer.w_neigh.cols(), layer.w_self.cols());
    Matrix mean = neighbor_mean(h, adjacency);
    Matrix z = h * layer.w_self.transpose() + mean * layer.w_neigh.transpose();
    z.rowwise() += layer.bias.row(0);
    if (layer.activation == Activation::relu) z = z.cwiseMax(0.0);
    if (cache) {
        cache->input = h;
        cache->neighbor_mean = std::move(mean);
        cache->output = z;
    }
    return z;
}

Matrix sage_backward(const SageLayer& layer, const SageCache& cache, const Matrix& grad_output,
                     const Adjacency& adjacency, SageLayer& grads) {
    Matrix dz = grad_output;
    if (layer.activation == Activation::relu) {
        dz = (cache.output.array() > 0.0).select(dz, 0.0);
    }
    grads.w_self.noalias() += dz.transpose() * cache.input;
    grads.w_neigh.noalias() += dz.transpose() * cache.neighbor_mean;
    grads.bias += dz.colwise().sum();
    Matrix dh = dz * layer.w_self;
    dh += neighbor_mean_adjoint(dz * layer.w_neigh, adjacency);
    return dh;
}

FeatureGate FeatureGate::glorot(int d, std::mt19937_64& rng) {
    return {glorot_matrix(d, d, rng), Matrix::Zero(1, d)};
}

FeatureGate FeatureGate::zeros_like(const FeatureGate& other) {
    return {Matrix::Zero(other.weight.rows(), other.weight.cols()), Matrix::Zero(1, other.bias.cols())};
}

GateOutput gate_forward(const FeatureGate& gate, const Matrix& x) {
    check_dims("gate_forward", x.cols(), gate.weight.cols());
    Matrix pre = x * gate.weight.transpose();
    pre.rowwise() += gate.bias.row(0);
    GateOutput out;
    out.weights = (1.0 / (1.0 + (-pre.array()).exp())).matrix();
    out.gated = x.cwiseProduct(out.weights);
    return out;
}

Matrix gate_backward(const FeatureGate& gate, const Matrix& x, const Matrix& weights, const Matrix& grad_gated,
                     FeatureGate& grads) {
    Matrix dx = grad_gated.cwiseProduct(weights);
    const Matrix dpre = (grad_gated.array() * x.array() * weights.array() * (1.0 - weights.array())).matrix();
    grads.weight.noalias() += dpre.transpose() * x;
    grads.bias += dpre.colwise().sum();
    dx.noalias() += dpre * gate.weight;
    return dx;
}

double mse(const Matrix& prediction, const Matrix& target) {
    if (target.size() == 0) return 0.0;
    return (prediction - target).squaredNorm() / static_cast<double>(target.size());
}

// ---------------------------------------------------------------- spec

void AutoencoderSpec::validate() const {
    auto fail = [](const std::string& what) { throw std::invalid_argument("autoencoder spec: " + what); };
    if (input_dim < 1 || hidden_dim < 1 || latent_dim < 1) fail("dimensions must be >= 1");
    if (latent_dim >= input_dim) {
        fail("latent_dim (" + std::to_string(latent_dim) + ") must be smaller than input_dim (" +
             std::to_string(input_dim) + ")");
    }
    if (epochs < 1) fail("epochs must be >= 1");
    if (!(learning_rate > 0.0) || !std::isfinite(learning_rate)) fail("learning_rate must be > 0");
}

void to_json(nlohmann::json& j, const AutoencoderSpec& s) {
    j = nlohmann::json{{"input_dim", s.input_dim},   {"hidden_dim", s.hidden_dim}, {"latent_dim", s.latent_dim},
                       {"use_gate", s.use_gate},     {"epochs", s.epochs},         {"learning_rate", s.learning_rate},
                       {"seed", s.seed}};
}

void from_json(const nlohmann::json& j, AutoencoderSpec& s) {
    AutoencoderSpec d;
    s.input_dim = j.value("input_dim", d.input_dim);
    s.hidden_dim = j.value("hidden_dim", d.hidden_dim);
    s.latent_dim = j.value("latent_dim", d.latent_dim);
    s.use_gate = j.value("use_gate", d.use_gate);
    s.epochs = j.value("epochs", d.epochs);
    s.learning_rate = j.value("learning_rate", d.learning_rate);
    s.seed = j.value("seed", d.seed);
}

// ---------------------------------------------------------------- autoencoder

GraphAutoencoder::GraphAutoencoder(const AutoencoderSpec& spec) : spec_(spec) {
    spec_.validate();
    auto rng = rng_stream(spec.seed, streams::kWeightInit);
    if (spec.use_gate) gate = FeatureGate::glorot(spec.input_dim, rng);
    encoder1 = SageLayer::glorot(spec.input_dim, spec.hidden_dim, Activation::relu, rng);
    encoder2 = SageLayer::glorot(spec.hidden_dim, spec.latent_dim, Activation::identity, rng);
    decoder1 = SageLayer::glorot(spec.latent_dim, spec.hidden_dim, Activation::relu, rng);
    decoder2 = SageLayer::glorot(spec.hidden_dim, spec.input_dim, Activation::identity, rng);
    zero_grad();
}

void GraphAutoencoder::zero_grad() {
    g_encoder1 = SageLayer::zeros_like(encoder1);
    g_encoder2 = SageLayer::zeros_like(encoder2);
    g_decoder1 = SageLayer::zeros_like(decoder1);
    g_decoder2 = SageLayer::zeros_like(decoder2);
    if (gate) g_gate = FeatureGate::zeros_like(*gate);
}

const GraphAutoencoder::Pass& GraphAutoencoder::forward(const Matrix& x, const Adjacency& adjacency) {
    check_dims("autoencoder input", x.cols(), spec_.input_dim);
    input_ = x;
    const Matrix* h = &x;
    Matrix gated;
    pass_.gate_weights.resize(0, 0);
    if (gate) {
        auto g = gate_forward(*gate, x);
        gated = std::move(g.gated);
        pass_.gate_weights = std::move(g.weights);
        h = &gated;
    }
    const Matrix h1 = sage_forward(encoder1, *h, adjacency, &c_encoder1);
    pass_.embedding = sage_forward(encoder2, h1, adjacency, &c_encoder2);
    const Matrix h3 = sage_forward(decoder1, pass_.embedding, adjacency, &c_decoder1);
    pass_.reconstruction = sage_forward(decoder2, h3, adjacency, &c_decoder2);
    return pass_;
}

Matrix GraphAutoencoder::backward(const Matrix& grad_reconstruction, const Matrix* grad_embedding,
                                  const Adjacency& adjacency) {
    Matrix g = sage_backward(decoder2, c_decoder2, grad_reconstruction, adjacency, g_decoder2);
    g = sage_backward(decoder1, c_decoder1, g, adjacency, g_decoder1);
    if (grad_embedding) g += *grad_embedding;
    g = sage_backward(encoder2, c_encoder2, g, adjacency, g_encoder2);
    g = sage_backward(encoder1, c_encoder1, g, adjacency, g_encoder1);
    if (gate) g = gate_backward(*gate, input_, pass_.gate_weights, g, *g_gate);
    return g;
}

GraphAutoencoder::Pass GraphAutoencoder::evaluate(const Matrix& x, const Adjacency& adjacency) const {
    check_dims("autoencoder input", x.cols(), spec_.input_dim);
    Pass pass;
    Matrix h = x;
    if (gate) {
        auto g = gate_forward(*gate, x);
        h = std::move(g.gated);
        pass.gate_weights = std::move(g.weights);
    }
    h = sage_forward(encoder1, h, adjacency);
    pass.embedding = sage_forward(encoder2, h, adjacency);
    h = sage_forward(decoder1, pass.embedding, adjacency);
    pass.reconstruction = sage_forward(decoder2, h, adjacency);
    return pass;
}

std::vector<ParamView> GraphAutoencoder::parameters(const std::string& prefix) {
    std::vector<ParamView> out;
    if (gate) {
        out.push_back({prefix + "gate.weight", gate->weight, g_gate->weight});
        out.push_back({prefix + "gate.bias", gate->bias, g_gate->bias});
    }
    auto add = [&](const std::string& name, SageLayer& layer, SageLayer& grad) {
        out.push_back({prefix + name + ".w_self", layer.w_self, grad.w_self});
        out.push_back({prefix + name + ".w_neigh", layer.w_neigh, grad.w_neigh});
        out.push_back({prefix + name + ".bias", layer.bias, grad.bias});
    };
    add("encoder1", encoder1, g_encoder1);
    add("encoder2", encoder2, g_encoder2);
    add("decoder1", decoder1, g_decoder1);
    add("decoder2", decoder2, g_decoder2);
    return out;
}

// ---------------------------------------------------------------- optimisation

Adam::Adam(const std::vector<ParamView>& params, std::vector<double> learning_rates) : lr_(std::move(learning_rates)) {
    if (lr_.size() != params.size()) throw std::invalid_argument("Adam: one learning rate per parameter required");
    for (const auto& p : params) {
        m_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
        v_.push_back(Matrix::Zero(p.value.rows(), p.value.cols()));
    }
}

void Adam::step(const std::vector<ParamView>& params) {
    constexpr double beta1 = 0.9;
    constexpr double beta2 = 0.999;
    constexpr double eps = 1e-8;
    ++t_;
    const double c1 = 1.0 - std::pow(beta1, t_);
    const double c2 = 1.0 - std::pow(beta2, t_);
    for (std::size_t i = 0; i < params.size(); ++i) {
        const Matrix& g = params[i].grad;
        m_[i] = beta1 * m_[i] + (1.0 - beta1) * g;
        v_[i] = beta2 * v_[i] + (1.0 - beta2) * g.cwiseAbs2();
        params[i].value.array() -= lr_[i] * (m_[i].array() / c1) / ((v_[i].array() / c2).sqrt() + eps);
    }
}

void to_json(nlohmann::json& j, const TrainReport& r) {
    j = nlohmann::json{{"final_loss", r.final_loss}, {"loss_per_epoch", r.loss_per_epoch}};
    if (!r.components.empty()) {
        nlohmann::json comps = nlohmann::json::object();
        for (const auto& [name, trace] : r.components) comps[name] = trace;
        j["components"] = comps;
    }
}

TrainReport optimize(Objective& objective, int epochs) {
    auto params = objective.parameters();
    Adam adam(params, objective.learning_rates());
    TrainReport report;
    auto record_components = [&] {
        const auto comps = objective.components();
        if (report.components.empty()) {
            for (const auto& [name, _] : comps) report.components.emplace_back(name, std::vector<double>{});
        }
        for (std::size_t i = 0; i < comps.size(); ++i) report.components[i].second.push_back(comps[i].second);
    };
    for (int epoch = 0; epoch < epochs; ++epoch) {
        for (auto& p : params) p.grad.setZero();
        const double loss = objective.loss_and_grad();
        if (!std::isfinite(loss)) {
            const double last = report.loss_per_epoch.empty() ? std::numeric_limits<double>::quiet_NaN()
                                                              : report.loss_per_epoch.back();
            throw DivergenceError("training diverged at epoch " + std::to_string(epoch), epoch - 1, last);
        }
        report.loss_per_epoch.push_back(loss);
        record_components();
        adam.step(params);
    }
    report.final_loss = objective.loss();
    if (!std::isfinite(report.final_loss)) {
        throw DivergenceError("training diverged after the final update", epochs - 1, report.loss_per_epoch.back());
    }
    return report;
}

ReconstructionObjective::ReconstructionObjective(GraphAutoencoder& model, const Matrix& x, const Adjacency& adjacency)
    : model_(model), x_(x), adjacency_(adjacency) {}

double ReconstructionObjective::loss_and_grad() {
    const auto& pass = model_.forward(x_, adjacency_);
    const double loss = mse(pass.reconstruction, x_);
    const Matrix grad = (2.0 / static_cast<double>(x_.size())) * (pass.reconstruction - x_);
    model_.backward(grad, nullptr, adjacency_);
    return loss;
}

double ReconstructionObjective::loss() { return mse(model_.evaluate(x_, adjacency_).reconstruction, x_); }

std::vector<double> ReconstructionObjective::learning_rates() {
    return std::vector<double>(model_.parameters().size(), model_.spec().learning_rate);
}

TrainResult train(const AutoencoderSpec& spec, const Matrix& x, const Adjacency& adjacency) {
    check_dims("train: feature rows vs graph nodes", x.rows(), static_cast<Eigen::Index>(adjacency.size()));
    GraphAutoencoder model(spec);
    ReconstructionObjective objective(model, x, adjacency);
    TrainReport report = optimize(objective, spec.epochs);
    Matrix embedding = model.encode(x, adjacency);
    return {std::move(model), std::move(embedding), std::move(report)};
}

// ---------------------------------------------------------------- grid search

const GridCell& select_best(const std::vector<GridCell>& cells) {
    const GridCell* best = nullptr;
    for (const auto& cell : cells) {
        if (cell.diverged) continue;
        if (!best) {
            best = &cell;
            continue;
        }
        const auto key = [](const GridCell& c) {
            return std::tuple(c.final_loss, c.spec.latent_dim, c.spec.learning_rate);
        };
        if (key(cell) < key(*best)) best = &cell;
    }
    if (!best) throw std::runtime_error("grid search: every cell diverged");
    return *best;
}

GridResult grid_search(const SpecGrid& grid, const AutoencoderSpec& base, const Matrix& x, const Adjacency& adjacency) {
    auto or_base = [](const auto& values, auto fallback) {
        using T = std::decay_t<decltype(fallback)>;
        return values.empty() ? std::vector<T>{fallback} : std::vector<T>(values.begin(), values.end());
    };
    const auto hidden = or_base(grid.hidden_dims, base.hidden_dim);
    const auto latent = or_base(grid.latent_dims, base.latent_dim);
    const auto rates = or_base(grid.learning_rates, base.learning_rate);
    const auto gates = or_base(grid.use_gate, base.use_gate);
    GridResult result;
    for (int h : hidden) {
        for (int l : latent) {
            for (double lr : rates) {
                for (bool g : gates) {
                    GridCell cell;
                    cell.spec = base;
                    cell.spec.input_dim = static_cast<int>(x.cols());
                    cell.spec.hidden_dim = h;
                    cell.spec.latent_dim = l;
                    cell.spec.learning_rate = lr;
                    cell.spec.use_gate = g;
                    try {
                        cell.final_loss = train(cell.spec, x, adjacency).report.final_loss;
                    } catch (const DivergenceError&) {
                        cell.diverged = true;
                        cell.final_loss = std::numeric_limits<double>::infinity();
                    }
                    result.cells.push_back(cell);
                }
            }
        }
    }
    result.best = select_best(result.cells).spec;
    return result;
}

// ---------------------------------------------------------------- serialization

namespace {

nlohmann::json matrix_json(const Matrix& m) {
    std::vector<double> data;
    data.reserve(static_cast<std::size_t>(m.size()));
    for (Eigen::Index r = 0; r < m.rows(); ++r)
        for (Eigen::Index c = 0; c < m.cols(); ++c) data.push_back(m(r, c));
    return {{"rows", m.rows()}, {"cols", m.cols()}, {"data", data}};
}

Matrix matrix_from_json(const nlohmann::json& j) {
    const auto rows = j.at("rows").get<Eigen::Index>();
    const auto cols = j.at("cols").get<Eigen::Index>();
    const auto data = j.at("data").get<std::vector<double>>();
    if (static_cast<Eigen::Index>(data.size()) != rows * cols) throw DataError("model artifact: matrix size mismatch");
    Matrix m(rows, cols);
    for (Eigen::Index r = 0; r < rows; ++r)
        for (Eigen::Index c = 0; c < cols; ++c) m(r, c) = data[static_cast<std::size_t>(r * cols + c)];
    return m;
}

constexpr int kModelFormatVersion = 1;

}  // namespace

nlohmann::json model_to_json(GraphAutoencoder& model) {
    nlohmann::json params = nlohmann::json::object();
    nlohmann::json shapes = nlohmann::json::object();
    for (const auto& p : model.parameters()) {
        params[p.name] = matrix_json(p.value);
        shapes[p.name] = {p.value.rows(), p.value.cols()};
    }
    return {{"format", "urbanfuse-gae"},
            {"version", kModelFormatVersion},
            {"spec", model.spec()},
            {"shapes", shapes},
            {"parameters", params}};
}

GraphAutoencoder model_from_json(const nlohmann::json& j) {
    if (j.value("format", "") != "urbanfuse-gae" || j.value("version", 0) != kModelFormatVersion) {
        throw DataError("model artifact: unsupported format or version");
    }
    GraphAutoencoder model(j.at("spec").get<AutoencoderSpec>());
    for (const auto& p : model.parameters()) {
        Matrix m = matrix_from_json(j.at("parameters").at(p.name));
        if (m.rows() != p.value.rows() || m.cols() != p.value.cols()) {
            throw DataError("model artifact: shape mismatch for " + p.name);
        }
        p.value = std::move(m);
    }
    return model;
}

void save_embedding_csv(const std::filesystem::path& path, const std::vector<NodeId>& ids, const Matrix& z) {
    std::vector<std::string> header{"node_id"};
    for (Eigen::Index c = 0; c < z.cols(); ++c) header.push_back("z" + std::to_string(c + 1));
    csv::write_matrix(path, header, ids, z);
}

}  // namespace urbanfuse::gae
