#include "urbanfuse/fusion.hpp"

#include <fstream>
#include <stdexcept>

#include "urbanfuse/csv.hpp"

namespace urbanfuse::fusion {

std::string_view artifact_name(FusionKind kind) {
    switch (kind) {
        case FusionKind::m1_static: return "m1_static";
        case FusionKind::m1_dynamic: return "m1_dynamic";
        case FusionKind::m2_early: return "m2";
        case FusionKind::m3_late: return "m3";
        case FusionKind::m4_hierarchical: return "m4";
    }
    return "";
}

std::string_view display_name(FusionKind kind) {
    switch (kind) {
        case FusionKind::m1_static: return "M1-Static";
        case FusionKind::m1_dynamic: return "M1-Dynamic";
        case FusionKind::m2_early: return "M2";
        case FusionKind::m3_late: return "M3";
        case FusionKind::m4_hierarchical: return "M4";
    }
    return "";
}

std::optional<FusionKind> kind_from_name(std::string_view name) {
    for (auto kind : kAllKinds) {
        if (name == artifact_name(kind) || name == display_name(kind)) return kind;
    }
    return std::nullopt;
}

ModelSpecs ModelSpecs::defaults_for(const Dataset& dataset, std::uint64_t seed) {
    const int p = static_cast<int>(dataset.num_static());
    const int t = static_cast<int>(dataset.num_timesteps());
    ModelSpecs s;
    s.static_spec = {p, 64, std::min(16, std::max(1, p - 1)), false, 300, 1e-3, splitmix64(seed ^ 0x51)};
    s.dynamic_spec = {t, 64, std::min(32, std::max(1, t - 1)), false, 300, 1e-3, splitmix64(seed ^ 0xd1)};
    s.early_spec = {p + t, 64, std::min(32, std::max(1, p + t - 1)), true, 300, 1e-3, splitmix64(seed ^ 0xe2)};
    const int fused = s.static_spec.latent_dim + s.dynamic_spec.latent_dim;
    s.top_spec = {fused, 64, std::min(32, std::max(1, fused - 1)), true, 300, 1e-3, splitmix64(seed ^ 0x74)};
    return s;
}

void to_json(nlohmann::json& j, const ModelSpecs& s) {
    j = nlohmann::json{{"static", s.static_spec},
                       {"dynamic", s.dynamic_spec},
                       {"early", s.early_spec},
                       {"top", s.top_spec},
                       {"weights",
                        {{"static", s.weights.w_static}, {"dynamic", s.weights.w_dynamic}, {"top", s.weights.w_top}}}};
}

ModelSpecs specs_from_json(const nlohmann::json& j, const ModelSpecs& defaults) {
    ModelSpecs s = defaults;
    auto merge = [&](const char* key, gae::AutoencoderSpec& spec) {
        if (!j.contains(key)) return;
        nlohmann::json base = spec;
        base.merge_patch(j.at(key));
        spec = base.get<gae::AutoencoderSpec>();
    };
    merge("static", s.static_spec);
    merge("dynamic", s.dynamic_spec);
    merge("early", s.early_spec);
    merge("top", s.top_spec);
    // Derived input sizes always follow the data and the sub-model latents.
    s.static_spec.input_dim = defaults.static_spec.input_dim;
    s.dynamic_spec.input_dim = defaults.dynamic_spec.input_dim;
    s.early_spec.input_dim = defaults.early_spec.input_dim;
    s.top_spec.input_dim = s.static_spec.latent_dim + s.dynamic_spec.latent_dim;
    if (j.contains("weights")) {
        const auto& w = j.at("weights");
        s.weights.w_static = w.value("static", s.weights.w_static);
        s.weights.w_dynamic = w.value("dynamic", s.weights.w_dynamic);
        s.weights.w_top = w.value("top", s.weights.w_top);
    }
    return s;
}

namespace {

gae::AutoencoderSpec with_gate(gae::AutoencoderSpec spec, bool gate) {
    spec.use_gate = gate;
    return spec;
}

Matrix concat_columns(const Matrix& a, const Matrix& b) {
    if (a.rows() != b.rows()) throw std::invalid_argument("concatenation: row counts differ");
    Matrix out(a.rows(), a.cols() + b.cols());
    out << a, b;
    return out;
}

}  // namespace

M1Result train_m1(const Dataset& dataset, const gae::AutoencoderSpec& spec_static,
                  const gae::AutoencoderSpec& spec_dynamic) {
    const auto& adj = dataset.graph.adjacency();
    return {gae::train(with_gate(spec_static, false), dataset.static_features, adj),
            gae::train(with_gate(spec_dynamic, false), dataset.dynamic_series, adj)};
}

gae::TrainResult train_m2(const Dataset& dataset, const gae::AutoencoderSpec& spec) {
    const Matrix x = concat_columns(dataset.static_features, dataset.dynamic_series);
    return gae::train(with_gate(spec, true), x, dataset.graph.adjacency());
}

Matrix train_m3(const Matrix& z_static, const Matrix& z_dynamic) { return concat_columns(z_static, z_dynamic); }

// ---------------------------------------------------------------- M4

HierarchicalModel::HierarchicalModel(const Dataset& dataset, const gae::AutoencoderSpec& spec_static,
                                     const gae::AutoencoderSpec& spec_dynamic, const gae::AutoencoderSpec& spec_top,
                                     const HierarchyWeights& weights)
    : static_model(with_gate(spec_static, false)),
      dynamic_model(with_gate(spec_dynamic, false)),
      top_model(with_gate(spec_top, true)),
      adjacency_(dataset.graph.adjacency()),
      x_static_(dataset.static_features),
      x_dynamic_(dataset.dynamic_series),
      weights_(weights) {
    if (spec_top.input_dim != spec_static.latent_dim + spec_dynamic.latent_dim) {
        throw std::invalid_argument("M4: top input_dim (" + std::to_string(spec_top.input_dim) +
                                    ") must equal latent_static + latent_dynamic (" +
                                    std::to_string(spec_static.latent_dim + spec_dynamic.latent_dim) + ")");
    }
}

double HierarchicalModel::loss_and_grad() {
    const auto& ps = static_model.forward(x_static_, adjacency_);
    const auto& pd = dynamic_model.forward(x_dynamic_, adjacency_);
    const Matrix fused = concat_columns(ps.embedding, pd.embedding);
    const auto& pt = top_model.forward(fused, adjacency_);

    last_static_ = gae::mse(ps.reconstruction, x_static_);
    last_dynamic_ = gae::mse(pd.reconstruction, x_dynamic_);
    last_top_ = gae::mse(pt.reconstruction, fused);

    // The top target is the fused embedding itself, so its gradient reaches
    // the sub-encoders through both the input and the target.
    const Matrix top_residual = (2.0 * weights_.w_top / static_cast<double>(fused.size())) * (pt.reconstruction - fused);
    Matrix d_fused = top_model.backward(top_residual, nullptr, adjacency_);
    d_fused -= top_residual;

    const auto ls = static_cast<Eigen::Index>(ps.embedding.cols());
    const Matrix d_zs = d_fused.leftCols(ls);
    const Matrix d_zd = d_fused.rightCols(d_fused.cols() - ls);
    const Matrix gs = (2.0 * weights_.w_static / static_cast<double>(x_static_.size())) * (ps.reconstruction - x_static_);
    const Matrix gd =
        (2.0 * weights_.w_dynamic / static_cast<double>(x_dynamic_.size())) * (pd.reconstruction - x_dynamic_);
    static_model.backward(gs, &d_zs, adjacency_);
    dynamic_model.backward(gd, &d_zd, adjacency_);

    return weights_.w_static * last_static_ + weights_.w_dynamic * last_dynamic_ + weights_.w_top * last_top_;
}

double HierarchicalModel::loss() {
    const auto ps = static_model.evaluate(x_static_, adjacency_);
    const auto pd = dynamic_model.evaluate(x_dynamic_, adjacency_);
    const Matrix fused = concat_columns(ps.embedding, pd.embedding);
    const auto pt = top_model.evaluate(fused, adjacency_);
    last_static_ = gae::mse(ps.reconstruction, x_static_);
    last_dynamic_ = gae::mse(pd.reconstruction, x_dynamic_);
    last_top_ = gae::mse(pt.reconstruction, fused);
    return weights_.w_static * last_static_ + weights_.w_dynamic * last_dynamic_ + weights_.w_top * last_top_;
}

std::vector<gae::ParamView> HierarchicalModel::parameters() {
    auto out = static_model.parameters("static.");
    auto d = dynamic_model.parameters("dynamic.");
    auto t = top_model.parameters("top.");
    for (auto& p : d) out.push_back(p);
    for (auto& p : t) out.push_back(p);
    return out;
}

std::vector<double> HierarchicalModel::learning_rates() {
    std::vector<double> out(static_model.parameters().size(), static_model.spec().learning_rate);
    out.insert(out.end(), dynamic_model.parameters().size(), dynamic_model.spec().learning_rate);
    out.insert(out.end(), top_model.parameters().size(), top_model.spec().learning_rate);
    return out;
}

std::vector<std::pair<std::string, double>> HierarchicalModel::components() const {
    return {{"static", last_static_}, {"dynamic", last_dynamic_}, {"top", last_top_}};
}

Matrix HierarchicalModel::intermediate() const {
    return concat_columns(static_model.encode(x_static_, adjacency_), dynamic_model.encode(x_dynamic_, adjacency_));
}

Matrix HierarchicalModel::embedding() const { return top_model.encode(intermediate(), adjacency_); }

M4Result train_m4(const Dataset& dataset, const gae::AutoencoderSpec& spec_static,
                  const gae::AutoencoderSpec& spec_dynamic, const gae::AutoencoderSpec& spec_top,
                  const HierarchyWeights& weights) {
    HierarchicalModel model(dataset, spec_static, spec_dynamic, spec_top, weights);
    M4Result out;
    out.report = gae::optimize(model, spec_top.epochs);
    out.embedding = model.embedding();
    out.spec_static = model.static_model.spec();
    out.spec_dynamic = model.dynamic_model.spec();
    out.spec_top = model.top_model.spec();
    return out;
}

// ---------------------------------------------------------------- sets

const Matrix& EmbeddingSet::embedding(FusionKind kind) const {
    auto it = models.find(kind);
    if (it == models.end()) throw DataError("embedding set: missing " + std::string(display_name(kind)));
    return it->second.embedding;
}

EmbeddingSet train_all(const Dataset& dataset, const ModelSpecs& specs) {
    EmbeddingSet set;
    auto m1 = train_m1(dataset, specs.static_spec, specs.dynamic_spec);
    set.models[FusionKind::m3_late] = {train_m3(m1.static_model.embedding, m1.dynamic_model.embedding),
                                       std::nullopt,
                                       {m1.static_model.model.spec(), m1.dynamic_model.model.spec()}};
    set.models[FusionKind::m1_static] = {std::move(m1.static_model.embedding), std::move(m1.static_model.report),
                                         {m1.static_model.model.spec()}};
    set.models[FusionKind::m1_dynamic] = {std::move(m1.dynamic_model.embedding), std::move(m1.dynamic_model.report),
                                          {m1.dynamic_model.model.spec()}};
    auto m2 = train_m2(dataset, specs.early_spec);
    set.models[FusionKind::m2_early] = {std::move(m2.embedding), std::move(m2.report), {m2.model.spec()}};
    auto m4 = train_m4(dataset, specs.static_spec, specs.dynamic_spec, specs.top_spec, specs.weights);
    set.models[FusionKind::m4_hierarchical] = {std::move(m4.embedding), std::move(m4.report),
                                               {m4.spec_static, m4.spec_dynamic, m4.spec_top}};
    return set;
}

void save_embedding_set(const EmbeddingSet& set, const std::vector<NodeId>& ids, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    nlohmann::json manifest = {{"format", "urbanfuse-embeddings"}, {"version", 1}};
    nlohmann::json models = nlohmann::json::object();
    for (const auto& [kind, trained] : set.models) {
        const std::string name(artifact_name(kind));
        gae::save_embedding_csv(dir / (name + ".csv"), ids, trained.embedding);
        nlohmann::json entry = {{"display_name", display_name(kind)},
                                {"file", name + ".csv"},
                                {"shape", {trained.embedding.rows(), trained.embedding.cols()}},
                                {"specs", trained.specs}};
        if (trained.report) entry["report"] = *trained.report;
        models[name] = entry;
    }
    manifest["models"] = models;
    std::ofstream(dir / "manifest.json", std::ios::binary) << manifest.dump(2) << '\n';
}

EmbeddingSet load_embedding_set(const std::filesystem::path& dir, const std::vector<NodeId>& ids) {
    EmbeddingSet set;
    nlohmann::json manifest;
    if (std::ifstream in(dir / "manifest.json"); in) manifest = nlohmann::json::parse(in);
    for (auto kind : kAllKinds) {
        const std::string name(artifact_name(kind));
        const auto path = dir / (name + ".csv");
        if (!std::filesystem::exists(path)) {
            throw DataError("embedding set: missing " + std::string(display_name(kind)) + " (" + path.string() + ")");
        }
        auto m = csv::read_matrix(path);
        if (m.ids != ids) throw DataError(path.string() + ": node order differs from the dataset");
        TrainedEmbedding t;
        t.embedding = std::move(m.values);
        if (manifest.contains("models") && manifest["models"].contains(name)) {
            const auto& entry = manifest["models"][name];
            t.specs = entry.value("specs", std::vector<gae::AutoencoderSpec>{});
            if (entry.contains("report")) {
                gae::TrainReport r;
                r.final_loss = entry["report"].at("final_loss").get<double>();
                r.loss_per_epoch = entry["report"].at("loss_per_epoch").get<std::vector<double>>();
                t.report = std::move(r);
            }
        }
        set.models[kind] = std::move(t);
    }
    return set;
}

}  // namespace urbanfuse::fusion
