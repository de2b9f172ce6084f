#include "urbanfuse/session.hpp"

#include <cstdio>
#include <fstream>
#include <iomanip>
#include <sstream>

#include "urbanfuse/csv.hpp"

namespace urbanfuse::pipeline {

using fusion::FusionKind;

// ---------------------------------------------------------------- config

namespace {

constexpr std::uint64_t kSeedSynth = 0x5e;
constexpr std::uint64_t kSeedModels = 0x30;
constexpr std::uint64_t kSeedEval = 0xe7;
constexpr std::uint64_t kSeedTsne = 0x75;
constexpr std::uint64_t kSeedGraph = 0x6a;

std::uint64_t derive(std::uint64_t master, std::uint64_t tag) { return splitmix64(master ^ splitmix64(tag)); }

nlohmann::json path_or_null(const std::optional<std::filesystem::path>& p) {
    return p ? nlohmann::json(p->generic_string()) : nlohmann::json(nullptr);
}

std::optional<std::filesystem::path> optional_path(const nlohmann::json& j, const char* key) {
    if (!j.contains(key) || j.at(key).is_null()) return std::nullopt;
    return std::filesystem::path(j.at(key).get<std::string>());
}

template <class F>
auto in_stage(const std::string& stage, F&& body) {
    try {
        return body();
    } catch (const StageError&) {
        throw;
    } catch (const std::exception& e) {
        throw StageError(stage, e.what());
    }
}

}  // namespace

void ExperimentConfig::set_seed(std::uint64_t master) {
    seed = master;
    synth.seed = derive(master, kSeedSynth);
    tsne.seed = derive(master, kSeedTsne);
}

std::uint64_t ExperimentConfig::eval_seed() const { return derive(seed, kSeedEval); }

std::optional<std::size_t> ExperimentConfig::effective_subsample_cap() const {
    if (eval.subsample_cap) return eval.subsample_cap;
    if (mode == Mode::real) return std::size_t{200};
    return std::nullopt;
}

nlohmann::json ExperimentConfig::to_json() const {
    nlohmann::json j;
    j["mode"] = mode == Mode::synthetic ? "synthetic" : "real";
    j["seed"] = seed;
    j["graph"] = {{"nodes", path_or_null(graph.nodes)},
                  {"edges", path_or_null(graph.edges)},
                  {"grid_rows", graph.grid_rows},
                  {"grid_cols", graph.grid_cols},
                  {"drop_fraction", graph.drop_fraction}};
    j["synth"] = synth;
    j["dataset_dir"] = path_or_null(dataset_dir);
    j["normalization"] = to_string(normalization);
    j["models"] = model_overrides;
    j["eval"] = {{"k", eval.k},
                 {"subsample_cap", eval.subsample_cap ? nlohmann::json(*eval.subsample_cap) : nlohmann::json(nullptr)}};
    j["tsne"] = tsne;
    return j;
}

ExperimentConfig ExperimentConfig::from_json(const nlohmann::json& j) {
    ExperimentConfig c;
    const auto mode = j.value("mode", std::string("synthetic"));
    if (mode == "synthetic") c.mode = Mode::synthetic;
    else if (mode == "real") c.mode = Mode::real;
    else throw std::invalid_argument("config: mode must be 'synthetic' or 'real'");
    if (j.contains("graph")) {
        const auto& g = j.at("graph");
        c.graph.nodes = optional_path(g, "nodes");
        c.graph.edges = optional_path(g, "edges");
        c.graph.grid_rows = g.value("grid_rows", c.graph.grid_rows);
        c.graph.grid_cols = g.value("grid_cols", c.graph.grid_cols);
        c.graph.drop_fraction = g.value("drop_fraction", c.graph.drop_fraction);
        if (c.graph.nodes.has_value() != c.graph.edges.has_value()) {
            throw std::invalid_argument("config: graph.nodes and graph.edges must be given together");
        }
    }
    if (j.contains("synth")) c.synth = j.at("synth").get<synth::SynthConfig>();
    c.dataset_dir = optional_path(j, "dataset_dir");
    if (c.mode == Mode::real && !c.dataset_dir) throw std::invalid_argument("config: real mode needs dataset_dir");
    c.normalization = norm_scheme_from_string(j.value("normalization", std::string("min-max")));
    if (j.contains("models")) c.model_overrides = j.at("models");
    if (j.contains("eval")) {
        const auto& e = j.at("eval");
        c.eval.k = e.value("k", c.eval.k);
        if (e.contains("subsample_cap") && !e.at("subsample_cap").is_null()) {
            c.eval.subsample_cap = e.at("subsample_cap").get<std::size_t>();
        }
        if (c.eval.k < 2) throw std::invalid_argument("config: eval.k must be >= 2");
    }
    if (j.contains("tsne")) c.tsne = j.at("tsne").get<tsne::TsneConfig>();
    c.set_seed(j.value("seed", std::uint64_t{1}));
    return c;
}

ExperimentConfig ExperimentConfig::load(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw std::runtime_error(path.string() + ": cannot open config");
    auto c = from_json(nlohmann::json::parse(in));
    // Relative data paths are taken relative to the config file.
    const auto base = path.parent_path();
    auto resolve = [&](std::optional<std::filesystem::path>& p) {
        if (p && p->is_relative()) p = std::filesystem::weakly_canonical(base / *p);
    };
    resolve(c.graph.nodes);
    resolve(c.graph.edges);
    resolve(c.dataset_dir);
    return c;
}

std::string ExperimentConfig::hash() const {
    const std::string text = to_json().dump();
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

// ---------------------------------------------------------------- layout

std::filesystem::path SessionLayout::embedding(FusionKind k) const {
    return embeddings_dir() / (std::string(fusion::artifact_name(k)) + ".csv");
}
std::filesystem::path SessionLayout::projection(FusionKind k) const {
    return root / ("proj_" + std::string(fusion::artifact_name(k)) + ".csv");
}
std::filesystem::path SessionLayout::evaluation(FusionKind k) const {
    return root / ("eval_" + std::string(fusion::artifact_name(k)) + ".csv");
}
std::filesystem::path SessionLayout::quadrants(FusionKind k) const {
    return root / ("quadrants_" + std::string(fusion::artifact_name(k)) + ".json");
}
std::filesystem::path SessionLayout::clusters(FusionKind k) const {
    return root / ("clusters_" + std::string(fusion::artifact_name(k)) + ".csv");
}

SessionLayout SessionLayout::for_config(const std::filesystem::path& base, const ExperimentConfig& config) {
    return {base / ("session-" + config.hash())};
}

// ---------------------------------------------------------------- artifacts

void save_evaluation_csv(const std::filesystem::path& path, const std::vector<metrics::SilhouettePair>& pairs) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot write file");
    out << "cluster_a,cluster_b,s_static,s_dynamic\n";
    for (const auto& p : pairs) {
        out << p.cluster_a << ',' << p.cluster_b << ',' << csv::format(p.s_static) << ',' << csv::format(p.s_dynamic)
            << '\n';
    }
}

std::vector<metrics::SilhouettePair> load_evaluation_csv(const std::filesystem::path& path) {
    const auto table = csv::read(path);
    const auto ca = table.column("cluster_a");
    const auto cb = table.column("cluster_b");
    const auto cs = table.column("s_static");
    const auto cd = table.column("s_dynamic");
    std::vector<metrics::SilhouettePair> pairs;
    for (std::size_t r = 0; r < table.rows.size(); ++r) {
        const auto& row = table.rows[r];
        pairs.push_back({static_cast<int>(csv::parse_int(row[ca], table, r, ca)),
                         static_cast<int>(csv::parse_int(row[cb], table, r, cb)), csv::parse_double(row[cs], table, r, cs),
                         csv::parse_double(row[cd], table, r, cd)});
    }
    return pairs;
}

void save_projection_csv(const std::filesystem::path& path, const std::vector<NodeId>& ids, const Matrix& coords) {
    csv::write_matrix(path, {"node_id", "x", "y"}, ids, coords);
}

namespace {

nlohmann::json quadrant_json(FusionKind kind, const metrics::QuadrantSummary& q) {
    return {{"model", fusion::display_name(kind)},
            {"counts",
             {{"top_right", q.top_right}, {"top_left", q.top_left}, {"bottom_right", q.bottom_right},
              {"bottom_left", q.bottom_left}}},
            {"fractions",
             {{"top_right", q.fraction(q.top_right)},
              {"top_left", q.fraction(q.top_left)},
              {"bottom_right", q.fraction(q.bottom_right)},
              {"bottom_left", q.fraction(q.bottom_left)}}},
            {"pairs", q.total()}};
}

void write_json(const std::filesystem::path& path, const nlohmann::json& j) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error(path.string() + ": cannot write file");
    out << j.dump(2) << '\n';
}

fusion::ModelSpecs resolve_specs(const ExperimentConfig& config, const Dataset& normalized) {
    const auto defaults = fusion::ModelSpecs::defaults_for(normalized, derive(config.seed, kSeedModels));
    return fusion::specs_from_json(config.model_overrides, defaults);
}

}  // namespace

LoadedDataset load_session_dataset(const SessionLayout& layout, const ExperimentConfig& config) {
    LoadedDataset out;
    out.raw = load_dataset(DatasetPaths::in_directory(layout.dataset_dir()));
    out.normalized = normalize_features(out.raw, config.normalization);
    return out;
}

// ---------------------------------------------------------------- stages

void stage_generate(const ExperimentConfig& config, const SessionLayout& layout) {
    in_stage("generate", [&] {
        std::filesystem::create_directories(layout.root);
        write_json(layout.config(), config.to_json());
        Dataset dataset;
        if (config.mode == Mode::real) {
            dataset = load_dataset(DatasetPaths::in_directory(*config.dataset_dir));
        } else {
            const StreetGraph graph =
                config.graph.nodes
                    ? load_graph(*config.graph.nodes, *config.graph.edges)
                    : synth::grid_street_graph(config.graph.grid_rows, config.graph.grid_cols,
                                               derive(config.seed, kSeedGraph), config.graph.drop_fraction);
            dataset = synth::generate(graph, config.synth);
        }
        save_dataset(dataset, layout.dataset_dir());
    });
}

void stage_train(const ExperimentConfig& config, const SessionLayout& layout) {
    in_stage("train", [&] {
        const auto data = load_session_dataset(layout, config);
        const auto specs = resolve_specs(config, data.normalized);
        const auto set = fusion::train_all(data.normalized, specs);
        fusion::save_embedding_set(set, data.raw.graph.ids(), layout.embeddings_dir());
    });
}

std::map<fusion::FusionKind, metrics::EmbeddingEvaluation> stage_evaluate(const ExperimentConfig& config,
                                                                          const SessionLayout& layout) {
    std::map<fusion::FusionKind, metrics::EmbeddingEvaluation> out;
    in_stage("evaluate", [&] {
        const auto data = load_session_dataset(layout, config);
        const auto set = fusion::load_embedding_set(layout.embeddings_dir(), data.raw.graph.ids());
        metrics::OriginalSpaceDistances distances(data.normalized);
        const metrics::EvalOptions options{config.eval.k, config.eval_seed(), config.effective_subsample_cap()};
        for (auto kind : fusion::kAllKinds) {
            const auto eval = metrics::evaluate_embedding(data.normalized, set.embedding(kind), options, distances);
            save_evaluation_csv(layout.evaluation(kind), eval.pairs);
            write_json(layout.quadrants(kind), quadrant_json(kind, eval.quadrants));
            save_labels(data.raw.graph, eval.clusters.labels, layout.clusters(kind));
            out[kind] = eval;
        }
    });
    return out;
}

std::map<fusion::FusionKind, tsne::TsneResult> stage_project(const ExperimentConfig& config,
                                                             const SessionLayout& layout) {
    std::map<fusion::FusionKind, tsne::TsneResult> out;
    in_stage("project", [&] {
        const auto data = load_session_dataset(layout, config);
        const auto set = fusion::load_embedding_set(layout.embeddings_dir(), data.raw.graph.ids());
        nlohmann::json diagnostics = nlohmann::json::object();
        for (auto kind : fusion::kAllKinds) {
            const auto result = tsne::project(set.embedding(kind), config.tsne);
            save_projection_csv(layout.projection(kind), data.raw.graph.ids(), result.coords);
            double worst = 0.0;
            for (double p : result.achieved_perplexity) worst = std::max(worst, std::abs(p - config.tsne.perplexity));
            nlohmann::json trace = nlohmann::json::array();
            for (auto [iter, kl] : result.kl_trace) trace.push_back({iter, kl});
            diagnostics[std::string(fusion::artifact_name(kind))] = {{"kl_trace", trace},
                                                                     {"max_perplexity_error", worst}};
            out[kind] = result;
        }
        write_json(layout.root / "projections.json", diagnostics);
    });
    return out;
}

Session run_all(const ExperimentConfig& config, const std::filesystem::path& out_base) {
    Session session;
    session.layout = SessionLayout::for_config(out_base, config);
    session.config = config;
    stage_generate(config, session.layout);
    stage_train(config, session.layout);
    session.evaluations = stage_evaluate(config, session.layout);
    session.projections = stage_project(config, session.layout);
    in_stage("report", [&] { write_report(session.layout.root); });

    session.dataset = load_session_dataset(session.layout, config);
    session.embeddings = fusion::load_embedding_set(session.layout.embeddings_dir(), session.dataset.raw.graph.ids());
    return session;
}

Session run_synthetic_experiment(ExperimentConfig config, const std::filesystem::path& out_base) {
    config.mode = Mode::synthetic;
    return run_all(config, out_base);
}

Session run_real_experiment(ExperimentConfig config, const std::filesystem::path& out_base) {
    config.mode = Mode::real;
    if (!config.dataset_dir) throw StageError("generate", "real experiment needs a dataset directory");
    return run_all(config, out_base);
}

// ---------------------------------------------------------------- report

std::string Report::text() const {
    std::ostringstream out;
    out << "session " << config_hash << "\n\n";
    out << std::left << std::setw(12) << "model" << std::right << std::setw(12) << "final_loss" << std::setw(8) << "TR"
        << std::setw(8) << "TL" << std::setw(8) << "BR" << std::setw(8) << "BL" << std::setw(10) << "ARI(gt)" << '\n';
    out << std::fixed;
    for (const auto& m : models) {
        const auto& q = m.quadrants;
        out << std::left << std::setw(12) << fusion::display_name(m.kind) << std::right << std::setw(12);
        if (m.final_loss) out << std::setprecision(6) << *m.final_loss;
        else out << "-";
        out << std::setprecision(3) << std::setw(8) << q.fraction(q.top_right) << std::setw(8)
            << q.fraction(q.top_left) << std::setw(8) << q.fraction(q.bottom_right) << std::setw(8)
            << q.fraction(q.bottom_left) << std::setw(10);
        if (m.ground_truth_ari) out << *m.ground_truth_ari;
        else out << "-";
        out << '\n';
    }
    out << "\nartifacts:\n";
    for (const auto& f : files) out << "  " << f << '\n';
    return out.str();
}

nlohmann::json Report::to_json() const {
    nlohmann::json models_json = nlohmann::json::array();
    for (const auto& m : models) {
        const auto& q = m.quadrants;
        models_json.push_back(
            {{"model", fusion::display_name(m.kind)},
             {"final_loss", m.final_loss ? nlohmann::json(*m.final_loss) : nlohmann::json(nullptr)},
             {"quadrant_counts",
              {{"top_right", q.top_right}, {"top_left", q.top_left}, {"bottom_right", q.bottom_right},
               {"bottom_left", q.bottom_left}}},
             {"tr_fraction", q.tr_fraction()},
             {"ground_truth_ari", m.ground_truth_ari ? nlohmann::json(*m.ground_truth_ari) : nlohmann::json(nullptr)}});
    }
    return {{"config_hash", config_hash}, {"models", models_json}, {"files", files}};
}

Report report(const std::filesystem::path& session_dir) {
    const SessionLayout layout{session_dir};
    Report out;
    {
        std::ifstream in(layout.config());
        if (!in) throw DataError("report: missing " + layout.config().string());
        out.config_hash = ExperimentConfig::from_json(nlohmann::json::parse(in)).hash();
    }
    nlohmann::json manifest;
    if (std::ifstream in(layout.embeddings_dir() / "manifest.json"); in) manifest = nlohmann::json::parse(in);
    std::optional<std::vector<int>> truth;
    const auto labels_path = layout.dataset_dir() / "labels.csv";
    if (std::filesystem::exists(labels_path)) {
        const auto m = csv::read_matrix(labels_path);
        truth.emplace();
        for (Eigen::Index i = 0; i < m.values.rows(); ++i) truth->push_back(static_cast<int>(m.values(i, 0)));
    }
    for (auto kind : fusion::kAllKinds) {
        const std::string name(fusion::display_name(kind));
        for (const auto& path : {layout.embedding(kind), layout.projection(kind), layout.evaluation(kind)}) {
            if (!std::filesystem::exists(path)) {
                throw DataError("report: session incomplete, " + name + " is missing " +
                                std::filesystem::relative(path, session_dir).generic_string());
            }
            out.files.push_back(std::filesystem::relative(path, session_dir).generic_string());
        }
        ModelReport m{kind, std::nullopt, metrics::summarize_quadrants(load_evaluation_csv(layout.evaluation(kind))),
                      std::nullopt};
        const std::string stem(fusion::artifact_name(kind));
        if (manifest.contains("models") && manifest["models"].contains(stem) &&
            manifest["models"][stem].contains("report")) {
            m.final_loss = manifest["models"][stem]["report"]["final_loss"].get<double>();
        }
        if (truth && std::filesystem::exists(layout.clusters(kind))) {
            const auto c = csv::read_matrix(layout.clusters(kind));
            std::vector<int> predicted;
            for (Eigen::Index i = 0; i < c.values.rows(); ++i) predicted.push_back(static_cast<int>(c.values(i, 0)));
            if (predicted.size() == truth->size()) m.ground_truth_ari = metrics::adjusted_rand_index(*truth, predicted);
        }
        out.models.push_back(m);
    }
    return out;
}

Report write_report(const std::filesystem::path& session_dir) {
    Report r = report(session_dir);
    const SessionLayout layout{session_dir};
    write_json(layout.index(), r.to_json());
    std::ofstream(layout.summary(), std::ios::binary) << r.text();
    return r;
}

}  // namespace urbanfuse::pipeline
