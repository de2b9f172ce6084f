// urbanfuse: generate -> train -> evaluate -> project -> report, plus the
// explorer service and incident assignment.
#include <cstdio>
#include <fstream>
#include <iostream>

#include "CLI11.hpp"

#include "urbanfuse/csv.hpp"
#include "urbanfuse/explorer.hpp"
#include "urbanfuse/session.hpp"

using namespace urbanfuse;
using pipeline::ExperimentConfig;
using pipeline::SessionLayout;

namespace {

struct Common {
    std::string config;
    std::string session;
    std::string out = "sessions";
    std::optional<std::uint64_t> seed;
};

void add_common(CLI::App* cmd, Common& c) {
    cmd->add_option("--config", c.config, "experiment config (JSON)");
    cmd->add_option("--session", c.session, "existing session directory");
    cmd->add_option("--seed", c.seed, "master seed, overrides the config");
    cmd->add_option("--out", c.out, "base directory for sessions")->capture_default_str();
}

// A stage resolves its config either from --config or from the session's
// own config.json.
std::pair<ExperimentConfig, SessionLayout> resolve(const Common& c) {
    ExperimentConfig cfg;
    if (!c.config.empty()) {
        cfg = ExperimentConfig::load(c.config);
    } else if (!c.session.empty()) {
        cfg = ExperimentConfig::load(SessionLayout{c.session}.config());
    }
    if (c.seed) cfg.set_seed(*c.seed);
    if (!c.session.empty() && c.config.empty() && !c.seed) return {cfg, SessionLayout{c.session}};
    return {cfg, SessionLayout::for_config(c.out, cfg)};
}

std::filesystem::path session_dir(const Common& c) {
    if (!c.session.empty()) return c.session;
    if (c.config.empty()) throw std::invalid_argument("need --session or --config");
    return resolve(c).second.root;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-autoencoder fusion of static and dynamic node attributes"};
    app.require_subcommand(1);

    Common common;
    auto* generate = app.add_subcommand("generate", "build the dataset of a session");
    auto* train = app.add_subcommand("train", "train the five embedding models");
    auto* evaluate = app.add_subcommand("evaluate", "k-means and silhouette pairs per model");
    auto* project = app.add_subcommand("project", "t-SNE projection per model");
    auto* run_all = app.add_subcommand("run-all", "all stages followed by report");
    auto* report = app.add_subcommand("report", "summarise a finished session");
    auto* serve = app.add_subcommand("serve", "start the explorer HTTP service");
    auto* assign = app.add_subcommand("assign", "map incidents to street nodes as monthly counts");
    for (auto* cmd : {generate, train, evaluate, project, run_all, report, serve}) add_common(cmd, common);

    std::string host = "127.0.0.1";
    int port = 8080;
    serve->add_option("--host", host)->capture_default_str();
    serve->add_option("--port", port)->capture_default_str();

    std::string nodes_path, edges_path, incidents_path, from, to, counts_out;
    assign->add_option("--nodes", nodes_path, "nodes.csv")->required();
    assign->add_option("--edges", edges_path, "edges.csv")->required();
    assign->add_option("--incidents", incidents_path, "incidents.csv (lon,lat,date)")->required();
    assign->add_option("--from", from, "first month, YYYY-MM")->required();
    assign->add_option("--to", to, "last month, YYYY-MM")->required();
    assign->add_option("--out", counts_out, "output dynamic.csv")->required();

    CLI11_PARSE(app, argc, argv);

    const std::string verb = app.get_subcommands().front()->get_name();
    try {
        if (verb == "assign") {
            const auto first = YearMonth::parse(from);
            const auto last = YearMonth::parse(to);
            if (!first || !last) throw std::invalid_argument("--from/--to must be YYYY-MM");
            const auto graph = load_graph(nodes_path, edges_path);
            const auto incidents = load_incidents(incidents_path);
            const auto result = assign_incidents(graph, incidents, TimeRange{*first, *last});
            std::vector<std::string> header{"node_id"};
            for (const auto& ym : result.time_axis) header.push_back(ym.str());
            csv::write_matrix(counts_out, header, graph.ids(), result.counts);
            std::cerr << "assigned " << result.assigned << ", out of range " << result.skipped_out_of_range
                      << ", invalid " << result.skipped_invalid << '\n';
            return 0;
        }
        if (verb == "report") {
            std::cout << pipeline::write_report(session_dir(common)).text();
            return 0;
        }
        if (verb == "serve") {
            const auto session = explorer::ExplorerSession::load(session_dir(common));
            std::cerr << "serving session " << session.config_hash() << " on http://" << host << ':' << port << '\n';
            explorer::serve(session, host, port);
            return 0;
        }
        if (common.config.empty() && common.session.empty() && verb != "run-all" && verb != "generate") {
            throw std::invalid_argument("need --config or --session");
        }
        auto [cfg, layout] = resolve(common);
        if (verb == "generate") pipeline::stage_generate(cfg, layout);
        else if (verb == "train") pipeline::stage_train(cfg, layout);
        else if (verb == "evaluate") pipeline::stage_evaluate(cfg, layout);
        else if (verb == "project") pipeline::stage_project(cfg, layout);
        else if (verb == "run-all") {
            const auto session = pipeline::run_all(cfg, common.out);
            std::cout << pipeline::report(session.layout.root).text();
        }
        std::cout << layout.root.generic_string() << '\n';
        return 0;
    } catch (const pipeline::StageError& e) {
        std::cerr << "urbanfuse " << verb << ": " << e.what() << '\n';
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "urbanfuse " << verb << ": [" << verb << "] " << e.what() << '\n';
        return 1;
    }
}
