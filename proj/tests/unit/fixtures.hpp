#pragma once

#include "json.hpp"

#include "urbanfuse/session.hpp"

namespace testing {

// 200-node synthetic experiment with reduced dimensions.
inline urbanfuse::pipeline::ExperimentConfig toy_config(std::uint64_t seed = 3) {
    const auto j = nlohmann::json::parse(R"({
      "mode": "synthetic",
      "graph": {"grid_rows": 10, "grid_cols": 20},
      "synth": {"k_clusters": 4, "n_timesteps": 36},
      "models": {
        "static": {"hidden_dim": 16, "epochs": 100, "learning_rate": 0.01},
        "dynamic": {"hidden_dim": 16, "latent_dim": 8, "epochs": 100, "learning_rate": 0.01},
        "early": {"hidden_dim": 16, "latent_dim": 8, "epochs": 100, "learning_rate": 0.01},
        "top": {"hidden_dim": 16, "latent_dim": 8, "epochs": 100, "learning_rate": 0.01}
      },
      "eval": {"k": 4},
      "tsne": {"perplexity": 20, "iterations": 300}
    })");
    auto c = urbanfuse::pipeline::ExperimentConfig::from_json(j);
    c.set_seed(seed);
    return c;
}

}  // namespace testing
