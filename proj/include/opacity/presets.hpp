#pragma once

// Named configurations for the reference experiments.

#include <string>
#include <vector>

#include "opacity/config.hpp"

namespace opacity {

inline const std::vector<std::string>& preset_names() {
    static const std::vector<std::string> names{"lemmaA1", "theorem1", "theorem2", "theorem3", "lemma1"};
    return names;
}

inline RunConfig preset(const std::string& name) {
    RunConfig c;
    c.name = name;
    c.channel.lambda_min = 1.0;
    c.channel.lambda_max = 1e8;
    if (name == "lemmaA1") {
        c.seed = 7;
        c.garbling = {0.4, 0.01, {1.0, 4.0}, 1000000};
    } else if (name == "theorem2") {
        c.seed = 2;
        c.sweep.grid.lambda_grid = {1.0, 1e8};
        c.sweep.grid.horizons = {1, 5};
        c.sweep.grid.n_samples = 1000000;
    } else if (name == "theorem1") {
        c.seed = 5;
        c.sweep.grid.lambda_grid = {1.0, 2.0, 4.0, 8.0, 16.0, 64.0, 256.0, 1e4, 1e8};
        c.sweep.grid.horizons = {1, 5};
        c.sweep.grid.n_samples = 1000000;
        c.sweep.replicates = 3;
    } else if (name == "theorem3") {
        c.seed = 3;
        c.sweep.grid.lambda_grid.clear();
        c.sweep.choice = ChoiceConfig{{1.0, 2.0, 4.0, 16.0, 64.0, 256.0, 1e4, 1e8}, 0.05, 5, 1000000};
    } else if (name == "lemma1") {
        c.seed = 1;
        c.dp.horizons = {1, 5, 10, 20};
        c.dp.window = 0.2;
    } else {
        std::string known;
        for (const auto& n : preset_names()) known += (known.empty() ? "" : ", ") + n;
        throw ConfigError("unknown preset '" + name + "' (known: " + known + ")");
    }
    c.sweep.grid.seed = c.seed;
    return c;
}

}  // namespace opacity
