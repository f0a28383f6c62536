#include "gvci/commands.hpp"
#include "gvci/errors.hpp"

#include <CLI11.hpp>
#include <json.hpp>

#include <fstream>
#include <functional>
#include <iostream>
#include <map>

namespace {

enum Exit { ok = 0, failure = 1, config_error = 2, data_error = 3, divergence = 4 };

struct Options {
    std::string config;
    std::vector<std::string> sets;
    std::optional<std::uint64_t> seed;
    std::string out;
    bool print_config = false;
};

gvci::RunConfig resolve(const Options& o) {
    nlohmann::json doc = nlohmann::json::object();
    if (!o.config.empty()) {
        std::ifstream in(o.config);
        if (!in) throw gvci::ConfigError("cannot open config file " + o.config);
        try {
            doc = nlohmann::json::parse(in);
        } catch (const nlohmann::json::parse_error& e) {
            throw gvci::ConfigError(o.config + ": " + e.what());
        }
    }
    for (const auto& s : o.sets) gvci::apply_override(doc, s);
    if (o.seed) doc["seed"] = *o.seed;
    if (!o.out.empty()) doc["paths"]["out"] = o.out;
    return gvci::config_from_json(doc);
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Graph-structured variational causal inference for counterfactual expression prediction"};
    app.require_subcommand(1);
    Options opts;
    app.add_option("--config", opts.config, "JSON run configuration")->check(CLI::ExistingFile);
    app.add_option("--set", opts.sets, "Override a config entry, section.key=value (repeatable)");
    app.add_option("--seed", opts.seed, "Root seed");
    app.add_option("--out", opts.out, "Output directory (paths.out)");
    app.add_flag("--print-config", opts.print_config, "Print the resolved configuration before running");

    using Command = std::function<void(const gvci::RunConfig&, std::ostream&)>;
    const std::vector<std::tuple<std::string, std::string, Command>> commands{
        {"synth", "Generate a synthetic dataset with its ground-truth graph", gvci::cmd_synth},
        {"refine-graph", "Refine the prior relation graph", gvci::cmd_refine},
        {"train", "Train the model", gvci::cmd_train},
        {"evaluate", "Score counterfactual predictions on the validation and held-out strata", gvci::cmd_evaluate},
        {"estimate", "Compare the robust and empirical-mean marginal estimators", gvci::cmd_estimate},
    };
    std::map<CLI::App*, Command> handlers;
    for (const auto& [name, help, fn] : commands) {
        CLI::App* sub = app.add_subcommand(name, help);
        sub->fallthrough();
        handlers[sub] = fn;
    }

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? ok : config_error;
    }

    try {
        const gvci::RunConfig config = resolve(opts);
        if (opts.print_config) std::cout << gvci::config_to_json(config).dump(2) << '\n';
        for (auto& [sub, fn] : handlers)
            if (sub->parsed()) fn(config, std::cout);
    } catch (const gvci::ConfigError& e) {
        std::cerr << "config error: " << e.what() << '\n';
        return config_error;
    } catch (const gvci::DataError& e) {
        std::cerr << "data error: " << e.what() << '\n';
        return data_error;
    } catch (const gvci::DivergenceError& e) {
        std::cerr << "numerical divergence: " << e.what() << '\n';
        return divergence;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << '\n';
        return failure;
    }
    return ok;
}
