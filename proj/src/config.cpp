#include "gvci/config.hpp"

#include "gvci/errors.hpp"
#include "gvci/seed.hpp"

#include <filesystem>
#include <fstream>
#include <limits>

namespace gvci {

using nlohmann::json;

namespace {

std::string join(const std::string& dir, const std::string& name) {
    return (std::filesystem::path(dir) / name).string();
}

json activation_json(Activation a) { return to_string(a); }

void merge_checked(json& dst, const json& src, const std::string& path) {
    if (!src.is_object()) throw ConfigError((path.empty() ? std::string("config") : path) + " must be an object");
    for (auto it = src.begin(); it != src.end(); ++it) {
        const std::string key = path.empty() ? it.key() : path + "." + it.key();
        if (!dst.contains(it.key())) throw ConfigError("unknown config key '" + key + "'");
        json& slot = dst[it.key()];
        if (slot.is_object() && it.value().is_object())
            merge_checked(slot, it.value(), key);
        else
            slot = it.value();
    }
}

// Typed read of doc[block][key] with the field named on failure.
template <typename T>
T read(const json& doc, const std::string& block, const std::string& key) {
    const json& v = block.empty() ? doc.at(key) : doc.at(block).at(key);
    try {
        return v.get<T>();
    } catch (const json::exception&) {
        throw ConfigError((block.empty() ? key : block + "." + key) + " has the wrong type (" + v.dump() + ")");
    }
}

std::size_t read_count(const json& doc, const std::string& block, const std::string& key) {
    const json& v = doc.at(block).at(key);
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(block + "." + key + " must be a non-negative integer (" + v.dump() + ")");
    return v.get<std::size_t>();
}

std::uint64_t read_seed(const json& v, const std::string& field) {
    if (!v.is_number_integer() || v.get<long long>() < 0)
        throw ConfigError(field + " must be a non-negative integer (" + v.dump() + ")");
    return v.get<std::uint64_t>();
}

template <typename F>
auto parse_enum(const json& doc, const std::string& block, const std::string& key, F parse) {
    const auto s = read<std::string>(doc, block, key);
    try {
        return parse(s);
    } catch (const std::exception& e) {
        throw ConfigError(block + "." + key + ": " + e.what());
    }
}

}  // namespace

std::string PathsConfig::expression() const { return join(data_dir(), "expression.tsv"); }
std::string PathsConfig::covariates() const { return join(data_dir(), "covariates.tsv"); }
std::string PathsConfig::treatments() const { return join(data_dir(), "treatments.tsv"); }
std::string PathsConfig::graph_edges() const { return graph.empty() ? join(data_dir(), "graph.edges.tsv") : graph; }
std::string PathsConfig::graph_features() const {
    return features.empty() ? join(data_dir(), "graph.features.tsv") : features;
}
std::string PathsConfig::checkpoint_path() const { return checkpoint.empty() ? join(out, "model.ckpt") : checkpoint; }
std::string PathsConfig::output(const std::string& name) const { return join(out, name); }

std::uint64_t RunConfig::synth_seed() const { return derive_seed(seed, seed_stream::synth); }
std::uint64_t RunConfig::split_seed() const { return split.seed ? *split.seed : derive_seed(seed, seed_stream::split); }
std::uint64_t RunConfig::refine_seed() const { return derive_seed(seed, seed_stream::refine); }
std::uint64_t RunConfig::model_seed() const { return derive_seed(seed, seed_stream::model_init); }
std::uint64_t RunConfig::train_seed() const { return derive_seed(seed, seed_stream::train); }
std::uint64_t RunConfig::estimate_seed() const { return derive_seed(seed, seed_stream::estimate); }

void RunConfig::validate() const {
    if (paths.out.empty()) throw ConfigError("paths.out must be non-empty");
    synth.validate();
    training.validate();
    refinement.validate();
    if (split.covariate.empty()) throw ConfigError("split.covariate must be non-empty");
    if (split.k == 0) throw ConfigError("split.k must be positive");
    if (de_genes == 0) throw ConfigError("training.de_genes must be positive");
    if (model.latent_dim <= 0) throw ConfigError("model.latent_dim must be positive");
    if (model.graph_dim <= 0) throw ConfigError("model.graph_dim must be positive");
}

json default_config_json() { return config_to_json(RunConfig{}); }

json config_to_json(const RunConfig& c) {
    json doc;
    doc["seed"] = c.seed;
    doc["paths"] = {{"out", c.paths.out},
                    {"data", c.paths.data},
                    {"graph", c.paths.graph},
                    {"features", c.paths.features},
                    {"checkpoint", c.paths.checkpoint}};
    const SynthConfig& s = c.synth;
    doc["synth"] = {{"genes", s.genes},
                    {"cells", s.cells},
                    {"treatments", s.treatments},
                    {"covariate_levels", s.covariate_levels},
                    {"expected_parents", s.expected_parents},
                    {"coeff_min", s.coeff_min},
                    {"coeff_max", s.coeff_max},
                    {"noise_scale", s.noise_scale},
                    {"baseline_scale", s.baseline_scale},
                    {"covariate_shift", s.covariate_shift},
                    {"effect_genes", s.effect_genes},
                    {"effect_min", s.effect_min},
                    {"effect_max", s.effect_max},
                    {"feature_noise_dims", s.feature_noise_dims},
                    {"feature_noise", s.feature_noise},
                    {"prior_deletion_rate", s.prior_deletion_rate},
                    {"nonlinear", s.nonlinear},
                    {"control_label", s.control_label},
                    {"covariate_name", s.covariate_name}};
    const ModelConfig& m = c.model;
    doc["model"] = {{"latent_dim", m.latent_dim},
                    {"graph_dim", m.graph_dim},
                    {"encoder_hidden", m.encoder_hidden},
                    {"gcn_hidden", m.gcn_hidden},
                    {"posterior_hidden", m.posterior_hidden},
                    {"decoder_hidden", m.decoder_hidden},
                    {"hidden_activation", activation_json(m.hidden_activation)},
                    {"gcn_activation", activation_json(m.gcn_activation)},
                    {"attention", m.key_dependent_attention ? "key_dependent" : "key_independent"},
                    {"aggregation", to_string(m.aggregation)},
                    {"add_self_loops", m.add_self_loops},
                    {"initial_output_logvar", m.initial_output_logvar}};
    const TrainingConfig& t = c.training;
    doc["training"] = {{"omega1", t.weights.omega1},
                       {"omega2", t.weights.omega2},
                       {"learning_rate", t.learning_rate},
                       {"batch_size", t.batch_size},
                       {"max_epochs", t.max_epochs},
                       {"eval_every", t.eval_every},
                       {"patience", t.patience},
                       {"counterfactual_mode", to_string(t.counterfactual_mode)},
                       {"variance_floor", t.variance_floor},
                       {"min_stratum_size", t.min_stratum_size},
                       {"control_label", t.control_label},
                       {"target_r2", std::isfinite(t.target_r2) ? json(t.target_r2) : json(nullptr)},
                       {"de_genes", c.de_genes}};
    const RefinementConfig& r = c.refinement;
    doc["refinement"] = {{"r_l", r.r_l},
                         {"r_h", r.r_h},
                         {"omega", r.omega},
                         {"alpha", r.alpha},
                         {"penalize_diagonal", r.penalize_diagonal},
                         {"epochs", r.epochs},
                         {"learning_rate", r.learning_rate},
                         {"batch_size", r.batch_size},
                         {"hidden", r.hidden},
                         {"layers", r.layers},
                         {"top_k", r.top_k}};
    doc["split"] = {{"covariate", c.split.covariate},
                    {"category", c.split.category},
                    {"k", c.split.k},
                    {"seed", c.split.seed ? json(*c.split.seed) : json(nullptr)}};
    json strata = "all";
    if (!c.estimator.strata.empty()) {
        strata = json::array();
        for (const auto& [a, g] : c.estimator.strata) strata.push_back({a, g});
    }
    doc["estimator"] = {{"strata", strata}, {"sample_latent", c.estimator.sample_latent}};
    return doc;
}

RunConfig config_from_json(const json& user) {
    json doc = default_config_json();
    merge_checked(doc, user, "");

    RunConfig c;
    c.seed = read_seed(doc.at("seed"), "seed");

    c.paths.out = read<std::string>(doc, "paths", "out");
    c.paths.data = read<std::string>(doc, "paths", "data");
    c.paths.graph = read<std::string>(doc, "paths", "graph");
    c.paths.features = read<std::string>(doc, "paths", "features");
    c.paths.checkpoint = read<std::string>(doc, "paths", "checkpoint");

    SynthConfig& s = c.synth;
    s.genes = read_count(doc, "synth", "genes");
    s.cells = read_count(doc, "synth", "cells");
    s.treatments = read_count(doc, "synth", "treatments");
    s.covariate_levels = read_count(doc, "synth", "covariate_levels");
    s.expected_parents = read<double>(doc, "synth", "expected_parents");
    s.coeff_min = read<double>(doc, "synth", "coeff_min");
    s.coeff_max = read<double>(doc, "synth", "coeff_max");
    s.noise_scale = read<double>(doc, "synth", "noise_scale");
    s.baseline_scale = read<double>(doc, "synth", "baseline_scale");
    s.covariate_shift = read<double>(doc, "synth", "covariate_shift");
    s.effect_genes = read_count(doc, "synth", "effect_genes");
    s.effect_min = read<double>(doc, "synth", "effect_min");
    s.effect_max = read<double>(doc, "synth", "effect_max");
    s.feature_noise_dims = read_count(doc, "synth", "feature_noise_dims");
    s.feature_noise = read<double>(doc, "synth", "feature_noise");
    s.prior_deletion_rate = read<double>(doc, "synth", "prior_deletion_rate");
    s.nonlinear = read<bool>(doc, "synth", "nonlinear");
    s.control_label = read<std::string>(doc, "synth", "control_label");
    s.covariate_name = read<std::string>(doc, "synth", "covariate_name");
    s.seed = c.synth_seed();

    ModelConfig& m = c.model;
    m.latent_dim = read<int>(doc, "model", "latent_dim");
    m.graph_dim = read<int>(doc, "model", "graph_dim");
    m.encoder_hidden = read<std::vector<int>>(doc, "model", "encoder_hidden");
    m.gcn_hidden = read<std::vector<int>>(doc, "model", "gcn_hidden");
    m.posterior_hidden = read<std::vector<int>>(doc, "model", "posterior_hidden");
    m.decoder_hidden = read<std::vector<int>>(doc, "model", "decoder_hidden");
    m.hidden_activation = parse_enum(doc, "model", "hidden_activation", parse_activation);
    m.gcn_activation = parse_enum(doc, "model", "gcn_activation", parse_activation);
    const auto attention = read<std::string>(doc, "model", "attention");
    if (attention != "key_dependent" && attention != "key_independent")
        throw ConfigError("model.attention must be key_dependent or key_independent");
    m.key_dependent_attention = attention == "key_dependent";
    m.aggregation = parse_enum(doc, "model", "aggregation", parse_aggregation);
    m.add_self_loops = read<bool>(doc, "model", "add_self_loops");
    m.initial_output_logvar = read<double>(doc, "model", "initial_output_logvar");

    TrainingConfig& t = c.training;
    t.weights.omega1 = read<double>(doc, "training", "omega1");
    t.weights.omega2 = read<double>(doc, "training", "omega2");
    t.learning_rate = read<double>(doc, "training", "learning_rate");
    t.batch_size = read_count(doc, "training", "batch_size");
    t.max_epochs = read_count(doc, "training", "max_epochs");
    t.eval_every = read_count(doc, "training", "eval_every");
    t.patience = read_count(doc, "training", "patience");
    t.counterfactual_mode = parse_enum(doc, "training", "counterfactual_mode", parse_counterfactual_mode);
    t.variance_floor = read<double>(doc, "training", "variance_floor");
    t.min_stratum_size = read_count(doc, "training", "min_stratum_size");
    t.control_label = read<std::string>(doc, "training", "control_label");
    const json& target = doc.at("training").at("target_r2");
    t.target_r2 = target.is_null() ? -std::numeric_limits<double>::infinity() : read<double>(doc, "training", "target_r2");
    c.de_genes = read_count(doc, "training", "de_genes");
    t.seed = c.train_seed();

    RefinementConfig& r = c.refinement;
    r.r_l = read<double>(doc, "refinement", "r_l");
    r.r_h = read<double>(doc, "refinement", "r_h");
    r.omega = read<double>(doc, "refinement", "omega");
    r.alpha = read<double>(doc, "refinement", "alpha");
    r.penalize_diagonal = read<bool>(doc, "refinement", "penalize_diagonal");
    r.epochs = read_count(doc, "refinement", "epochs");
    r.learning_rate = read<double>(doc, "refinement", "learning_rate");
    r.batch_size = read_count(doc, "refinement", "batch_size");
    r.hidden = read<int>(doc, "refinement", "hidden");
    r.layers = read_count(doc, "refinement", "layers");
    r.top_k = read_count(doc, "refinement", "top_k");
    r.seed = c.refine_seed();

    c.split.covariate = read<std::string>(doc, "split", "covariate");
    c.split.category = read<std::string>(doc, "split", "category");
    c.split.k = read_count(doc, "split", "k");
    const json& split_seed = doc.at("split").at("seed");
    if (!split_seed.is_null()) c.split.seed = read_seed(split_seed, "split.seed");

    const json& strata = doc.at("estimator").at("strata");
    if (strata.is_string()) {
        if (strata.get<std::string>() != "all") throw ConfigError("estimator.strata must be \"all\" or a list of pairs");
    } else if (strata.is_array()) {
        for (const auto& p : strata) {
            if (!p.is_array() || p.size() != 2 || !p[0].is_string() || !p[1].is_string())
                throw ConfigError("estimator.strata entries must be [treatment, covariate group] pairs");
            c.estimator.strata.emplace_back(p[0].get<std::string>(), p[1].get<std::string>());
        }
    } else {
        throw ConfigError("estimator.strata must be \"all\" or a list of pairs");
    }
    c.estimator.sample_latent = read<bool>(doc, "estimator", "sample_latent");

    c.validate();
    return c;
}

RunConfig load_config(const std::string& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config file " + path);
    json doc;
    try {
        doc = json::parse(in);
    } catch (const json::parse_error& e) {
        throw ConfigError(path + ": " + e.what());
    }
    return config_from_json(doc);
}

void apply_override(json& doc, const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) throw ConfigError("override '" + assignment + "' is not of the form key=value");
    const std::string key = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    json value = json::parse(text, nullptr, false);
    if (value.is_discarded()) value = text;

    json* node = &doc;
    std::size_t start = 0;
    while (true) {
        const auto dot = key.find('.', start);
        const std::string part = key.substr(start, dot == std::string::npos ? std::string::npos : dot - start);
        if (part.empty()) throw ConfigError("override key '" + key + "' is malformed");
        if (dot == std::string::npos) {
            (*node)[part] = value;
            return;
        }
        json& child = (*node)[part];
        if (child.is_null()) child = json::object();
        if (!child.is_object()) throw ConfigError("override key '" + key + "' descends into a non-object");
        node = &child;
        start = dot + 1;
    }
}

}  // namespace gvci
