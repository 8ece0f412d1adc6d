#include "perturbench/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

#include "json.hpp"

namespace perturbench {

using nlohmann::json;

namespace {

void allow_only(const json& obj, const std::string& where, std::initializer_list<const char*> keys) {
    if (!obj.is_object()) throw ConfigError(where + ": expected an object");
    const std::set<std::string> allowed(keys.begin(), keys.end());
    for (const auto& [key, value] : obj.items()) {
        if (!allowed.count(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

double real(const json& v, const std::string& where) {
    if (v.is_number()) return v.get<double>();
    if (v.is_string()) return parse_epsilon_text(v.get<std::string>());
    throw ConfigError(where + ": expected a number or \"a/b\" string");
}

int integer(const json& v, const std::string& where) {
    if (!v.is_number_integer()) throw ConfigError(where + ": expected an integer");
    return v.get<int>();
}

std::uint64_t seed_value(const json& v, const std::string& where) {
    if (!v.is_number_unsigned() && !(v.is_number_integer() && v.get<long long>() >= 0)) {
        throw ConfigError(where + ": expected a non-negative integer seed");
    }
    return v.get<std::uint64_t>();
}

std::string text(const json& v, const std::string& where) {
    if (!v.is_string()) throw ConfigError(where + ": expected a string");
    return v.get<std::string>();
}

template <class F>
auto wrap(const std::string& where, F&& f) {
    try {
        return f();
    } catch (const ConfigError&) {
        throw;
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
}

AttackEntry attack_from(const json& j, const std::string& where) {
    allow_only(j, where,
               {"kind", "norm", "epsilon", "eps_step", "max_iterations", "confidence", "learning_rate", "initial_const",
                "binary_search_steps", "theta", "gamma", "p_init", "restarts", "query_budget", "seed", "s", "b",
                "sample_count"});
    if (!j.contains("kind")) throw ConfigError(where + ": missing 'kind'");
    const AttackKind kind = wrap(where, [&] { return parse_attack_kind(text(j["kind"], where + ".kind")); });
    const Norm norm = j.contains("norm") ? wrap(where, [&] { return parse_norm(text(j["norm"], where + ".norm")); })
                                         : Norm::Linf;
    const double eps = j.contains("epsilon") ? real(j["epsilon"], where + ".epsilon") : 8.0 / 255.0;
    AttackEntry entry{AttackSpec::defaults(kind, eps, norm), std::nullopt};
    AttackSpec& s = entry.spec;
    if (!s.ball && (j.contains("epsilon") || j.contains("norm"))) {
        throw ConfigError(where + ": " + to_string(kind) + " takes no epsilon/norm");
    }
    if (j.contains("eps_step")) s.eps_step = real(j["eps_step"], where + ".eps_step");
    if (j.contains("max_iterations")) s.max_iterations = integer(j["max_iterations"], where + ".max_iterations");
    if (j.contains("confidence")) s.confidence = real(j["confidence"], where + ".confidence");
    if (j.contains("learning_rate")) s.learning_rate = real(j["learning_rate"], where + ".learning_rate");
    if (j.contains("initial_const")) s.initial_const = real(j["initial_const"], where + ".initial_const");
    if (j.contains("binary_search_steps")) {
        s.binary_search_steps = integer(j["binary_search_steps"], where + ".binary_search_steps");
    }
    if (j.contains("theta")) s.theta = real(j["theta"], where + ".theta");
    if (j.contains("gamma")) s.gamma = real(j["gamma"], where + ".gamma");
    if (j.contains("p_init")) s.p_init = real(j["p_init"], where + ".p_init");
    if (j.contains("restarts")) s.restarts = integer(j["restarts"], where + ".restarts");
    if (j.contains("query_budget")) s.query_budget = integer(j["query_budget"], where + ".query_budget");
    if (j.contains("seed")) s.seed = seed_value(j["seed"], where + ".seed");
    if (j.contains("s")) s.s = real(j["s"], where + ".s");
    // CCP bias is written in 8-bit units, as in the attack tables.
    if (j.contains("b")) s.b = from_8bit(real(j["b"], where + ".b"));
    if (j.contains("sample_count")) {
        entry.sample_count = integer(j["sample_count"], where + ".sample_count");
        if (*entry.sample_count <= 0) throw ConfigError(where + ".sample_count must be positive");
    }
    wrap(where, [&] {
        s.validate();
        return 0;
    });
    return entry;
}

DefenseSpec defense_from(const json& j, const std::string& where) {
    if (j.is_string()) return DefenseSpec::defaults(wrap(where, [&] { return parse_defense_kind(j.get<std::string>()); }));
    allow_only(j, where,
               {"kind", "window", "patch", "search", "strength", "weight", "tol", "max_iter", "quality", "margin", "seed",
                "s", "b"});
    if (!j.contains("kind")) throw ConfigError(where + ": missing 'kind'");
    DefenseSpec d = DefenseSpec::defaults(wrap(where, [&] { return parse_defense_kind(text(j["kind"], where)); }));
    if (j.contains("window")) d.window = integer(j["window"], where + ".window");
    if (j.contains("patch")) d.patch = integer(j["patch"], where + ".patch");
    if (j.contains("search")) d.search = integer(j["search"], where + ".search");
    if (j.contains("strength")) d.strength = real(j["strength"], where + ".strength");
    if (j.contains("weight")) d.tv_weight = real(j["weight"], where + ".weight");
    if (j.contains("tol")) d.tv_tol = real(j["tol"], where + ".tol");
    if (j.contains("max_iter")) d.tv_max_iter = integer(j["max_iter"], where + ".max_iter");
    if (j.contains("quality")) d.quality = integer(j["quality"], where + ".quality");
    if (j.contains("margin")) d.margin = integer(j["margin"], where + ".margin");
    if (j.contains("seed")) d.ccp_seed = seed_value(j["seed"], where + ".seed");
    if (j.contains("s")) d.ccp_s = real(j["s"], where + ".s");
    if (j.contains("b")) d.ccp_b = from_8bit(real(j["b"], where + ".b"));
    wrap(where, [&] {
        d.validate();
        return 0;
    });
    return d;
}

TrainConfig train_from(const json& j, TrainConfig cfg, const std::string& where) {
    allow_only(j, where, {"optimizer", "epochs", "batch_size", "learning_rate", "seed", "momentum"});
    if (j.contains("optimizer")) cfg.optimizer = wrap(where, [&] { return parse_optimizer(text(j["optimizer"], where)); });
    if (j.contains("epochs")) cfg.epochs = integer(j["epochs"], where + ".epochs");
    if (j.contains("batch_size")) cfg.batch_size = integer(j["batch_size"], where + ".batch_size");
    if (j.contains("learning_rate")) cfg.learning_rate = real(j["learning_rate"], where + ".learning_rate");
    if (j.contains("seed")) cfg.seed = seed_value(j["seed"], where + ".seed");
    if (j.contains("momentum")) cfg.momentum = real(j["momentum"], where + ".momentum");
    wrap(where, [&] {
        cfg.validate();
        return 0;
    });
    return cfg;
}

}  // namespace

double parse_epsilon_text(const std::string& value) {
    const auto slash = value.find('/');
    auto number = [&](const std::string& s) {
        std::size_t used = 0;
        double v = 0.0;
        try {
            v = std::stod(s, &used);
        } catch (const std::exception&) {
            throw ConfigError("cannot parse number '" + value + "'");
        }
        if (used != s.size()) throw ConfigError("cannot parse number '" + value + "'");
        return v;
    };
    if (slash == std::string::npos) return number(value);
    const double den = number(value.substr(slash + 1));
    if (den == 0.0) throw ConfigError("zero denominator in '" + value + "'");
    return number(value.substr(0, slash)) / den;
}

TrainConfig default_train_config(ModelKind kind) {
    TrainConfig cfg;
    switch (kind) {
        case ModelKind::TinyCnn:
            cfg.optimizer = Optimizer::Sgd;
            cfg.epochs = 15;
            cfg.batch_size = 32;
            cfg.learning_rate = 0.05;
            break;
        case ModelKind::TinyVit:
            cfg.optimizer = Optimizer::Adam;
            cfg.epochs = 15;
            cfg.batch_size = 8;
            cfg.learning_rate = 1e-3;
            break;
        case ModelKind::LinearSoftmax:
            cfg.optimizer = Optimizer::Sgd;
            cfg.epochs = 5;
            cfg.batch_size = 32;
            cfg.learning_rate = 0.01;
            break;
    }
    return cfg;
}

void ExperimentConfig::validate() const {
    if (models.empty()) throw ConfigError("config: 'models' must be a nonempty list");
    if (attacks.empty()) throw ConfigError("config: 'attacks' must be a nonempty list");
    if (sample_count <= 0) throw ConfigError("config: sample_count must be positive");
    std::set<std::string> names;
    for (const auto& m : models) {
        if (m.name.empty()) throw ConfigError("config: model without a name");
        if (!names.insert(m.name).second) throw ConfigError("config: duplicate model name '" + m.name + "'");
    }
    if (eot) {
        if (eot->members.empty()) throw ConfigError("config: eot.members must be nonempty");
        if (eot->mc_samples < 1 || eot->steps < 0) throw ConfigError("config: eot.mc_samples must be >= 1");
    }
    if (!dataset.labels_csv && (dataset.n_train <= 0 || dataset.n_test <= 0)) {
        throw ConfigError("config: dataset sizes must be positive");
    }
}

AttackEntry parse_attack_json(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("attack spec is not valid JSON: ") + e.what());
    }
    return attack_from(j, "attack");
}

ExperimentConfig parse_experiment_config(const std::string& json_text) {
    json j;
    try {
        j = json::parse(json_text);
    } catch (const json::exception& e) {
        throw ConfigError(std::string("config is not valid JSON: ") + e.what());
    }
    allow_only(j, "config",
               {"models", "attacks", "defenses", "eot", "sample_count", "master_seed", "dataset", "saliency_maps"});
    ExperimentConfig cfg;
    if (j.contains("master_seed")) cfg.master_seed = seed_value(j["master_seed"], "master_seed");
    if (j.contains("sample_count")) cfg.sample_count = integer(j["sample_count"], "sample_count");
    if (j.contains("saliency_maps")) {
        if (!j["saliency_maps"].is_boolean()) throw ConfigError("saliency_maps: expected true or false");
        cfg.saliency_maps = j["saliency_maps"].get<bool>();
    }

    if (j.contains("dataset")) {
        const json& d = j["dataset"];
        allow_only(d, "dataset", {"kind", "seed", "n_train", "n_test", "labels"});
        const std::string kind = d.contains("kind") ? text(d["kind"], "dataset.kind") : "toy";
        if (kind == "toy") {
            if (d.contains("labels")) throw ConfigError("dataset: 'labels' needs kind \"directory\"");
            if (d.contains("seed")) cfg.dataset.seed = seed_value(d["seed"], "dataset.seed");
            if (d.contains("n_train")) cfg.dataset.n_train = integer(d["n_train"], "dataset.n_train");
            if (d.contains("n_test")) cfg.dataset.n_test = integer(d["n_test"], "dataset.n_test");
        } else if (kind == "directory") {
            if (!d.contains("labels")) throw ConfigError("dataset: kind \"directory\" needs 'labels'");
            cfg.dataset.labels_csv = text(d["labels"], "dataset.labels");
        } else {
            throw ConfigError("dataset.kind must be \"toy\" or \"directory\"");
        }
    }

    if (!j.contains("models") || !j["models"].is_array()) throw ConfigError("config: 'models' must be a list");
    for (std::size_t i = 0; i < j["models"].size(); ++i) {
        const json& m = j["models"][i];
        const std::string where = "models[" + std::to_string(i) + "]";
        allow_only(m, where, {"name", "kind", "checkpoint", "seed", "train"});
        if (!m.contains("kind")) throw ConfigError(where + ": missing 'kind'");
        ModelConfig mc;
        mc.kind = wrap(where, [&] { return parse_model_kind(text(m["kind"], where + ".kind")); });
        mc.name = m.contains("name") ? text(m["name"], where + ".name") : to_string(mc.kind);
        if (m.contains("checkpoint")) mc.checkpoint = text(m["checkpoint"], where + ".checkpoint");
        if (m.contains("seed")) mc.init_seed = seed_value(m["seed"], where + ".seed");
        mc.train = default_train_config(mc.kind);
        if (m.contains("train")) mc.train = train_from(m["train"], mc.train, where + ".train");
        cfg.models.push_back(std::move(mc));
    }

    if (!j.contains("attacks") || !j["attacks"].is_array()) throw ConfigError("config: 'attacks' must be a list");
    for (std::size_t i = 0; i < j["attacks"].size(); ++i) {
        cfg.attacks.push_back(attack_from(j["attacks"][i], "attacks[" + std::to_string(i) + "]"));
    }

    if (j.contains("defenses")) {
        if (!j["defenses"].is_array()) throw ConfigError("config: 'defenses' must be a list");
        for (std::size_t i = 0; i < j["defenses"].size(); ++i) {
            cfg.defenses.push_back(defense_from(j["defenses"][i], "defenses[" + std::to_string(i) + "]"));
        }
    } else {
        for (DefenseKind k : all_defenses()) cfg.defenses.push_back(DefenseSpec::defaults(k));
    }

    if (j.contains("eot")) {
        const json& e = j["eot"];
        allow_only(e, "eot", {"members", "mc_samples", "epsilon", "steps", "eps_step"});
        EotConfig eot;
        if (!e.contains("members") || !e["members"].is_array()) throw ConfigError("eot: 'members' must be a list");
        for (const auto& m : e["members"]) {
            eot.members.push_back(wrap("eot.members", [&] { return parse_defense_kind(text(m, "eot.members")); }));
        }
        if (e.contains("mc_samples")) eot.mc_samples = integer(e["mc_samples"], "eot.mc_samples");
        if (e.contains("epsilon")) eot.epsilon = real(e["epsilon"], "eot.epsilon");
        if (e.contains("steps")) eot.steps = integer(e["steps"], "eot.steps");
        if (e.contains("eps_step")) eot.eps_step = real(e["eps_step"], "eot.eps_step");
        cfg.eot = eot;
    }
    cfg.validate();
    return cfg;
}

ExperimentConfig load_experiment_config(const std::filesystem::path& path) {
    std::ifstream in(path);
    if (!in) throw ConfigError("cannot open config " + path.string());
    std::stringstream buf;
    buf << in.rdbuf();
    ExperimentConfig cfg = parse_experiment_config(buf.str());
    // Relative paths inside a config file are resolved against its directory.
    const auto base = path.parent_path();
    for (auto& m : cfg.models) {
        if (m.checkpoint && m.checkpoint->is_relative()) m.checkpoint = base / *m.checkpoint;
    }
    if (cfg.dataset.labels_csv && cfg.dataset.labels_csv->is_relative()) {
        cfg.dataset.labels_csv = base / *cfg.dataset.labels_csv;
    }
    return cfg;
}

}  // namespace perturbench
