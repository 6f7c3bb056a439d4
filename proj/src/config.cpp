#include "unialign/config.hpp"

#include <fstream>
#include <set>
#include <sstream>

namespace unialign {

std::string to_string(TrainingMode mode) {
    switch (mode) {
        case TrainingMode::unialign: return "unialign";
        case TrainingMode::standard: return "standard";
        case TrainingMode::wo_daf: return "wo-daf";
        case TrainingMode::wo_sme: return "wo-sme";
    }
    return "?";
}

TrainingMode mode_from_string(const std::string& name) {
    if (name == "unialign") return TrainingMode::unialign;
    if (name == "standard") return TrainingMode::standard;
    if (name == "wo-daf") return TrainingMode::wo_daf;
    if (name == "wo-sme") return TrainingMode::wo_sme;
    throw std::invalid_argument("unknown mode '" + name +
                                "' (expected unialign|standard|wo-daf|wo-sme)");
}

namespace {

const std::set<std::string>& known_keys() {
    static const std::set<std::string> keys = {
        "model.byte_input_len", "model.size_trace_len", "model.interval_trace_len",
        "model.hidden_width", "model.repr_dim",
        "loss.epsilon", "loss.alpha", "loss.pair_scale",
        "valley.converge_patience", "valley.overfit_patience", "valley.tolerance",
        "valley.temperature", "valley.max_epochs",
        "optimizer.learning_rate", "optimizer.batch_per_domain",
        "data.classes", "data.domains", "data.samples_per_class_domain", "data.shift_magnitude",
        "run.seed", "run.modes", "run.jsd_class", "run.workers",
    };
    return keys;
}

void check_keys(const nlohmann::json& j, const std::string& prefix) {
    if (!j.is_object()) {
        if (prefix.empty()) throw std::invalid_argument("config root must be a JSON object");
        return;
    }
    for (auto it = j.begin(); it != j.end(); ++it) {
        const std::string path = prefix.empty() ? it.key() : prefix + "." + it.key();
        if (it->is_object()) {
            check_keys(*it, path);
        } else if (!known_keys().count(path)) {
            throw std::invalid_argument("unknown config key: " + path);
        }
    }
}

template <typename T>
void read(const nlohmann::json& j, const char* section, const char* key, T& out) {
    if (j.contains(section) && j[section].contains(key)) out = j[section][key].get<T>();
}

PairScale pair_scale_from_string(const std::string& s) {
    if (s == "literal") return PairScale::literal;
    if (s == "pair-mean") return PairScale::pair_mean;
    throw std::invalid_argument("loss.pair_scale must be 'literal' or 'pair-mean'");
}

}  // namespace

RunConfig RunConfig::from_json(const nlohmann::json& j) {
    check_keys(j, "");
    RunConfig c;
    read(j, "model", "byte_input_len", c.byte_input_len);
    read(j, "model", "size_trace_len", c.size_trace_len);
    read(j, "model", "interval_trace_len", c.interval_trace_len);
    read(j, "model", "hidden_width", c.hidden_width);
    read(j, "model", "repr_dim", c.repr_dim);
    read(j, "loss", "epsilon", c.epsilon);
    read(j, "loss", "alpha", c.alpha);
    if (j.contains("loss") && j["loss"].contains("pair_scale"))
        c.pair_scale = pair_scale_from_string(j["loss"]["pair_scale"].get<std::string>());
    read(j, "valley", "converge_patience", c.valley.converge_patience);
    read(j, "valley", "overfit_patience", c.valley.overfit_patience);
    read(j, "valley", "tolerance", c.valley.tolerance);
    read(j, "valley", "temperature", c.valley.temperature);
    read(j, "valley", "max_epochs", c.valley.max_epochs);
    read(j, "optimizer", "learning_rate", c.learning_rate);
    read(j, "optimizer", "batch_per_domain", c.batch_per_domain);
    read(j, "data", "classes", c.gen_classes);
    read(j, "data", "domains", c.gen_domains);
    read(j, "data", "samples_per_class_domain", c.gen_samples_per_class_domain);
    read(j, "data", "shift_magnitude", c.gen_shift_magnitude);
    read(j, "run", "seed", c.seed);
    read(j, "run", "modes", c.modes);
    read(j, "run", "jsd_class", c.jsd_class);
    read(j, "run", "workers", c.workers);
    c.validate();
    return c;
}

RunConfig RunConfig::load(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open config: " + path);
    nlohmann::json j;
    try {
        is >> j;
    } catch (const std::exception& e) {
        throw std::invalid_argument("config parse error in " + path + ": " + e.what());
    }
    return from_json(j);
}

nlohmann::ordered_json RunConfig::to_json() const {
    nlohmann::ordered_json j;
    j["model"]["byte_input_len"] = byte_input_len;
    j["model"]["size_trace_len"] = size_trace_len;
    j["model"]["interval_trace_len"] = interval_trace_len;
    j["model"]["hidden_width"] = hidden_width;
    j["model"]["repr_dim"] = repr_dim;
    j["loss"]["epsilon"] = epsilon;
    j["loss"]["alpha"] = alpha;
    j["loss"]["pair_scale"] = pair_scale == PairScale::literal ? "literal" : "pair-mean";
    j["valley"]["converge_patience"] = valley.converge_patience;
    j["valley"]["overfit_patience"] = valley.overfit_patience;
    j["valley"]["tolerance"] = valley.tolerance;
    j["valley"]["temperature"] = valley.temperature;
    j["valley"]["max_epochs"] = valley.max_epochs;
    j["optimizer"]["learning_rate"] = learning_rate;
    j["optimizer"]["batch_per_domain"] = batch_per_domain;
    j["data"]["classes"] = gen_classes;
    j["data"]["domains"] = gen_domains;
    j["data"]["samples_per_class_domain"] = gen_samples_per_class_domain;
    j["data"]["shift_magnitude"] = gen_shift_magnitude;
    j["run"]["seed"] = seed;
    j["run"]["modes"] = modes;
    j["run"]["jsd_class"] = jsd_class;
    j["run"]["workers"] = workers;
    return j;
}

void RunConfig::apply_override(const std::string& assignment) {
    const auto eq = assignment.find('=');
    if (eq == std::string::npos)
        throw std::invalid_argument("override must look like section.key=value: " + assignment);
    const std::string path = assignment.substr(0, eq);
    const std::string value = assignment.substr(eq + 1);
    if (!known_keys().count(path)) throw std::invalid_argument("unknown config key: " + path);

    nlohmann::json patch;
    nlohmann::json parsed;
    try {
        parsed = nlohmann::json::parse(value);
    } catch (const std::exception&) {
        parsed = value;  // bare strings (e.g. pair-mean) need no quoting
    }
    const auto dot = path.find('.');
    patch[path.substr(0, dot)][path.substr(dot + 1)] = parsed;

    nlohmann::json merged = to_json();
    merged.merge_patch(patch);
    *this = from_json(merged);
}

void RunConfig::validate() const {
    model_config(2, seed).validate();
    valley.validate();
    if (epsilon < 0.0 || epsilon >= 1.0)
        throw std::invalid_argument("loss.epsilon must be in [0, 1)");
    if (alpha < 0.0) throw std::invalid_argument("loss.alpha must be >= 0");
    if (learning_rate <= 0.0) throw std::invalid_argument("optimizer.learning_rate must be > 0");
    if (batch_per_domain < 1) throw std::invalid_argument("optimizer.batch_per_domain must be >= 1");
    if (gen_shift_magnitude < 0.0 || gen_shift_magnitude > 1.0)
        throw std::invalid_argument("data.shift_magnitude must be in [0, 1]");
    if (gen_classes < 2) throw std::invalid_argument("data.classes must be >= 2");
    if (gen_domains < 1) throw std::invalid_argument("data.domains must be >= 1");
    if (gen_samples_per_class_domain < 1)
        throw std::invalid_argument("data.samples_per_class_domain must be >= 1");
    if (workers < 1) throw std::invalid_argument("run.workers must be >= 1");
    for (const auto& m : modes) mode_from_string(m);
}

ModelConfig RunConfig::model_config(int num_classes, uint64_t model_seed) const {
    ModelConfig cfg;
    cfg.byte_input_len = byte_input_len;
    cfg.size_trace_len = size_trace_len;
    cfg.interval_trace_len = interval_trace_len;
    cfg.hidden_width = hidden_width;
    cfg.repr_dim = repr_dim;
    cfg.num_classes = num_classes;
    cfg.seed = model_seed;
    return cfg;
}

TrainOptions RunConfig::train_options(TrainingMode mode, uint64_t stream_seed) const {
    TrainOptions opts;
    const bool aligned = mode == TrainingMode::unialign || mode == TrainingMode::wo_sme;
    opts.epsilon = aligned ? epsilon : 0.0;
    opts.alpha = aligned ? alpha : 0.0;
    opts.pair_scale = pair_scale;
    opts.learning_rate = learning_rate;
    opts.batch_per_domain = batch_per_domain;
    opts.seed = stream_seed;
    return opts;
}

bool RunConfig::mode_uses_merge(TrainingMode mode) {
    return mode == TrainingMode::unialign || mode == TrainingMode::wo_daf;
}

}  // namespace unialign
