#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include <json.hpp>

#include "unialign/dataset.hpp"
#include "unialign/ensemble.hpp"
#include "unialign/losses.hpp"
#include "unialign/model.hpp"
#include "unialign/trainer.hpp"

namespace unialign {

enum class TrainingMode { unialign, standard, wo_daf, wo_sme };

std::string to_string(TrainingMode mode);
TrainingMode mode_from_string(const std::string& name);

/// Full run configuration with the framework's default hyperparameters.
/// An empty config file yields exactly these values.
struct RunConfig {
    // model
    int byte_input_len = kByteGridLen;
    int size_trace_len = kTraceLen;
    int interval_trace_len = kTraceLen;
    int hidden_width = 128;
    int repr_dim = 64;

    // loss
    double epsilon = 0.1;
    double alpha = 0.5;
    PairScale pair_scale = PairScale::pair_mean;

    // valley
    ValleyConfig valley;  // N_s=10, N_e=5, r=1.1, tau=0.01, T_tr=120

    // optimizer
    double learning_rate = 2.0e-3;
    int batch_per_domain = 64;

    // data (synthetic generator)
    int gen_classes = 5;
    int gen_domains = 3;
    int gen_samples_per_class_domain = 300;
    double gen_shift_magnitude = 0.5;

    // run
    uint64_t seed = 1;
    std::vector<std::string> modes = {"unialign", "standard"};
    int jsd_class = -1;  // -1: class with the most test-domain samples
    int workers = 1;

    static RunConfig from_json(const nlohmann::json& j);
    static RunConfig load(const std::string& path);
    nlohmann::ordered_json to_json() const;

    /// Dotted-path override, e.g. "valley.max_epochs=40".
    void apply_override(const std::string& assignment);
    void validate() const;

    ModelConfig model_config(int num_classes, uint64_t model_seed) const;
    TrainOptions train_options(TrainingMode mode, uint64_t stream_seed) const;
    /// SME modes return the merged parameters, the others the best
    /// validation-accuracy checkpoint.
    static bool mode_uses_merge(TrainingMode mode);
};

}  // namespace unialign
