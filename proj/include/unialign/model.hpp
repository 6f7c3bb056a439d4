#pragma once

#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace unialign {

/// Shape and seed of the reference traffic classifier.
///
/// The encoder runs one two-layer tanh perceptron per input modality
/// (byte grid, size trace, interval trace), concatenates the three hidden
/// vectors and fuses them with a single linear layer into a representation
/// of dimension `repr_dim`. A linear classifier maps representations to
/// `num_classes` logits. All math is in doubles.
struct ModelConfig {
    int byte_input_len = 1600;
    int size_trace_len = 20;
    int interval_trace_len = 20;
    int hidden_width = 128;
    int repr_dim = 64;
    int num_classes = 2;
    uint64_t seed = 1;

    void validate() const;

    /// Canonical text used for the checkpoint config hash. The seed is
    /// excluded: it selects the starting point, not the parameter layout.
    std::string canonical_string() const;
    uint32_t hash() const;
};

/// Immutable name -> slice map over the flat parameter vector.
struct ParamLayout {
    struct Entry {
        std::string name;
        long offset;
        long rows;
        long cols;  // 1 for bias vectors
    };
    std::vector<Entry> entries;
    long total = 0;

    static std::shared_ptr<const ParamLayout> for_config(const ModelConfig& cfg);
    const Entry& find(const std::string& name) const;
    bool compatible(const ParamLayout& other) const;
};

/// Flat model parameters theta plus their layout.
struct ParamVector {
    std::shared_ptr<const ParamLayout> layout;
    Eigen::VectorXd values;

    long size() const { return values.size(); }

    Eigen::Map<Eigen::MatrixXd> block(const std::string& name);
    Eigen::Map<const Eigen::MatrixXd> block(const std::string& name) const;
};

/// One training batch: per-domain groups of already-normalized features.
struct Batch {
    struct Group {
        int domain = 0;
        Eigen::MatrixXd bytes;      // n x byte_input_len
        Eigen::MatrixXd sizes;      // n x size_trace_len
        Eigen::MatrixXd intervals;  // n x interval_trace_len
        Eigen::VectorXi labels;     // n
    };
    std::vector<Group> groups;

    long total_rows() const;
    void validate(const ModelConfig& cfg) const;
};

/// Forward pass outputs plus the activations backward needs.
struct ForwardResult {
    Eigen::MatrixXd reps;    // B x D
    Eigen::MatrixXd logits;  // B x K
    // Row ranges of each batch group inside reps/logits, ascending domain order.
    std::vector<std::pair<long, long>> group_rows;  // (offset, count)

    // Cached activations, one entry per modality (bytes, sizes, intervals).
    std::array<Eigen::MatrixXd, 3> inputs;
    std::array<Eigen::MatrixXd, 3> hidden1;
    std::array<Eigen::MatrixXd, 3> hidden2;
};

ParamVector init_model(const ModelConfig& cfg);

ForwardResult forward(const ModelConfig& cfg, const ParamVector& params, const Batch& batch);

/// Exact gradient of any scalar whose partials w.r.t. reps and logits are
/// supplied. `fwd` must come from forward() on the same (params, batch).
ParamVector backward(const ModelConfig& cfg, const ParamVector& params, const Batch& batch,
                     const ForwardResult& fwd, const Eigen::MatrixXd& d_reps,
                     const Eigen::MatrixXd& d_logits);

ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double learning_rate);

void save_params(const std::string& path, const ModelConfig& cfg, const ParamVector& params);
ParamVector load_params(const std::string& path, const ModelConfig& cfg);

}  // namespace unialign
