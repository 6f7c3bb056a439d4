#include "unialign/model.hpp"

#include <bit>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "unialign/util.hpp"

namespace unialign {

namespace {

constexpr uint32_t kParamMagic = 0x5641'5055u;  // "UPAV" little-endian
constexpr uint32_t kParamVersion = 1;

const char* kModalities[3] = {"bytes", "sizes", "intervals"};

}  // namespace

void ModelConfig::validate() const {
    auto positive = [](int v, const char* name) {
        if (v < 1) throw std::invalid_argument(std::string(name) + " must be >= 1");
    };
    positive(byte_input_len, "byte_input_len");
    positive(size_trace_len, "size_trace_len");
    positive(interval_trace_len, "interval_trace_len");
    positive(hidden_width, "hidden_width");
    positive(repr_dim, "repr_dim");
    if (num_classes < 2) throw std::invalid_argument("num_classes must be >= 2");
}

std::string ModelConfig::canonical_string() const {
    std::ostringstream os;
    os << "byte_input_len=" << byte_input_len << ";size_trace_len=" << size_trace_len
       << ";interval_trace_len=" << interval_trace_len << ";hidden_width=" << hidden_width
       << ";repr_dim=" << repr_dim << ";num_classes=" << num_classes;
    return os.str();
}

uint32_t ModelConfig::hash() const { return fnv1a32(canonical_string()); }

std::shared_ptr<const ParamLayout> ParamLayout::for_config(const ModelConfig& cfg) {
    cfg.validate();
    auto layout = std::make_shared<ParamLayout>();
    long off = 0;
    auto add = [&](const std::string& name, long rows, long cols) {
        layout->entries.push_back({name, off, rows, cols});
        off += rows * cols;
    };
    const long h = cfg.hidden_width;
    const long in_dims[3] = {cfg.byte_input_len, cfg.size_trace_len, cfg.interval_trace_len};
    for (int m = 0; m < 3; ++m) {
        const std::string p = kModalities[m];
        add(p + ".w1", h, in_dims[m]);
        add(p + ".b1", h, 1);
        add(p + ".w2", h, h);
        add(p + ".b2", h, 1);
    }
    add("fuse.w", cfg.repr_dim, 3 * h);
    add("fuse.b", cfg.repr_dim, 1);
    add("cls.w", cfg.num_classes, cfg.repr_dim);
    add("cls.b", cfg.num_classes, 1);
    layout->total = off;
    return layout;
}

const ParamLayout::Entry& ParamLayout::find(const std::string& name) const {
    for (const auto& e : entries)
        if (e.name == name) return e;
    throw std::invalid_argument("unknown parameter block: " + name);
}

bool ParamLayout::compatible(const ParamLayout& other) const {
    if (total != other.total || entries.size() != other.entries.size()) return false;
    for (size_t i = 0; i < entries.size(); ++i) {
        const auto& a = entries[i];
        const auto& b = other.entries[i];
        if (a.name != b.name || a.offset != b.offset || a.rows != b.rows || a.cols != b.cols)
            return false;
    }
    return true;
}

Eigen::Map<Eigen::MatrixXd> ParamVector::block(const std::string& name) {
    const auto& e = layout->find(name);
    return {values.data() + e.offset, e.rows, e.cols};
}

Eigen::Map<const Eigen::MatrixXd> ParamVector::block(const std::string& name) const {
    const auto& e = layout->find(name);
    return {values.data() + e.offset, e.rows, e.cols};
}

long Batch::total_rows() const {
    long n = 0;
    for (const auto& g : groups) n += g.bytes.rows();
    return n;
}

void Batch::validate(const ModelConfig& cfg) const {
    if (groups.empty()) throw std::invalid_argument("batch has no domain groups");
    for (const auto& g : groups) {
        const long n = g.bytes.rows();
        if (n == 0) throw std::invalid_argument("empty domain group in batch");
        if (g.bytes.cols() != cfg.byte_input_len || g.sizes.cols() != cfg.size_trace_len ||
            g.intervals.cols() != cfg.interval_trace_len)
            throw std::invalid_argument("batch feature width does not match model config");
        if (g.sizes.rows() != n || g.intervals.rows() != n || g.labels.size() != n)
            throw std::invalid_argument("inconsistent row counts inside a batch group");
        if (!g.bytes.allFinite() || !g.sizes.allFinite() || !g.intervals.allFinite())
            throw std::invalid_argument("non-finite feature values in batch");
        for (long i = 0; i < n; ++i)
            if (g.labels[i] < 0 || g.labels[i] >= cfg.num_classes)
                throw std::invalid_argument("batch label outside [0, num_classes)");
    }
}

ParamVector init_model(const ModelConfig& cfg) {
    auto layout = ParamLayout::for_config(cfg);
    ParamVector p{layout, Eigen::VectorXd::Zero(layout->total)};
    Rng rng(cfg.seed);
    // Scaled-uniform (Glorot) weights, zero biases. Entries are drawn in
    // layout order so the parameter vector is a pure function of the seed.
    for (const auto& e : layout->entries) {
        if (e.cols == 1) continue;  // bias
        const double limit = std::sqrt(6.0 / static_cast<double>(e.rows + e.cols));
        double* dst = p.values.data() + e.offset;
        for (long i = 0; i < e.rows * e.cols; ++i) dst[i] = rng.uniform(-limit, limit);
    }
    return p;
}

ForwardResult forward(const ModelConfig& cfg, const ParamVector& params, const Batch& batch) {
    batch.validate(cfg);
    const long B = batch.total_rows();
    const long H = cfg.hidden_width;

    ForwardResult out;
    out.group_rows.reserve(batch.groups.size());
    out.inputs[0].resize(B, cfg.byte_input_len);
    out.inputs[1].resize(B, cfg.size_trace_len);
    out.inputs[2].resize(B, cfg.interval_trace_len);
    long row = 0;
    for (const auto& g : batch.groups) {
        const long n = g.bytes.rows();
        out.inputs[0].middleRows(row, n) = g.bytes;
        out.inputs[1].middleRows(row, n) = g.sizes;
        out.inputs[2].middleRows(row, n) = g.intervals;
        out.group_rows.emplace_back(row, n);
        row += n;
    }

    Eigen::MatrixXd concat(B, 3 * H);
    for (int m = 0; m < 3; ++m) {
        const std::string p = kModalities[m];
        auto w1 = params.block(p + ".w1");
        auto b1 = params.block(p + ".b1");
        auto w2 = params.block(p + ".w2");
        auto b2 = params.block(p + ".b2");
        out.hidden1[m] =
            ((out.inputs[m] * w1.transpose()).rowwise() + b1.col(0).transpose()).array().tanh();
        out.hidden2[m] =
            ((out.hidden1[m] * w2.transpose()).rowwise() + b2.col(0).transpose()).array().tanh();
        concat.middleCols(m * H, H) = out.hidden2[m];
    }

    auto wf = params.block("fuse.w");
    auto bf = params.block("fuse.b");
    auto wc = params.block("cls.w");
    auto bc = params.block("cls.b");
    out.reps = (concat * wf.transpose()).rowwise() + bf.col(0).transpose();
    out.logits = (out.reps * wc.transpose()).rowwise() + bc.col(0).transpose();
    return out;
}

ParamVector backward(const ModelConfig& cfg, const ParamVector& params, const Batch& batch,
                     const ForwardResult& fwd, const Eigen::MatrixXd& d_reps,
                     const Eigen::MatrixXd& d_logits) {
    const long B = batch.total_rows();
    const long H = cfg.hidden_width;
    if (d_reps.rows() != B || d_reps.cols() != cfg.repr_dim)
        throw std::invalid_argument("d_reps shape mismatch");
    if (d_logits.rows() != B || d_logits.cols() != cfg.num_classes)
        throw std::invalid_argument("d_logits shape mismatch");

    ParamVector grad{params.layout, Eigen::VectorXd::Zero(params.layout->total)};

    auto wc = params.block("cls.w");
    grad.block("cls.w") = d_logits.transpose() * fwd.reps;
    grad.block("cls.b").col(0) = d_logits.colwise().sum();
    Eigen::MatrixXd d_z = d_logits * wc + d_reps;

    Eigen::MatrixXd concat(B, 3 * H);
    for (int m = 0; m < 3; ++m) concat.middleCols(m * H, H) = fwd.hidden2[m];
    auto wf = params.block("fuse.w");
    grad.block("fuse.w") = d_z.transpose() * concat;
    grad.block("fuse.b").col(0) = d_z.colwise().sum();
    Eigen::MatrixXd d_concat = d_z * wf;

    for (int m = 0; m < 3; ++m) {
        const std::string p = kModalities[m];
        auto w2 = params.block(p + ".w2");
        Eigen::MatrixXd d_pre2 = d_concat.middleCols(m * H, H).array() *
                                 (1.0 - fwd.hidden2[m].array().square());
        grad.block(p + ".w2") = d_pre2.transpose() * fwd.hidden1[m];
        grad.block(p + ".b2").col(0) = d_pre2.colwise().sum();
        Eigen::MatrixXd d_pre1 =
            (d_pre2 * w2).array() * (1.0 - fwd.hidden1[m].array().square());
        grad.block(p + ".w1") = d_pre1.transpose() * fwd.inputs[m];
        grad.block(p + ".b1").col(0) = d_pre1.colwise().sum();
    }
    return grad;
}

ParamVector sgd_step(const ParamVector& params, const ParamVector& grads, double learning_rate) {
    if (!params.layout->compatible(*grads.layout))
        throw std::invalid_argument("parameter/gradient layout mismatch");
    if (!grads.values.allFinite())
        throw std::invalid_argument("non-finite gradient entries");
    ParamVector next{params.layout, params.values - learning_rate * grads.values};
    return next;
}

void save_params(const std::string& path, const ModelConfig& cfg, const ParamVector& params) {
    std::string buf;
    buf.reserve(20 + static_cast<size_t>(params.size()) * 8);
    put_u32le(buf, kParamMagic);
    put_u32le(buf, kParamVersion);
    put_u32le(buf, cfg.hash());
    put_u64le(buf, static_cast<uint64_t>(params.size()));
    for (long i = 0; i < params.size(); ++i)
        put_u64le(buf, std::bit_cast<uint64_t>(params.values[i]));
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);
    os.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!os) throw std::runtime_error("short write: " + path);
}

ParamVector load_params(const std::string& path, const ModelConfig& cfg) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open checkpoint: " + path);
    std::vector<uint8_t> buf((std::istreambuf_iterator<char>(is)),
                             std::istreambuf_iterator<char>());
    if (buf.size() < 20) throw std::runtime_error("truncated checkpoint: " + path);
    if (get_u32le(buf.data()) != kParamMagic)
        throw std::runtime_error("bad checkpoint magic: " + path);
    if (get_u32le(buf.data() + 4) != kParamVersion)
        throw std::runtime_error("unsupported checkpoint version: " + path);
    if (get_u32le(buf.data() + 8) != cfg.hash())
        throw std::runtime_error("checkpoint config hash mismatch: " + path);
    const uint64_t count = get_u64le(buf.data() + 12);
    auto layout = ParamLayout::for_config(cfg);
    if (count != static_cast<uint64_t>(layout->total))
        throw std::runtime_error("checkpoint parameter count mismatch: " + path);
    if (buf.size() != 20 + count * 8)
        throw std::runtime_error("truncated checkpoint: " + path);
    ParamVector p{layout, Eigen::VectorXd(layout->total)};
    for (uint64_t i = 0; i < count; ++i)
        p.values[static_cast<long>(i)] = std::bit_cast<double>(get_u64le(buf.data() + 20 + i * 8));
    return p;
}

}  // namespace unialign
