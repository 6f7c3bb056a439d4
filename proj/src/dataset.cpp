#include "unialign/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

#include "unialign/util.hpp"

namespace unialign {

namespace {

using ordered_json = nlohmann::ordered_json;

// Header byte positions zeroed by extraction; the generator keeps them zero
// so synthetic and pcap-derived grids share one layout (20-byte IPv4 header
// followed by the transport ports).
bool is_masked_header_offset(int j) { return (j >= 12 && j <= 19) || (j >= 20 && j <= 23); }

// Generator texture. Class identity is a weak additive code on a small set
// of byte positions plus a per-class packet-size amplitude; per-sample noise
// keeps single features uninformative so classification has to aggregate.
constexpr int kInformativeHeader = 12;
constexpr int kInformativePayload = 12;
constexpr double kClassByteDelta = 8.0;
constexpr double kByteNoise = 30.0;
constexpr double kSizeAmpBase = 350.0;
constexpr double kSizeAmpSpread = 600.0;
constexpr double kSizeFlowNoise = 70.0;
constexpr double kSizePacketNoise = 60.0;

/// Seed-level layout: which byte positions carry class and dialect signal.
struct GeneratorLayout {
    std::array<double, 80> base_header;
    std::array<double, 80> base_payload;
    std::vector<int> info_header;    // non-masked header offsets
    std::vector<int> info_payload;   // payload offsets (0..79)
    std::vector<double> dialect_sign;  // one sign per informative position
};

GeneratorLayout make_layout(uint64_t seed) {
    Rng rng(mix_seed(seed, 0x1A407ull));
    GeneratorLayout layout;
    for (auto& v : layout.base_header) v = 60.0 + 140.0 * rng.uniform01();
    for (auto& v : layout.base_payload) v = 60.0 + 140.0 * rng.uniform01();

    std::vector<int> header_pool;
    for (int j = 0; j < 80; ++j)
        if (!is_masked_header_offset(j)) header_pool.push_back(j);
    rng.shuffle(header_pool);
    layout.info_header.assign(header_pool.begin(), header_pool.begin() + kInformativeHeader);

    std::vector<int> payload_pool(80);
    std::iota(payload_pool.begin(), payload_pool.end(), 0);
    rng.shuffle(payload_pool);
    layout.info_payload.assign(payload_pool.begin(),
                               payload_pool.begin() + kInformativePayload);

    for (int i = 0; i < kInformativeHeader + kInformativePayload; ++i)
        layout.dialect_sign.push_back(rng.uniform01() < 0.5 ? -1.0 : 1.0);
    return layout;
}

struct ClassMotif {
    std::vector<double> byte_code;  // one delta per informative position
    double size_amp;
    double iat_mean;
};

ClassMotif make_motif(uint64_t seed, int cls, int num_classes) {
    Rng rng(mix_seed(seed, 0xC1A5500u, static_cast<uint64_t>(cls)));
    ClassMotif m;
    for (int i = 0; i < kInformativeHeader + kInformativePayload; ++i)
        m.byte_code.push_back(rng.uniform01() < 0.5 ? -kClassByteDelta : kClassByteDelta);
    const double t = num_classes == 1 ? 0.0 : static_cast<double>(cls) / (num_classes - 1);
    m.size_amp = kSizeAmpBase + kSizeAmpSpread * t;
    m.iat_mean = 0.006 * std::pow(2.2, cls % 6);
    return m;
}

uint8_t clamp_byte(double v) {
    return static_cast<uint8_t>(std::clamp(std::lround(v), 0l, 255l));
}

}  // namespace

size_t DomainDataset::total_samples() const {
    size_t n = 0;
    for (const auto& d : domains) n += d.size();
    return n;
}

void DomainDataset::validate() const {
    if (num_classes < 2) throw std::invalid_argument("dataset needs at least two classes");
    // A dataset with no domains at all is representable (e.g. extraction of
    // an empty capture); training and fold construction reject it later.
    for (size_t d = 0; d < domains.size(); ++d) {
        if (domains[d].empty())
            throw std::invalid_argument("domain " + std::to_string(d) + " is empty");
        for (const auto& s : domains[d]) {
            if (s.label < 0 || s.label >= num_classes)
                throw std::invalid_argument("sample label outside class universe");
            if (s.domain != static_cast<int>(d))
                throw std::invalid_argument("sample domain id disagrees with its group");
        }
    }
}

ShiftSpec ShiftSpec::defaults(int num_domains, double magnitude) {
    ShiftSpec spec;
    spec.magnitude = magnitude;
    spec.domains.resize(num_domains);
    for (int d = 0; d < num_domains; ++d) {
        const double t = num_domains == 1 ? 0.0 : 2.0 * d / (num_domains - 1) - 1.0;
        spec.domains[d].header_dialect = 16.0 * t;
        spec.domains[d].payload_skew = 14.0 * t;
        spec.domains[d].size_scale = 0.25 * t;
        spec.domains[d].size_offset = 80.0 * t;
        spec.domains[d].interval_jitter = 0.6 * t;
    }
    return spec;
}

void ShiftSpec::validate(int num_domains) const {
    if (magnitude < 0.0 || magnitude > 1.0)
        throw std::invalid_argument("shift magnitude must be in [0, 1]");
    if (static_cast<int>(domains.size()) != num_domains)
        throw std::invalid_argument("shift spec must list one entry per domain");
}

DomainDataset generate_synthetic(int num_classes, int num_domains, int samples_per_class_domain,
                                 const ShiftSpec& shift, uint64_t seed) {
    if (num_classes < 2) throw std::invalid_argument("generator needs num_classes >= 2");
    if (num_domains < 1) throw std::invalid_argument("generator needs num_domains >= 1");
    if (samples_per_class_domain < 1)
        throw std::invalid_argument("generator needs samples_per_class_domain >= 1");
    shift.validate(num_domains);

    GeneratorLayout layout = make_layout(seed);
    std::vector<ClassMotif> motifs;
    motifs.reserve(num_classes);
    for (int c = 0; c < num_classes; ++c) motifs.push_back(make_motif(seed, c, num_classes));

    const double m = shift.magnitude;
    DomainDataset ds;
    ds.num_classes = num_classes;
    ds.provenance = "synthetic";
    ds.domains.resize(num_domains);

    for (int d = 0; d < num_domains; ++d) {
        const DomainShift& ps = shift.domains[d];
        for (int c = 0; c < num_classes; ++c) {
            const ClassMotif& mo = motifs[c];
            for (int idx = 0; idx < samples_per_class_domain; ++idx) {
                Rng rng(mix_seed(seed, static_cast<uint64_t>(d) << 32 | static_cast<uint32_t>(c),
                                 static_cast<uint64_t>(idx)));
                FlowSample s;
                s.label = c;
                s.domain = d;

                const int n_pkts =
                    std::clamp(9 + static_cast<int>(std::lround(rng.normal() * 2.0)), 4,
                               kTraceLen);
                // Flow-level amplitude noise dominates packet noise, so the
                // size cue lives at the flow scale.
                const double amp = mo.size_amp + rng.normal() * kSizeFlowNoise;

                for (int k = 0; k < n_pkts; ++k) {
                    const double shape = 0.8 + 0.2 * std::sin(0.7 * k + 1.0);
                    double size = amp * shape + rng.normal() * kSizePacketNoise;
                    size = size * (1.0 + m * ps.size_scale) + m * ps.size_offset;
                    size = std::clamp(size, 48.0, 1500.0);
                    const bool outbound = (k / 2) % 2 == 0;
                    s.size_trace[k] = static_cast<int32_t>(outbound ? std::lround(size)
                                                                    : -std::lround(size));
                    if (k > 0) {
                        double u = rng.uniform01();
                        double iat = mo.iat_mean * -std::log1p(-u);
                        iat *= 1.0 + m * ps.interval_jitter;
                        s.interval_trace[k] = std::clamp(iat, 0.0, 60.0);
                    }
                }

                const int n_rows = std::min(n_pkts, kBytePackets);
                for (int p = 0; p < n_rows; ++p) {
                    uint8_t* row = s.byte_grid.data() + p * kBytesPerPacket;
                    for (int j = 0; j < 80; ++j) {
                        if (is_masked_header_offset(j)) continue;
                        row[j] = clamp_byte(layout.base_header[j] + rng.normal() * kByteNoise);
                    }
                    for (int j = 0; j < 80; ++j)
                        row[80 + j] =
                            clamp_byte(layout.base_payload[j] + rng.normal() * kByteNoise);
                    // Class code and domain dialect live on the same small
                    // set of informative positions; the dialect moves the
                    // code along seed-fixed directions.
                    for (size_t i = 0; i < layout.info_header.size(); ++i) {
                        const int j = layout.info_header[i];
                        row[j] = clamp_byte(row[j] + mo.byte_code[i] +
                                            m * ps.header_dialect * layout.dialect_sign[i]);
                    }
                    for (size_t i = 0; i < layout.info_payload.size(); ++i) {
                        const int j = layout.info_payload[i];
                        const size_t code_idx = layout.info_header.size() + i;
                        row[80 + j] =
                            clamp_byte(row[80 + j] + mo.byte_code[code_idx] +
                                       m * ps.payload_skew * layout.dialect_sign[code_idx]);
                    }
                }
                ds.domains[d].push_back(std::move(s));
            }
        }
    }
    return ds;
}

BatchPlan domain_batches(const std::vector<int>& domain_sizes, int batch_per_domain, uint64_t seed,
                         int epoch) {
    if (batch_per_domain < 1) throw std::invalid_argument("batch size must be >= 1");
    if (domain_sizes.empty()) throw std::invalid_argument("no domains to batch");

    int n_batches = std::numeric_limits<int>::max();
    for (int size : domain_sizes) n_batches = std::min(n_batches, size / batch_per_domain);

    std::vector<std::vector<int>> perms(domain_sizes.size());
    for (size_t d = 0; d < domain_sizes.size(); ++d) {
        perms[d].resize(domain_sizes[d]);
        std::iota(perms[d].begin(), perms[d].end(), 0);
        Rng rng(mix_seed(seed, 0xBA7C4000u + static_cast<uint64_t>(epoch), d));
        rng.shuffle(perms[d]);
    }

    BatchPlan plan;
    plan.batches.resize(n_batches);
    for (int b = 0; b < n_batches; ++b) {
        plan.batches[b].resize(domain_sizes.size());
        for (size_t d = 0; d < domain_sizes.size(); ++d)
            plan.batches[b][d].assign(perms[d].begin() + b * batch_per_domain,
                                      perms[d].begin() + (b + 1) * batch_per_domain);
    }
    return plan;
}

void save_dataset(const std::string& path, const DomainDataset& dataset) {
    dataset.validate();
    std::ofstream os(path, std::ios::trunc);
    if (!os) throw std::runtime_error("cannot open for writing: " + path);

    ordered_json header;
    header["record"] = "header";
    header["version"] = 1;
    header["classes"] = dataset.num_classes;
    header["domains"] = dataset.num_domains();
    header["byte_grid"] = {kBytePackets, kBytesPerPacket};
    header["trace_len"] = kTraceLen;
    header["provenance"] = dataset.provenance;
    os << header.dump() << '\n';

    for (const auto& domain : dataset.domains) {
        for (const auto& s : domain) {
            ordered_json rec;
            rec["record"] = "sample";
            rec["domain"] = s.domain;
            rec["label"] = s.label;
            rec["bytes"] = base64_encode(s.byte_grid.data(), s.byte_grid.size());
            rec["sizes"] = s.size_trace;
            rec["intervals"] = s.interval_trace;
            os << rec.dump() << '\n';
        }
    }
    if (!os) throw std::runtime_error("short write: " + path);
}

LoadReport load_dataset(const std::string& path) {
    std::ifstream is(path);
    if (!is) throw std::runtime_error("cannot open dataset: " + path);

    LoadReport report;
    std::string line;
    size_t line_no = 0;
    bool have_header = false;

    auto count_unknown = [&report](const ordered_json& rec,
                                   const std::vector<std::string>& known) {
        for (auto it = rec.begin(); it != rec.end(); ++it)
            if (std::find(known.begin(), known.end(), it.key()) == known.end())
                ++report.unknown_fields;
    };

    while (std::getline(is, line)) {
        ++line_no;
        if (line.empty()) continue;
        ordered_json rec;
        try {
            rec = ordered_json::parse(line);
        } catch (const std::exception& e) {
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": bad record: " + e.what());
        }
        const std::string kind = rec.value("record", "");
        if (!have_header) {
            if (kind != "header")
                throw std::runtime_error(path + ": first record must be the header");
            if (rec.value("version", 0) != 1)
                throw std::runtime_error(path + ": unsupported dataset version");
            const std::vector<int> grid = rec.value("byte_grid", std::vector<int>{});
            if (grid != std::vector<int>{kBytePackets, kBytesPerPacket} ||
                rec.value("trace_len", 0) != kTraceLen)
                throw std::runtime_error(path + ": header feature shape mismatch");
            report.dataset.num_classes = rec.value("classes", 0);
            report.dataset.domains.resize(rec.value("domains", 0));
            report.dataset.provenance = rec.value("provenance", "import");
            count_unknown(rec, {"record", "version", "classes", "domains", "byte_grid",
                                "trace_len", "provenance"});
            have_header = true;
            continue;
        }
        if (kind != "sample")
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": unknown record type '" + kind + "'");
        count_unknown(rec, {"record", "domain", "label", "bytes", "sizes", "intervals"});

        FlowSample s;
        s.domain = rec.at("domain").get<int>();
        s.label = rec.at("label").get<int>();
        const auto bytes = base64_decode(rec.at("bytes").get<std::string>());
        if (bytes.size() != s.byte_grid.size())
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": byte grid length mismatch");
        std::copy(bytes.begin(), bytes.end(), s.byte_grid.begin());
        const auto sizes = rec.at("sizes").get<std::vector<int32_t>>();
        const auto intervals = rec.at("intervals").get<std::vector<double>>();
        if (sizes.size() != kTraceLen || intervals.size() != kTraceLen)
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": trace length mismatch");
        std::copy(sizes.begin(), sizes.end(), s.size_trace.begin());
        std::copy(intervals.begin(), intervals.end(), s.interval_trace.begin());
        if (s.domain < 0 || s.domain >= report.dataset.num_domains())
            throw std::runtime_error(path + ":" + std::to_string(line_no) +
                                     ": domain id outside header range");
        report.dataset.domains[s.domain].push_back(std::move(s));
    }
    if (!have_header) throw std::runtime_error(path + ": empty dataset file");
    report.dataset.validate();
    return report;
}

}  // namespace unialign
