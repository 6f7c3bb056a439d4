#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace unialign {

inline constexpr int kBytePackets = 10;
inline constexpr int kBytesPerPacket = 160;  // 80 masked header bytes + 80 payload bytes
inline constexpr int kByteGridLen = kBytePackets * kBytesPerPacket;
inline constexpr int kTraceLen = 20;

/// One flow's multimodal feature tensor plus its class and domain labels.
struct FlowSample {
    std::array<uint8_t, kByteGridLen> byte_grid{};   // row-major: packet, then byte
    std::array<int32_t, kTraceLen> size_trace{};     // signed: + initiator->responder
    std::array<double, kTraceLen> interval_trace{};  // nonnegative seconds, first is 0
    int label = 0;
    int domain = 0;
};

/// Samples grouped by dense domain id, sharing one class universe.
struct DomainDataset {
    int num_classes = 0;
    std::vector<std::vector<FlowSample>> domains;
    std::string provenance;  // pcap | synthetic | import

    int num_domains() const { return static_cast<int>(domains.size()); }
    size_t total_samples() const;
    void validate() const;
};

/// Per-domain perturbations of the synthetic generator. Every knob is
/// multiplied by the global magnitude, so magnitude 0 makes all domains
/// identically distributed regardless of the per-domain entries.
struct DomainShift {
    double header_dialect = 0.0;   // added to selected header byte positions
    double payload_skew = 0.0;     // shifts the payload byte-noise mean
    double size_scale = 0.0;       // relative packet-size scaling
    double size_offset = 0.0;      // additive packet-size offset (bytes)
    double interval_jitter = 0.0;  // relative inter-arrival scaling
};

struct ShiftSpec {
    double magnitude = 0.0;  // in [0, 1]
    std::vector<DomainShift> domains;

    /// Evenly spread per-domain perturbations for S domains.
    static ShiftSpec defaults(int num_domains, double magnitude);
    void validate(int num_domains) const;
};

/// Deterministic multi-domain synthetic traffic. Class identity lives in
/// byte motifs and size-trace shapes shared across domains; domain identity
/// comes from the ShiftSpec perturbations.
DomainDataset generate_synthetic(int num_classes, int num_domains, int samples_per_class_domain,
                                 const ShiftSpec& shift, uint64_t seed);

/// Index-level batch plan: per epoch, every batch draws exactly
/// `batch_per_domain` samples from every listed domain; trailing short
/// groups are dropped. The shuffle is a pure function of (seed, epoch).
struct BatchPlan {
    // batches[b][d] = row indices into domain d's sample list.
    std::vector<std::vector<std::vector<int>>> batches;
};

BatchPlan domain_batches(const std::vector<int>& domain_sizes, int batch_per_domain, uint64_t seed,
                         int epoch);

struct LoadReport {
    DomainDataset dataset;
    int unknown_fields = 0;  // ignored with a warning by callers
};

/// Line-delimited dataset file: a header record followed by one record per
/// sample. Round-trips are lossless.
void save_dataset(const std::string& path, const DomainDataset& dataset);
LoadReport load_dataset(const std::string& path);

}  // namespace unialign
