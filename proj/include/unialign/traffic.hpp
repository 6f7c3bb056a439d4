#pragma once

#include <compare>
#include <cstdint>
#include <string>
#include <vector>

#include "unialign/dataset.hpp"

namespace unialign {

struct PcapPacket {
    double timestamp = 0.0;  // seconds, f64
    uint32_t orig_len = 0;   // length on the wire
    std::vector<uint8_t> data;
};

struct PcapFile {
    uint32_t link_type = 0;
    bool nanosecond = false;
    std::vector<PcapPacket> packets;
};

/// Classic-pcap reader. Accepts all four magic variants (LE/BE, us/ns) and
/// normalizes timestamps to seconds. Throws on unknown magic or a truncated
/// record; snaplen-truncated packets pass through with their captured bytes.
PcapFile parse_pcap(const std::string& path);
PcapFile parse_pcap_bytes(const std::vector<uint8_t>& bytes, const std::string& origin = "<mem>");

/// Canonical bidirectional 5-tuple: the (ip, port) endpoint that compares
/// lower is stored first, so both directions map to the same key.
struct FlowKey {
    uint32_t ip_a = 0;
    uint16_t port_a = 0;
    uint32_t ip_b = 0;
    uint16_t port_b = 0;
    uint8_t protocol = 0;

    static FlowKey canonical(uint32_t src_ip, uint16_t src_port, uint32_t dst_ip,
                             uint16_t dst_port, uint8_t protocol);
    auto operator<=>(const FlowKey&) const = default;
    std::string to_string() const;
};

/// One decoded IPv4/TCP-or-UDP packet within a flow.
struct FlowPacket {
    double timestamp = 0.0;
    uint32_t wire_len = 0;
    bool from_initiator = true;                // relative to the flow's first packet
    std::vector<uint8_t> masked_headers;       // IP + transport headers, addr/port bytes zeroed
    std::vector<uint8_t> payload;              // transport payload (captured part)
};

struct Flow {
    FlowKey key;
    std::vector<FlowPacket> packets;  // arrival order
};

struct AssemblyCounters {
    uint64_t non_ethernet = 0;
    uint64_t vlan = 0;
    uint64_t ipv6 = 0;
    uint64_t non_ip = 0;
    uint64_t non_tcp_udp = 0;
    uint64_t malformed = 0;
    uint64_t accepted = 0;
};

struct AssemblyResult {
    std::vector<Flow> flows;  // ordered by first-packet arrival
    AssemblyCounters counters;
};

/// Groups packets into bidirectional flows. A gap longer than
/// `idle_timeout_s` between consecutive packets of one key starts a new
/// flow. Unsupported or malformed packets are counted, never fatal.
AssemblyResult assemble_flows(const PcapFile& file, double idle_timeout_s = 60.0);

/// Builds the fixed-shape feature tensor of one flow: per packet among the
/// first 10, 80 masked header bytes plus 80 payload bytes (zero-padded);
/// signed sizes and inter-arrival seconds from the first 20 packets.
FlowSample extract_features(const Flow& flow, int label, int domain);

struct NormalizedSample {
    std::vector<double> bytes;      // /255 -> [0, 1]
    std::vector<double> sizes;      // clip +-1500, /1500 -> [-1, 1]
    std::vector<double> intervals;  // log1p(x) / log1p(60) -> [0, ~1]
};

NormalizedSample normalize(const FlowSample& sample);

}  // namespace unialign
