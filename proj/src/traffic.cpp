#include "unialign/traffic.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include "unialign/util.hpp"

namespace unialign {

namespace {

constexpr uint32_t kMagicUs = 0xa1b2c3d4u;
constexpr uint32_t kMagicNs = 0xa1b23c4du;
constexpr uint32_t kMagicUsSwapped = 0xd4c3b2a1u;
constexpr uint32_t kMagicNsSwapped = 0x4d3cb2a1u;

uint32_t read_u32(const uint8_t* p, bool swapped) {
    uint32_t v = get_u32le(p);
    if (swapped) v = __builtin_bswap32(v);
    return v;
}

uint16_t read_u16be(const uint8_t* p) { return static_cast<uint16_t>(p[0] << 8 | p[1]); }
uint32_t read_u32be(const uint8_t* p) {
    return static_cast<uint32_t>(p[0]) << 24 | static_cast<uint32_t>(p[1]) << 16 |
           static_cast<uint32_t>(p[2]) << 8 | static_cast<uint32_t>(p[3]);
}

}  // namespace

PcapFile parse_pcap_bytes(const std::vector<uint8_t>& bytes, const std::string& origin) {
    if (bytes.size() < 24) throw std::runtime_error("pcap too short for global header: " + origin);
    const uint32_t magic = get_u32le(bytes.data());
    bool swapped = false;
    bool nanosecond = false;
    switch (magic) {
        case kMagicUs: break;
        case kMagicNs: nanosecond = true; break;
        case kMagicUsSwapped: swapped = true; break;
        case kMagicNsSwapped:
            swapped = true;
            nanosecond = true;
            break;
        default: {
            std::ostringstream os;
            os << "unknown pcap magic 0x" << std::hex << magic << " in " << origin;
            throw std::runtime_error(os.str());
        }
    }

    PcapFile out;
    out.nanosecond = nanosecond;
    out.link_type = read_u32(bytes.data() + 20, swapped);

    const double subsec_scale = nanosecond ? 1e-9 : 1e-6;
    size_t off = 24;
    while (off < bytes.size()) {
        if (off + 16 > bytes.size())
            throw std::runtime_error("truncated pcap record header: " + origin);
        const uint32_t ts_sec = read_u32(bytes.data() + off, swapped);
        const uint32_t ts_sub = read_u32(bytes.data() + off + 4, swapped);
        const uint32_t incl_len = read_u32(bytes.data() + off + 8, swapped);
        const uint32_t orig_len = read_u32(bytes.data() + off + 12, swapped);
        off += 16;
        if (off + incl_len > bytes.size())
            throw std::runtime_error("truncated pcap packet data: " + origin);
        PcapPacket pkt;
        pkt.timestamp = static_cast<double>(ts_sec) + static_cast<double>(ts_sub) * subsec_scale;
        pkt.orig_len = orig_len;
        pkt.data.assign(bytes.begin() + static_cast<long>(off),
                        bytes.begin() + static_cast<long>(off + incl_len));
        out.packets.push_back(std::move(pkt));
        off += incl_len;
    }
    return out;
}

PcapFile parse_pcap(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw std::runtime_error("cannot open pcap: " + path);
    std::vector<uint8_t> bytes((std::istreambuf_iterator<char>(is)),
                               std::istreambuf_iterator<char>());
    return parse_pcap_bytes(bytes, path);
}

FlowKey FlowKey::canonical(uint32_t src_ip, uint16_t src_port, uint32_t dst_ip, uint16_t dst_port,
                           uint8_t protocol) {
    FlowKey k;
    k.protocol = protocol;
    if (std::tie(src_ip, src_port) <= std::tie(dst_ip, dst_port)) {
        k.ip_a = src_ip;
        k.port_a = src_port;
        k.ip_b = dst_ip;
        k.port_b = dst_port;
    } else {
        k.ip_a = dst_ip;
        k.port_a = dst_port;
        k.ip_b = src_ip;
        k.port_b = src_port;
    }
    return k;
}

std::string FlowKey::to_string() const {
    auto ip = [](uint32_t v) {
        std::ostringstream os;
        os << (v >> 24) << '.' << ((v >> 16) & 0xff) << '.' << ((v >> 8) & 0xff) << '.'
           << (v & 0xff);
        return os.str();
    };
    std::ostringstream os;
    os << ip(ip_a) << ':' << port_a << "<->" << ip(ip_b) << ':' << port_b << '/'
       << static_cast<int>(protocol);
    return os.str();
}

AssemblyResult assemble_flows(const PcapFile& file, double idle_timeout_s) {
    if (file.link_type != 1)
        throw std::runtime_error("unsupported link type (Ethernet only): " +
                                 std::to_string(file.link_type));

    AssemblyResult out;
    struct Endpoint {
        uint32_t ip;
        uint16_t port;
    };
    struct Active {
        size_t flow_index;
        double last_ts;
        Endpoint initiator;
    };
    std::map<FlowKey, Active> active;

    for (const auto& pkt : file.packets) {
        const auto& d = pkt.data;
        if (d.size() < 14) {
            ++out.counters.malformed;
            continue;
        }
        const uint16_t ethertype = read_u16be(d.data() + 12);
        if (ethertype == 0x8100) {
            ++out.counters.vlan;
            continue;
        }
        if (ethertype == 0x86dd) {
            ++out.counters.ipv6;
            continue;
        }
        if (ethertype != 0x0800) {
            ++out.counters.non_ip;
            continue;
        }

        const size_t ip_off = 14;
        if (d.size() < ip_off + 20) {
            ++out.counters.malformed;
            continue;
        }
        const uint8_t* ip = d.data() + ip_off;
        if ((ip[0] >> 4) != 4) {
            ++out.counters.malformed;
            continue;
        }
        const size_t ihl = static_cast<size_t>(ip[0] & 0x0f) * 4;
        if (ihl < 20 || d.size() < ip_off + ihl) {
            ++out.counters.malformed;
            continue;
        }
        const uint8_t proto = ip[9];
        if (proto != 6 && proto != 17) {
            ++out.counters.non_tcp_udp;
            continue;
        }
        const uint32_t src_ip = read_u32be(ip + 12);
        const uint32_t dst_ip = read_u32be(ip + 16);

        const size_t tr_off = ip_off + ihl;
        size_t tr_len = 0;
        if (proto == 6) {
            if (d.size() < tr_off + 20) {
                ++out.counters.malformed;
                continue;
            }
            tr_len = static_cast<size_t>(d[tr_off + 12] >> 4) * 4;
            if (tr_len < 20 || d.size() < tr_off + tr_len) {
                ++out.counters.malformed;
                continue;
            }
        } else {
            if (d.size() < tr_off + 8) {
                ++out.counters.malformed;
                continue;
            }
            tr_len = 8;
        }
        const uint16_t src_port = read_u16be(d.data() + tr_off);
        const uint16_t dst_port = read_u16be(d.data() + tr_off + 2);

        FlowKey key = FlowKey::canonical(src_ip, src_port, dst_ip, dst_port, proto);
        auto it = active.find(key);
        if (it != active.end() && pkt.timestamp - it->second.last_ts > idle_timeout_s)
            active.erase(it), it = active.end();
        if (it == active.end()) {
            out.flows.push_back({key, {}});
            it = active.insert_or_assign(key, Active{out.flows.size() - 1, pkt.timestamp,
                                                     Endpoint{src_ip, src_port}})
                     .first;
        }
        it->second.last_ts = pkt.timestamp;

        FlowPacket fp;
        fp.timestamp = pkt.timestamp;
        fp.wire_len = pkt.orig_len;
        fp.from_initiator =
            src_ip == it->second.initiator.ip && src_port == it->second.initiator.port;
        // Masked headers: IP + transport headers with the IPv4 address bytes
        // (offsets 12..19 of the IP header) and the transport port bytes
        // (offsets 0..3) zero-filled in place.
        fp.masked_headers.assign(d.begin() + static_cast<long>(ip_off),
                                 d.begin() + static_cast<long>(tr_off + tr_len));
        std::fill(fp.masked_headers.begin() + 12, fp.masked_headers.begin() + 20, uint8_t{0});
        std::fill(fp.masked_headers.begin() + static_cast<long>(ihl),
                  fp.masked_headers.begin() + static_cast<long>(ihl) + 4, uint8_t{0});
        fp.payload.assign(d.begin() + static_cast<long>(tr_off + tr_len), d.end());
        out.flows[it->second.flow_index].packets.push_back(std::move(fp));
        ++out.counters.accepted;
    }
    return out;
}

FlowSample extract_features(const Flow& flow, int label, int domain) {
    if (flow.packets.empty()) throw std::invalid_argument("cannot extract features of empty flow");
    FlowSample s;
    s.label = label;
    s.domain = domain;

    const int n_bytes = std::min<int>(kBytePackets, static_cast<int>(flow.packets.size()));
    for (int p = 0; p < n_bytes; ++p) {
        const auto& pkt = flow.packets[p];
        uint8_t* row = s.byte_grid.data() + p * kBytesPerPacket;
        const int hdr = std::min<int>(80, static_cast<int>(pkt.masked_headers.size()));
        std::copy_n(pkt.masked_headers.data(), hdr, row);
        const int pay = std::min<int>(80, static_cast<int>(pkt.payload.size()));
        std::copy_n(pkt.payload.data(), pay, row + 80);
    }

    const int n_trace = std::min<int>(kTraceLen, static_cast<int>(flow.packets.size()));
    for (int p = 0; p < n_trace; ++p) {
        const auto& pkt = flow.packets[p];
        const int32_t len = static_cast<int32_t>(pkt.wire_len);
        s.size_trace[p] = pkt.from_initiator ? len : -len;
        s.interval_trace[p] =
            p == 0 ? 0.0
                   : std::max(0.0, pkt.timestamp - flow.packets[p - 1].timestamp);
    }
    return s;
}

NormalizedSample normalize(const FlowSample& sample) {
    NormalizedSample out;
    out.bytes.resize(kByteGridLen);
    for (int i = 0; i < kByteGridLen; ++i) out.bytes[i] = sample.byte_grid[i] / 255.0;
    out.sizes.resize(kTraceLen);
    for (int i = 0; i < kTraceLen; ++i) {
        double v = std::clamp<double>(sample.size_trace[i], -1500.0, 1500.0);
        out.sizes[i] = v / 1500.0;
    }
    const double cap = std::log1p(60.0);
    out.intervals.resize(kTraceLen);
    for (int i = 0; i < kTraceLen; ++i)
        out.intervals[i] = std::log1p(std::max(0.0, sample.interval_trace[i])) / cap;
    return out;
}

}  // namespace unialign
