#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace testsupport {

/// Byte-level fixture builders for the classic pcap format and the
/// Ethernet/IPv4/TCP/UDP framing the extractor consumes. All multi-byte
/// pcap fields honor the chosen endianness; network headers are big-endian.

inline void push_u16be(std::vector<uint8_t>& v, uint16_t x) {
    v.push_back(static_cast<uint8_t>(x >> 8));
    v.push_back(static_cast<uint8_t>(x & 0xff));
}
inline void push_u32be(std::vector<uint8_t>& v, uint32_t x) {
    v.push_back(static_cast<uint8_t>(x >> 24));
    v.push_back(static_cast<uint8_t>((x >> 16) & 0xff));
    v.push_back(static_cast<uint8_t>((x >> 8) & 0xff));
    v.push_back(static_cast<uint8_t>(x & 0xff));
}

class PcapBuilder {
public:
    explicit PcapBuilder(bool swapped = false, bool nanosecond = false, uint32_t link_type = 1)
        : swapped_(swapped), nanosecond_(nanosecond) {
        put_u32(nanosecond ? 0xa1b23c4du : 0xa1b2c3d4u);
        put_u16(2);
        put_u16(4);
        put_u32(0);  // thiszone
        put_u32(0);  // sigfigs
        put_u32(65535);
        put_u32(link_type);
    }

    void add_record(uint32_t ts_sec, uint32_t ts_subsec, const std::vector<uint8_t>& data,
                    uint32_t orig_len = 0) {
        put_u32(ts_sec);
        put_u32(ts_subsec);
        put_u32(static_cast<uint32_t>(data.size()));
        put_u32(orig_len == 0 ? static_cast<uint32_t>(data.size()) : orig_len);
        bytes_.insert(bytes_.end(), data.begin(), data.end());
    }

    const std::vector<uint8_t>& bytes() const { return bytes_; }
    std::vector<uint8_t>& mutable_bytes() { return bytes_; }

private:
    void put_u16(uint16_t x) {
        if (swapped_) {
            bytes_.push_back(static_cast<uint8_t>(x >> 8));
            bytes_.push_back(static_cast<uint8_t>(x & 0xff));
        } else {
            bytes_.push_back(static_cast<uint8_t>(x & 0xff));
            bytes_.push_back(static_cast<uint8_t>(x >> 8));
        }
    }
    void put_u32(uint32_t x) {
        if (swapped_) {
            for (int i = 3; i >= 0; --i) bytes_.push_back(static_cast<uint8_t>((x >> (8 * i)) & 0xff));
        } else {
            for (int i = 0; i < 4; ++i) bytes_.push_back(static_cast<uint8_t>((x >> (8 * i)) & 0xff));
        }
    }

    bool swapped_;
    bool nanosecond_;
    std::vector<uint8_t> bytes_;
};

inline std::vector<uint8_t> ethernet_frame(uint16_t ethertype,
                                           const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> f = {0x02, 0x00, 0x00, 0x00, 0x00, 0x01,
                              0x02, 0x00, 0x00, 0x00, 0x00, 0x02};
    push_u16be(f, ethertype);
    f.insert(f.end(), payload.begin(), payload.end());
    return f;
}

inline std::vector<uint8_t> ipv4_packet(uint32_t src_ip, uint32_t dst_ip, uint8_t proto,
                                        const std::vector<uint8_t>& payload, uint8_t ttl = 64) {
    std::vector<uint8_t> p;
    p.push_back(0x45);  // version 4, IHL 5
    p.push_back(0x00);  // DSCP/ECN
    push_u16be(p, static_cast<uint16_t>(20 + payload.size()));
    push_u16be(p, 0x1234);  // identification
    push_u16be(p, 0x4000);  // DF, fragment offset 0
    p.push_back(ttl);
    p.push_back(proto);
    push_u16be(p, 0xbeef);  // checksum (not validated by the parser)
    push_u32be(p, src_ip);
    push_u32be(p, dst_ip);
    p.insert(p.end(), payload.begin(), payload.end());
    return p;
}

inline std::vector<uint8_t> tcp_segment(uint16_t sport, uint16_t dport, uint32_t seq,
                                        const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> t;
    push_u16be(t, sport);
    push_u16be(t, dport);
    push_u32be(t, seq);
    push_u32be(t, 0);       // ack
    t.push_back(0x50);      // data offset 5 words
    t.push_back(0x18);      // PSH|ACK
    push_u16be(t, 0xffff);  // window
    push_u16be(t, 0xcafe);  // checksum
    push_u16be(t, 0);       // urgent
    t.insert(t.end(), payload.begin(), payload.end());
    return t;
}

inline std::vector<uint8_t> udp_datagram(uint16_t sport, uint16_t dport,
                                         const std::vector<uint8_t>& payload) {
    std::vector<uint8_t> u;
    push_u16be(u, sport);
    push_u16be(u, dport);
    push_u16be(u, static_cast<uint16_t>(8 + payload.size()));
    push_u16be(u, 0xfeed);  // checksum
    u.insert(u.end(), payload.begin(), payload.end());
    return u;
}

inline std::vector<uint8_t> tcp_frame(uint32_t src_ip, uint16_t sport, uint32_t dst_ip,
                                      uint16_t dport, uint32_t seq,
                                      const std::vector<uint8_t>& payload) {
    return ethernet_frame(0x0800, ipv4_packet(src_ip, dst_ip, 6,
                                              tcp_segment(sport, dport, seq, payload)));
}

inline std::vector<uint8_t> udp_frame(uint32_t src_ip, uint16_t sport, uint32_t dst_ip,
                                      uint16_t dport, const std::vector<uint8_t>& payload) {
    return ethernet_frame(0x0800,
                          ipv4_packet(src_ip, dst_ip, 17, udp_datagram(sport, dport, payload)));
}

inline std::string write_temp(const std::vector<uint8_t>& bytes, const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw std::runtime_error("cannot write fixture " + path);
    std::fwrite(bytes.data(), 1, bytes.size(), f);
    std::fclose(f);
    return path;
}

}  // namespace testsupport
