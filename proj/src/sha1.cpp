#include "chf/sha1.hpp"

#include <array>
#include <cstdint>
#include <cstring>

namespace chf {

namespace {

inline std::uint32_t rotl(std::uint32_t v, int s) {
    return (v << s) | (v >> (32 - s));
}

struct Sha1State {
    std::array<std::uint32_t, 5> h{0x67452301u, 0xefcdab89u, 0x98badcfeu,
                                   0x10325476u, 0xc3d2e1f0u};

    void process_block(const unsigned char* p) {
        std::uint32_t w[80];
        for (int i = 0; i < 16; ++i) {
            w[i] = (std::uint32_t(p[4 * i]) << 24) | (std::uint32_t(p[4 * i + 1]) << 16) |
                   (std::uint32_t(p[4 * i + 2]) << 8) | std::uint32_t(p[4 * i + 3]);
        }
        for (int i = 16; i < 80; ++i) {
            w[i] = rotl(w[i - 3] ^ w[i - 8] ^ w[i - 14] ^ w[i - 16], 1);
        }
        std::uint32_t a = h[0], b = h[1], c = h[2], d = h[3], e = h[4];
        for (int i = 0; i < 80; ++i) {
            std::uint32_t f, k;
            if (i < 20) {
                f = (b & c) | (~b & d);
                k = 0x5a827999u;
            } else if (i < 40) {
                f = b ^ c ^ d;
                k = 0x6ed9eba1u;
            } else if (i < 60) {
                f = (b & c) | (b & d) | (c & d);
                k = 0x8f1bbcdcu;
            } else {
                f = b ^ c ^ d;
                k = 0xca62c1d6u;
            }
            const std::uint32_t t = rotl(a, 5) + f + e + k + w[i];
            e = d;
            d = c;
            c = rotl(b, 30);
            b = a;
            a = t;
        }
        h[0] += a;
        h[1] += b;
        h[2] += c;
        h[3] += d;
        h[4] += e;
    }
};

}  // namespace

std::string sha1_hex(std::string_view data) {
    Sha1State st;
    const auto* bytes = reinterpret_cast<const unsigned char*>(data.data());
    const std::size_t n = data.size();
    std::size_t i = 0;
    for (; i + 64 <= n; i += 64) st.process_block(bytes + i);

    unsigned char tail[128];
    std::size_t tail_len = n - i;
    std::memcpy(tail, bytes + i, tail_len);
    tail[tail_len++] = 0x80;
    while (tail_len % 64 != 56) tail[tail_len++] = 0;
    const std::uint64_t bits = std::uint64_t(n) * 8;
    for (int s = 7; s >= 0; --s) tail[tail_len++] = (bits >> (8 * s)) & 0xff;
    for (std::size_t off = 0; off < tail_len; off += 64) st.process_block(tail + off);

    static const char* hex = "0123456789abcdef";
    std::string out;
    out.reserve(40);
    for (std::uint32_t word : st.h) {
        for (int s = 28; s >= 0; s -= 4) out += hex[(word >> s) & 0xf];
    }
    return out;
}

std::string git_blob_sha1(std::string_view content) {
    std::string msg = "blob " + std::to_string(content.size());
    msg += '\0';
    msg += content;
    return sha1_hex(msg);
}

}  // namespace chf
