#pragma once

#include <cstdint>
#include <cstring>
#include <string>
#include <vector>

namespace cdrscope {

// 64-bit FNV-1a. Used as a determinism fingerprint for artifacts and the
// leakage guard, not as an integrity or security primitive.
class Fnv1a {
public:
    Fnv1a& bytes(const void* data, size_t len) {
        auto* p = static_cast<const unsigned char*>(data);
        for (size_t i = 0; i < len; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
        return *this;
    }
    Fnv1a& str(const std::string& s) { return bytes(s.data(), s.size()); }
    Fnv1a& u64(uint64_t v) { return bytes(&v, sizeof v); }
    Fnv1a& f64(double v) {
        uint64_t bits;
        std::memcpy(&bits, &v, sizeof bits);
        return u64(bits);
    }
    template <typename T>
    Fnv1a& span(const std::vector<T>& v) {
        return bytes(v.data(), v.size() * sizeof(T));
    }
    uint64_t digest() const { return h_; }

private:
    uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_hex(uint64_t h) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[i] = digits[h & 0xf];
        h >>= 4;
    }
    return s;
}

}  // namespace cdrscope
