#pragma once

#include <charconv>
#include <cmath>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace aqs {

/// Config or input rejected before any work started. CLI maps this to exit code 2.
class ValidationError : public std::runtime_error {
public:
    explicit ValidationError(const std::string& msg) : std::runtime_error(msg) {}
};

/// Failure while running an already-validated job. CLI maps this to exit code 3.
class RuntimeFailure : public std::runtime_error {
public:
    explicit RuntimeFailure(const std::string& msg) : std::runtime_error(msg) {}
};

/// Iterative procedure hit its cap or diverged. CLI maps this to exit code 4.
/// Derives from RuntimeFailure so generic handlers still treat it as one.
class NonConvergence : public RuntimeFailure {
public:
    explicit NonConvergence(const std::string& msg) : RuntimeFailure(msg) {}
};

struct Vec3 {
    double x = 0.0;
    double y = 0.0;
    double z = 0.0;

    Vec3 operator+(const Vec3& o) const { return {x + o.x, y + o.y, z + o.z}; }
    Vec3 operator-(const Vec3& o) const { return {x - o.x, y - o.y, z - o.z}; }
    Vec3 operator*(double s) const { return {x * s, y * s, z * s}; }
    bool operator==(const Vec3& o) const { return x == o.x && y == o.y && z == o.z; }

    double norm() const { return std::sqrt(x * x + y * y + z * z); }
};

inline double distance(const Vec3& a, const Vec3& b) { return (a - b).norm(); }

/// Shortest round-trip decimal form, used everywhere a double reaches an
/// artifact file so that reruns are byte-identical.
inline std::string fmt_double(double v) {
    char buf[64];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    return std::string(buf, res.ptr);
}

/// FNV-1a over raw bytes; manifests record this for the config actually consumed.
inline std::uint64_t fnv1a64(std::string_view bytes) {
    std::uint64_t h = 14695981039346656037ull;
    for (unsigned char c : bytes) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    static const char* digits = "0123456789abcdef";
    std::string s(16, '0');
    for (int i = 15; i >= 0; --i) {
        s[static_cast<std::size_t>(i)] = digits[v & 0xf];
        v >>= 4;
    }
    return s;
}

}  // namespace aqs
