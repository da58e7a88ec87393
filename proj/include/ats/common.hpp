// Shared plumbing: error types, seeded randomness, little-endian binary I/O,
// content hashing and atomic file replacement.
#pragma once

#include <bit>
#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <istream>
#include <limits>
#include <ostream>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include <Eigen/Dense>

namespace ats {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

// ---------------------------------------------------------------------------
// Errors. Each category maps onto one CLI exit code.
// ---------------------------------------------------------------------------

class Error : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Invalid hyperparameters, flags or config files (exit code 1).
class ConfigError : public Error {
public:
    using Error::Error;
};

/// Malformed or missing input data, unreadable model files (exit code 2).
class DataError : public Error {
public:
    using Error::Error;
};

/// Dimension mismatch between tensors or sequences.
class ShapeError : public Error {
public:
    using Error::Error;
};

/// Unknown token, id or set.
class LookupError : public Error {
public:
    using Error::Error;
};

/// Non-finite loss or parameters (exit code 3).
class NumericalError : public Error {
public:
    using Error::Error;
};

/// Magic, version or truncation problems when reading a binary file.
class FormatError : public DataError {
public:
    using DataError::DataError;
};

// ---------------------------------------------------------------------------
// Randomness. mt19937_64 output is fixed by the standard; the distribution
// helpers below are written out so results do not depend on the stdlib.
// ---------------------------------------------------------------------------

class Rng {
public:
    explicit Rng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform integer in [0, n).
    std::uint64_t index(std::uint64_t n) {
        if (n == 0) throw ConfigError("Rng::index: empty range");
        const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                    std::numeric_limits<std::uint64_t>::max() % n;
        std::uint64_t x;
        do {
            x = engine_();
        } while (x >= limit);
        return x % n;
    }

    /// Uniform real in [0, 1).
    double uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

    double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }

    template <typename T>
    void shuffle(std::vector<T>& v) {
        for (std::size_t i = v.size(); i > 1; --i) {
            const auto j = static_cast<std::size_t>(index(i));
            std::swap(v[i - 1], v[j]);
        }
    }

    /// Independent child stream; used to derive per-trial and per-stage seeds.
    std::uint64_t fork() { return splitmix(engine_()); }

    static std::uint64_t splitmix(std::uint64_t z) {
        z += 0x9e3779b97f4a7c15ULL;
        z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ULL;
        z = (z ^ (z >> 27)) * 0x94d049bb133111ebULL;
        return z ^ (z >> 31);
    }

private:
    std::mt19937_64 engine_;
};

inline void fill_uniform(Matrix& m, Rng& rng, double lo, double hi) {
    // column-major walk keeps the draw order tied to the storage order
    for (Eigen::Index j = 0; j < m.cols(); ++j)
        for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = rng.uniform(lo, hi);
}

inline void fill_uniform(Vector& v, Rng& rng, double lo, double hi) {
    for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = rng.uniform(lo, hi);
}

// ---------------------------------------------------------------------------
// Hashing (FNV-1a 64).
// ---------------------------------------------------------------------------

class Fnv1a {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    void update(std::string_view s) { update(s.data(), s.size()); }
    std::uint64_t digest() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::uint64_t fnv1a(std::string_view s) {
    Fnv1a h;
    h.update(s);
    return h.digest();
}

inline std::string hex64(std::uint64_t v) {
    static constexpr char digits[] = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, v >>= 4) out[static_cast<std::size_t>(i)] = digits[v & 0xf];
    return out;
}

// ---------------------------------------------------------------------------
// Little-endian binary I/O.
// ---------------------------------------------------------------------------

class BinaryWriter {
public:
    explicit BinaryWriter(std::ostream& os) : os_(os) {}

    void bytes(std::string_view s) { os_.write(s.data(), static_cast<std::streamsize>(s.size())); }

    void u32(std::uint32_t v) {
        char b[4];
        for (int i = 0; i < 4; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        os_.write(b, 4);
    }

    void u64(std::uint64_t v) {
        char b[8];
        for (int i = 0; i < 8; ++i) b[i] = static_cast<char>((v >> (8 * i)) & 0xff);
        os_.write(b, 8);
    }

    void f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s);
    }

    /// Column-major, matching Eigen's default storage.
    void matrix(const Matrix& m) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) f64(m(i, j));
    }

    void vector(const Vector& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) f64(v(i));
    }

private:
    std::ostream& os_;
};

class BinaryReader {
public:
    explicit BinaryReader(std::istream& is) : is_(is) {}

    std::string bytes(std::size_t n) {
        std::string s(n, '\0');
        is_.read(s.data(), static_cast<std::streamsize>(n));
        if (static_cast<std::size_t>(is_.gcount()) != n) throw FormatError("unexpected end of file");
        return s;
    }

    std::uint32_t u32() {
        const auto b = bytes(4);
        std::uint32_t v = 0;
        for (int i = 3; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
        return v;
    }

    std::uint64_t u64() {
        const auto b = bytes(8);
        std::uint64_t v = 0;
        for (int i = 7; i >= 0; --i) v = (v << 8) | static_cast<unsigned char>(b[static_cast<std::size_t>(i)]);
        return v;
    }

    double f64() { return std::bit_cast<double>(u64()); }

    std::string str(std::size_t max_len = 1u << 20) {
        const auto n = u32();
        if (n > max_len) throw FormatError("string length " + std::to_string(n) + " exceeds limit");
        return bytes(n);
    }

    void matrix(Matrix& m) {
        for (Eigen::Index j = 0; j < m.cols(); ++j)
            for (Eigen::Index i = 0; i < m.rows(); ++i) m(i, j) = f64();
    }

    void vector(Vector& v) {
        for (Eigen::Index i = 0; i < v.size(); ++i) v(i) = f64();
    }

    bool at_end() { return is_.peek() == std::char_traits<char>::eof(); }

private:
    std::istream& is_;
};

// ---------------------------------------------------------------------------
// Files.
// ---------------------------------------------------------------------------

/// Writes via a sibling temp file and renames, so a failure never leaves a
/// half-written artifact at `path`.
template <typename WriteFn>
void write_file_atomic(const std::filesystem::path& path, WriteFn&& fn, bool binary = false) {
    namespace fs = std::filesystem;
    if (path.has_parent_path()) fs::create_directories(path.parent_path());
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream os(tmp, binary ? std::ios::binary | std::ios::trunc : std::ios::trunc);
        if (!os) throw DataError("cannot open '" + path.string() + "' for writing");
        try {
            fn(os);
        } catch (...) {
            os.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw;
        }
        os.flush();
        if (!os) {
            os.close();
            std::error_code ec;
            fs::remove(tmp, ec);
            throw DataError("write failed for '" + path.string() + "'");
        }
    }
    fs::rename(tmp, path);
}

inline std::string read_file(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open '" + path.string() + "'");
    std::ostringstream ss;
    ss << is.rdbuf();
    return ss.str();
}

inline std::uint64_t hash_file(const std::filesystem::path& path) { return fnv1a(read_file(path)); }

/// Shortest round-trippable decimal form of a double.
inline std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

inline bool all_finite(const Matrix& m) { return m.allFinite(); }

}  // namespace ats
