#pragma once

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

namespace radalign {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// Base of the project's exception hierarchy.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// A documented precondition was violated by the caller.
class PreconditionError : public Error {
public:
    explicit PreconditionError(const std::string& msg) : Error(msg) {}
};

// A binary or text artifact on disk does not match its format.
class FormatError : public Error {
public:
    explicit FormatError(const std::string& msg) : Error(msg) {}
};

// A JSON document violates its schema; carries the offending field path.
class SchemaError : public Error {
public:
    SchemaError(const std::string& field_path, const std::string& msg)
        : Error("schema violation at '" + field_path + "': " + msg),
          field(field_path) {}
    std::string field;
};

// An LLM reply could not be parsed; carries the raw response verbatim.
class ParseError : public Error {
public:
    ParseError(const std::string& msg, std::string raw)
        : Error(msg), raw_response(std::move(raw)) {}
    std::string raw_response;
};

// The LLM endpoint could not be reached or returned a transport-level failure.
class TransportError : public Error {
public:
    explicit TransportError(const std::string& msg) : Error(msg) {}
};

class FileError : public Error {
public:
    FileError(const std::string& path, const std::string& msg)
        : Error(msg + ": " + path), path(path) {}
    std::string path;
};

// A metric is undefined for the given inputs (e.g. single-class AUC).
class MetricError : public Error {
public:
    explicit MetricError(const std::string& msg) : Error(msg) {}
};

class TrainError : public Error {
public:
    explicit TrainError(const std::string& msg) : Error(msg) {}
};

inline uint64_t fnv1a64(const void* data, size_t len, uint64_t h = 14695981039346656037ull) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (size_t i = 0; i < len; ++i) {
        h ^= p[i];
        h *= 1099511628211ull;
    }
    return h;
}

inline uint64_t fnv1a64(const std::string& s) { return fnv1a64(s.data(), s.size()); }

inline uint64_t splitmix64(uint64_t& state) {
    uint64_t z = (state += 0x9e3779b97f4a7c15ull);
    z = (z ^ (z >> 30)) * 0xbf58476d1ce4e5b9ull;
    z = (z ^ (z >> 27)) * 0x94d049bb133111ebull;
    return z ^ (z >> 31);
}

using Rng = std::mt19937_64;

// Uniform in [0, 1). Built from the engine's standardized raw output so
// streams are reproducible across standard libraries.
inline double uniform01(Rng& rng) {
    return static_cast<double>(rng() >> 11) * 0x1.0p-53;
}

inline double uniform(Rng& rng, double lo, double hi) {
    return lo + (hi - lo) * uniform01(rng);
}

// Box-Muller; avoids std::normal_distribution, which is not portable
// across standard library implementations.
inline double gaussian(Rng& rng) {
    double u1 = uniform01(rng);
    double u2 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

}  // namespace radalign
