#pragma once

#include <cstddef>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace tvcn {

using NodeId = std::uint32_t;

/// Undirected link identity, normalized so that `u < v`.
struct LinkKey {
    NodeId u = 0;
    NodeId v = 0;

    LinkKey() = default;
    LinkKey(NodeId a, NodeId b) : u(a < b ? a : b), v(a < b ? b : a) {}

    friend bool operator==(const LinkKey&, const LinkKey&) = default;
    friend auto operator<=>(const LinkKey&, const LinkKey&) = default;
};

inline std::string to_string(const LinkKey& key) {
    return "(" + std::to_string(key.u) + "," + std::to_string(key.v) + ")";
}

// Error hierarchy. Every failure the library reports derives from Error so
// callers can catch one type at the CLI boundary.
struct Error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct InvalidParameter : Error {
    using Error::Error;
};
struct SelectionError : Error {
    using Error::Error;
};
struct EvolutionStalled : Error {
    using Error::Error;
};
struct LookupError : Error {
    using Error::Error;
};
struct UnreachableError : Error {
    using Error::Error;
};
struct ConsistencyError : Error {
    using Error::Error;
};
struct DegenerateCapacity : Error {
    using Error::Error;
};
struct DegenerateDelay : Error {
    using Error::Error;
};
struct DomainError : Error {
    using Error::Error;
};
struct InsufficientData : Error {
    using Error::Error;
};
struct ShapeError : Error {
    using Error::Error;
};
struct SingularRate : Error {
    using Error::Error;
};
struct ParseError : Error {
    using Error::Error;
};
struct EmissionError : Error {
    using Error::Error;
};

/// Raised by a dense solve when a pivot falls below the singularity threshold.
/// `pivot_index` is the elimination column that failed.
struct SingularMatrix : Error {
    std::size_t pivot_index;
    SingularMatrix(const std::string& what, std::size_t pivot)
        : Error(what), pivot_index(pivot) {}
};

/// Raised when the fluid equilibrium could not be reached; carries the last
/// scaled residuals so callers can report how far off the iterate was.
struct SolverDivergence : Error {
    double window_residual;
    double capacity_residual;
    double slackness_residual;
    SolverDivergence(const std::string& what, double window, double capacity, double slackness)
        : Error(what),
          window_residual(window),
          capacity_residual(capacity),
          slackness_residual(slackness) {}
};

/// Raised by finite differencing when the regime (bottleneck set) differs
/// somewhere inside the stencil.
struct BoundaryCrossing : Error {
    std::size_t column;
    BoundaryCrossing(const std::string& what, std::size_t col) : Error(what), column(col) {}
};

}  // namespace tvcn
