#pragma once

#include <cstdint>
#include <random>
#include <stdexcept>
#include <string>

#include <Eigen/Dense>

namespace urbanfuse {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;
using NodeId = std::int64_t;

/// Malformed or inconsistent input data. The message carries the locus
/// (file, row, column) when one is known.
class DataError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Raised when a training loss becomes non-finite.
class DivergenceError : public std::runtime_error {
public:
    DivergenceError(const std::string& what, int last_finite_epoch, double last_finite_loss)
        : std::runtime_error(what), last_finite_epoch_(last_finite_epoch),
          last_finite_loss_(last_finite_loss) {}

    int last_finite_epoch() const noexcept { return last_finite_epoch_; }
    double last_finite_loss() const noexcept { return last_finite_loss_; }

private:
    int last_finite_epoch_;
    double last_finite_loss_;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for a (seed, stream, substream) triple. Streams
/// keyed by node id keep results independent of evaluation order.
inline std::mt19937_64 rng_stream(std::uint64_t seed, std::uint64_t stream,
                                  std::uint64_t substream = 0) {
    std::uint64_t s = splitmix64(seed);
    s = splitmix64(s ^ splitmix64(stream + 0x632be59bd9b4e019ULL));
    s = splitmix64(s ^ splitmix64(substream + 0x85157af5ULL));
    return std::mt19937_64(s);
}

// Stream tags, one per consumer of randomness.
namespace streams {
inline constexpr std::uint64_t kSpatialKmeans = 1;
inline constexpr std::uint64_t kStaticMeans = 2;
inline constexpr std::uint64_t kStaticNoise = 3;
inline constexpr std::uint64_t kClusterPattern = 4;
inline constexpr std::uint64_t kDynamicNoise = 5;
inline constexpr std::uint64_t kWeightInit = 6;
inline constexpr std::uint64_t kKmeansRestart = 7;
inline constexpr std::uint64_t kSubsample = 8;
inline constexpr std::uint64_t kTsneInit = 9;
inline constexpr std::uint64_t kGraph = 10;
}  // namespace streams

}  // namespace urbanfuse
