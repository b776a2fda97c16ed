#pragma once

#include <cstdint>
#include <vector>

#include "core/errors.hpp"

namespace fedent {

// Flat 64-bit parameter/gradient vector. All model state in the system is a
// ParamVector of the model's fixed dimension d.
using ParamVector = std::vector<double>;

// Throws when two vectors that must share a dimension do not.
void check_same_length(const ParamVector& a, const ParamVector& b, const char* op);

// Sequential-order dot product. The accumulation order is fixed (index 0..d-1)
// so results do not depend on thread scheduling.
double dot(const ParamVector& a, const ParamVector& b);

// y + alpha * x, inputs untouched.
ParamVector axpy(double alpha, const ParamVector& x, const ParamVector& y);

// y += alpha * x.
void axpy_inplace(double alpha, const ParamVector& x, ParamVector& y);

double l2norm_sq(const ParamVector& v);
double l2norm(const ParamVector& v);

// True iff every entry is finite.
bool all_finite(const ParamVector& v);

// Counter-based pseudo-random stream. Each (seed, stream_id) pair yields a
// bit-identical draw sequence regardless of what other streams exist or in
// which order they are consumed, so per-client streams stay independent of
// iteration order. The generator is splitmix64 over a keyed counter.
class RngStream {
public:
    RngStream(std::uint64_t seed, std::uint64_t stream_id);

    std::uint64_t seed() const noexcept { return seed_; }
    std::uint64_t stream_id() const noexcept { return stream_id_; }

    std::uint64_t next_u64();

    // Uniform on [0, 1) with 53 random bits.
    double uniform01();
    // Uniform on (0, 1); safe as a log() argument.
    double uniform_open01();
    double uniform(double lo, double hi);

    // Standard normal via Box-Muller (deterministic, caches the spare value).
    double normal();

    // Gamma(shape, 1). Marsaglia-Tsang for shape >= 1; the shape < 1 boost is
    // applied in log space by log_gamma below, which callers should prefer for
    // tiny shapes.
    double gamma(double shape);

    // log of a Gamma(shape, 1) draw; exact for shape >= 1, and avoids the
    // underflow-to-zero of the U^(1/shape) boost when shape is tiny.
    double log_gamma_draw(double shape);

    // Uniform integer in [0, n).
    std::uint64_t next_below(std::uint64_t n);

    template <typename T>
    void shuffle(std::vector<T>& values) {
        if (values.size() < 2) return;
        for (std::size_t i = values.size() - 1; i > 0; --i) {
            std::size_t j = static_cast<std::size_t>(next_below(i + 1));
            std::swap(values[i], values[j]);
        }
    }

    // Independent child stream; children with distinct tags never collide
    // with the parent or each other.
    RngStream substream(std::uint64_t tag) const;

private:
    std::uint64_t seed_;
    std::uint64_t stream_id_;
    std::uint64_t key_;
    std::uint64_t counter_ = 0;
    bool has_spare_normal_ = false;
    double spare_normal_ = 0.0;
};

// Stream-id builder for the well-known roles used across the engine. Keeping
// every consumer on a distinct (purpose, a, b) triple is what makes runs
// reproducible under any execution order.
namespace streams {
constexpr std::uint64_t kInitParams = 1;
constexpr std::uint64_t kPartition = 2;
constexpr std::uint64_t kClientSampling = 3;
constexpr std::uint64_t kLocalBatches = 4;
constexpr std::uint64_t kRateBatch = 5;
constexpr std::uint64_t kFixedPointBatch = 6;
constexpr std::uint64_t kBoundsProbe = 7;
constexpr std::uint64_t kSynthetic = 8;

std::uint64_t id(std::uint64_t purpose, std::uint64_t a = 0, std::uint64_t b = 0);
}  // namespace streams

}  // namespace fedent
