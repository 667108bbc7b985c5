#pragma once

#include <cstddef>
#include <cstdint>
#include <random>
#include <span>
#include <utility>
#include <vector>

namespace drivepoison {

/// Mixes (master, index) into an independent 64-bit seed, so per-item seeds
/// do not depend on generation order.
std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index);

/// Seeded generator whose outputs are identical on every platform.
/// std::mt19937_64 is fully specified by the standard; the standard
/// distributions are not, so the draws below are implemented here.
class SeededRng {
public:
    explicit SeededRng(std::uint64_t seed) : engine_(seed) {}

    std::uint64_t next() { return engine_(); }

    /// Uniform in [0, 1) with 53 bits of precision.
    double uniform01();
    double uniform(double lo, double hi);

    /// Uniform integer in [0, n). n must be positive.
    std::size_t index(std::size_t n);

    /// Uniform integer in [lo, hi].
    int between(int lo, int hi);

    template <typename T>
    void shuffle(std::span<T> items) {
        for (std::size_t i = items.size(); i > 1; --i) {
            std::swap(items[i - 1], items[index(i)]);
        }
    }

    /// `count` distinct indices from [0, n) in selection order.
    std::vector<std::size_t> sample_indices(std::size_t n, std::size_t count);

private:
    std::mt19937_64 engine_;
};

}  // namespace drivepoison
