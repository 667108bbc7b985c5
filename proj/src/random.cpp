#include "drivepoison/random.hpp"

#include <limits>
#include <numeric>
#include <stdexcept>

namespace drivepoison {

namespace {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9E3779B97F4A7C15ULL;
    x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ULL;
    x = (x ^ (x >> 27)) * 0x94D049BB133111EBULL;
    return x ^ (x >> 31);
}

}  // namespace

std::uint64_t derive_seed(std::uint64_t master, std::uint64_t index) {
    return splitmix64(splitmix64(master) ^ (index * 0xD1B54A32D192ED03ULL + 1));
}

double SeededRng::uniform01() {
    return static_cast<double>(engine_() >> 11) * 0x1.0p-53;
}

double SeededRng::uniform(double lo, double hi) {
    return lo + (hi - lo) * uniform01();
}

std::size_t SeededRng::index(std::size_t n) {
    if (n == 0) {
        throw std::invalid_argument("SeededRng::index: empty range");
    }
    // Rejection sampling keeps the draw unbiased.
    const std::uint64_t bound = static_cast<std::uint64_t>(n);
    const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() -
                                std::numeric_limits<std::uint64_t>::max() % bound;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return static_cast<std::size_t>(x % bound);
}

int SeededRng::between(int lo, int hi) {
    if (hi < lo) {
        throw std::invalid_argument("SeededRng::between: hi < lo");
    }
    return lo + static_cast<int>(index(static_cast<std::size_t>(hi - lo) + 1));
}

std::vector<std::size_t> SeededRng::sample_indices(std::size_t n, std::size_t count) {
    if (count > n) {
        throw std::invalid_argument("SeededRng::sample_indices: count exceeds population");
    }
    std::vector<std::size_t> pool(n);
    std::iota(pool.begin(), pool.end(), std::size_t{0});
    // Partial Fisher-Yates: the first `count` slots are the sample.
    for (std::size_t i = 0; i < count; ++i) {
        std::swap(pool[i], pool[i + index(n - i)]);
    }
    pool.resize(count);
    return pool;
}

}  // namespace drivepoison
