#include "mage/rng.hpp"

namespace mage {

std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

Rng Rng::stream(std::uint64_t master, std::uint64_t index) {
    return Rng(splitmix64(splitmix64(master) ^ splitmix64(index + 0x632be59bd9b4e019ULL)));
}

std::uint64_t Rng::below(std::uint64_t n) {
    // rejection sampling on the top of the range to stay unbiased
    const std::uint64_t limit = UINT64_MAX - UINT64_MAX % n;
    std::uint64_t x = engine_();
    while (x >= limit) {
        x = engine_();
    }
    return x % n;
}

} // namespace mage
