#include "mage/csv.hpp"

#include <cstdio>
#include <ostream>

namespace mage {

std::uint64_t fnv1a64(std::string_view text) {
    std::uint64_t h = 0xcbf29ce484222325ULL;
    for (const unsigned char c : text) {
        h ^= c;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string hex64(std::uint64_t value) {
    char buf[17];
    std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(value));
    return buf;
}

std::string format_real(double value) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.10g", value);
    return buf;
}

void write_csv_preamble(std::ostream& out, std::uint64_t config_hash, std::string_view header) {
    out << "# config_hash=" << hex64(config_hash) << '\n' << header << '\n';
}

} // namespace mage
