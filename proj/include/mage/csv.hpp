#pragma once

#include <cstdint>
#include <iosfwd>
#include <string>
#include <string_view>

namespace mage {

std::uint64_t fnv1a64(std::string_view text);

/// 16 lowercase hex digits.
std::string hex64(std::uint64_t value);

/// Shortest round-trippable-enough decimal form used in every CSV artifact.
std::string format_real(double value);

/// Writes the `# config_hash=<hex>` comment line followed by `header`.
void write_csv_preamble(std::ostream& out, std::uint64_t config_hash, std::string_view header);

} // namespace mage
