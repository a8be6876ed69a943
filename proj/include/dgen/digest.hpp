#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <string_view>

namespace dgen {

using Digest = std::array<std::uint8_t, 32>;

Digest sha256(std::string_view data);
std::string to_hex(const Digest& digest);
std::string sha256_hex(std::string_view data);

// Stable 64-bit seed derived from a base seed and a string label.
std::uint64_t derive_seed(std::uint64_t base, std::string_view label);

}  // namespace dgen
