#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

namespace scefis {

/// Standard alphabet with padding.
std::string base64_encode(std::span<const std::uint8_t> bytes);
/// Ignores whitespace; throws std::invalid_argument on malformed input.
std::vector<std::uint8_t> base64_decode(const std::string& text);

}  // namespace scefis
