#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <stdexcept>
#include <vector>

#include "scefis/image.hpp"

namespace scefis {

class ImageIoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Decodes PNG or binary/ASCII PGM; color input is converted to 8-bit gray.
GrayImage decode_image(std::span<const std::uint8_t> bytes);
GrayImage read_image(const std::filesystem::path& path);

std::vector<std::uint8_t> encode_png(const GrayImage& img);
void write_png(const std::filesystem::path& path, const GrayImage& img);

/// Any nonzero pixel is object.
BinaryMask mask_from_image(const GrayImage& img);
/// Object pixels become 255.
GrayImage mask_to_image(const BinaryMask& mask);

BinaryMask decode_mask(std::span<const std::uint8_t> bytes);
BinaryMask read_mask(const std::filesystem::path& path);
std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask);
void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask);

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path);
/// Writes to a sibling temporary then renames over `path`.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);

}  // namespace scefis
