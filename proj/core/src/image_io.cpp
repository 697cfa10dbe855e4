#include "scefis/image_io.hpp"

#include <cctype>
#include <cstring>
#include <fstream>
#include <memory>
#include <string>

#include <png.h>

namespace scefis {

namespace {

bool is_png(std::span<const std::uint8_t> bytes) {
    static constexpr std::uint8_t sig[8] = {0x89, 'P', 'N', 'G', 0x0d, 0x0a, 0x1a, 0x0a};
    return bytes.size() >= 8 && std::memcmp(bytes.data(), sig, 8) == 0;
}

GrayImage decode_png(std::span<const std::uint8_t> bytes) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_memory(&image, bytes.data(), bytes.size())) {
        throw ImageIoError(std::string("png decode failed: ") + image.message);
    }
    image.format = PNG_FORMAT_GRAY;
    std::vector<std::uint8_t> data(PNG_IMAGE_SIZE(image));
    if (!png_image_finish_read(&image, nullptr, data.data(), 0, nullptr)) {
        png_image_free(&image);
        throw ImageIoError(std::string("png decode failed: ") + image.message);
    }
    const int w = static_cast<int>(image.width);
    const int h = static_cast<int>(image.height);
    png_image_free(&image);
    return GrayImage(w, h, std::move(data));
}

// Minimal PGM reader: P5 (binary) and P2 (ascii), maxval <= 255 or rescaled.
GrayImage decode_pgm(std::span<const std::uint8_t> bytes) {
    std::size_t pos = 0;
    auto skip_ws = [&] {
        while (pos < bytes.size()) {
            if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else if (std::isspace(bytes[pos])) {
                ++pos;
            } else {
                break;
            }
        }
    };
    auto read_int = [&]() -> long {
        skip_ws();
        long v = 0;
        bool any = false;
        while (pos < bytes.size() && std::isdigit(bytes[pos])) {
            v = v * 10 + (bytes[pos] - '0');
            ++pos;
            any = true;
            if (v > (1L << 30)) throw ImageIoError("pgm header value too large");
        }
        if (!any) throw ImageIoError("malformed pgm header");
        return v;
    };
    if (bytes.size() < 2 || bytes[0] != 'P' || (bytes[1] != '5' && bytes[1] != '2')) {
        throw ImageIoError("unsupported image format (expected PNG or PGM)");
    }
    const bool binary = bytes[1] == '5';
    pos = 2;
    const long w = read_int();
    const long h = read_int();
    const long maxval = read_int();
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw ImageIoError("invalid pgm header");
    const std::size_t n = static_cast<std::size_t>(w) * static_cast<std::size_t>(h);
    std::vector<std::uint8_t> data(n);
    auto scale = [&](long v) {
        if (v > maxval) throw ImageIoError("pgm sample exceeds maxval");
        return static_cast<std::uint8_t>(maxval == 255 ? v : (v * 255 + maxval / 2) / maxval);
    };
    if (binary) {
        ++pos;  // single whitespace after maxval
        const std::size_t bps = maxval > 255 ? 2 : 1;
        if (bytes.size() < pos + n * bps) throw ImageIoError("truncated pgm data");
        for (std::size_t i = 0; i < n; ++i) {
            long v = bytes[pos + i * bps];
            if (bps == 2) v = (v << 8) | bytes[pos + i * bps + 1];
            data[i] = scale(v);
        }
    } else {
        for (std::size_t i = 0; i < n; ++i) data[i] = scale(read_int());
    }
    return GrayImage(static_cast<int>(w), static_cast<int>(h), std::move(data));
}

}  // namespace

GrayImage decode_image(std::span<const std::uint8_t> bytes) {
    if (is_png(bytes)) return decode_png(bytes);
    return decode_pgm(bytes);
}

std::vector<std::uint8_t> read_file_bytes(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ImageIoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

GrayImage read_image(const std::filesystem::path& path) {
    try {
        return decode_image(read_file_bytes(path));
    } catch (const ImageIoError& e) {
        throw ImageIoError(path.string() + ": " + e.what());
    }
}

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
    png_image image;
    std::memset(&image, 0, sizeof image);
    image.version = PNG_IMAGE_VERSION;
    image.width = static_cast<png_uint_32>(img.width());
    image.height = static_cast<png_uint_32>(img.height());
    image.format = PNG_FORMAT_GRAY;
    png_alloc_size_t size = 0;
    if (!png_image_write_to_memory(&image, nullptr, &size, 0, img.pixels().data(), 0, nullptr)) {
        throw ImageIoError(std::string("png encode failed: ") + image.message);
    }
    std::vector<std::uint8_t> out(size);
    if (!png_image_write_to_memory(&image, out.data(), &size, 0, img.pixels().data(), 0, nullptr)) {
        throw ImageIoError(std::string("png encode failed: ") + image.message);
    }
    out.resize(size);
    return out;
}

void write_file_atomic(const std::filesystem::path& path, std::span<const std::uint8_t> bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    auto tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw ImageIoError("cannot write " + tmp.string());
        out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        out.flush();
        if (!out) throw ImageIoError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void write_text_atomic(const std::filesystem::path& path, const std::string& text) {
    write_file_atomic(path, std::span(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
    write_file_atomic(path, encode_png(img));
}

BinaryMask mask_from_image(const GrayImage& img) {
    std::vector<std::uint8_t> labels(img.size());
    auto px = img.pixels();
    for (std::size_t i = 0; i < px.size(); ++i) labels[i] = px[i] ? 1 : 0;
    return BinaryMask(img.width(), img.height(), std::move(labels));
}

GrayImage mask_to_image(const BinaryMask& mask) {
    std::vector<std::uint8_t> data(mask.size());
    auto lb = mask.labels();
    for (std::size_t i = 0; i < lb.size(); ++i) data[i] = lb[i] ? 255 : 0;
    return GrayImage(mask.width(), mask.height(), std::move(data));
}

BinaryMask decode_mask(std::span<const std::uint8_t> bytes) { return mask_from_image(decode_image(bytes)); }

BinaryMask read_mask(const std::filesystem::path& path) { return mask_from_image(read_image(path)); }

std::vector<std::uint8_t> encode_mask_png(const BinaryMask& mask) { return encode_png(mask_to_image(mask)); }

void write_mask_png(const std::filesystem::path& path, const BinaryMask& mask) {
    write_file_atomic(path, encode_mask_png(mask));
}

}  // namespace scefis
