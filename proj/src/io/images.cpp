#include "physgs/io.hpp"

#include <png.h>

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace physgs::io {

Image read_png(const fs::path& path)
{
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    if (png_image_begin_read_from_file(&png, path.string().c_str()) == 0) {
        throw FormatError(path.string() + ": " + png.message);
    }
    const bool color = (png.format & PNG_FORMAT_FLAG_COLOR) != 0;
    const bool alpha = (png.format & PNG_FORMAT_FLAG_ALPHA) != 0;
    int channels = 1;
    if (color) {
        png.format = alpha ? PNG_FORMAT_RGBA : PNG_FORMAT_RGB;
        channels = alpha ? 4 : 3;
    } else {
        png.format = alpha ? PNG_FORMAT_GA : PNG_FORMAT_GRAY;
        channels = alpha ? 2 : 1;
    }
    std::vector<png_byte> buffer(PNG_IMAGE_SIZE(png));
    if (png_image_finish_read(&png, nullptr, buffer.data(), 0, nullptr) == 0) {
        const std::string msg = png.message;
        png_image_free(&png);
        throw FormatError(path.string() + ": " + msg);
    }
    Image out(static_cast<int>(png.width), static_cast<int>(png.height), channels);
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        out.data[i] = buffer[i] / 255.0;
    }
    return out;
}

void write_png(const Image& image, const fs::path& path)
{
    if (image.empty()) {
        throw FormatError(path.string() + ": cannot write an empty image");
    }
    png_image png{};
    png.version = PNG_IMAGE_VERSION;
    png.width = static_cast<png_uint_32>(image.width);
    png.height = static_cast<png_uint_32>(image.height);
    switch (image.channels) {
    case 1:
        png.format = PNG_FORMAT_GRAY;
        break;
    case 3:
        png.format = PNG_FORMAT_RGB;
        break;
    case 4:
        png.format = PNG_FORMAT_RGBA;
        break;
    default:
        throw FormatError(path.string() + ": PNG needs 1, 3 or 4 channels");
    }
    std::vector<png_byte> buffer(image.data.size());
    for (std::size_t i = 0; i < buffer.size(); ++i) {
        const double v = std::isfinite(image.data[i]) ? std::clamp(image.data[i], 0.0, 1.0) : 0.0;
        buffer[i] = static_cast<png_byte>(std::lround(v * 255.0));
    }
    ensure_parent(path);
    if (png_image_write_to_file(&png, path.string().c_str(), 0, buffer.data(), 0, nullptr) == 0) {
        throw FormatError(path.string() + ": " + png.message);
    }
}

Image read_pfm(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw FormatError(path.string() + ": cannot open");
    }
    std::string magic;
    int w = 0;
    int h = 0;
    double scale = 0.0;
    in >> magic >> w >> h >> scale;
    if (!in || (magic != "Pf" && magic != "PF") || w <= 0 || h <= 0 || scale == 0.0) {
        throw FormatError(path.string() + ": malformed PFM header");
    }
    in.get(); // single whitespace byte before the payload
    const int channels = magic == "PF" ? 3 : 1;
    Image out(w, h, channels);
    std::vector<std::uint32_t> row(static_cast<std::size_t>(w) * channels);
    for (int y = h - 1; y >= 0; --y) {
        if (!in.read(reinterpret_cast<char*>(row.data()), static_cast<std::streamsize>(row.size() * 4))) {
            throw FormatError(path.string() + ": truncated PFM payload");
        }
        for (std::size_t i = 0; i < row.size(); ++i) {
            std::uint32_t bits = row[i];
            if (scale > 0.0) {
                bits = __builtin_bswap32(bits);
            }
            out.data[static_cast<std::size_t>(y) * row.size() + i] = std::bit_cast<float>(bits);
        }
    }
    return out;
}

void write_pfm(const Image& image, const fs::path& path)
{
    if (image.empty()) {
        throw FormatError(path.string() + ": cannot write an empty image");
    }
    if (image.channels != 1 && image.channels != 3) {
        throw FormatError(path.string() + ": PFM needs 1 or 3 channels");
    }
    ensure_parent(path);
    std::ofstream out(path, std::ios::binary);
    if (!out) {
        throw FormatError(path.string() + ": cannot open for writing");
    }
    out << (image.channels == 3 ? "PF" : "Pf") << '\n' << image.width << ' ' << image.height << "\n-1.0\n";
    const std::size_t stride = static_cast<std::size_t>(image.width) * image.channels;
    std::vector<float> row(stride);
    for (int y = image.height - 1; y >= 0; --y) {
        for (std::size_t i = 0; i < stride; ++i) {
            row[i] = static_cast<float>(image.data[static_cast<std::size_t>(y) * stride + i]);
        }
        out.write(reinterpret_cast<const char*>(row.data()), static_cast<std::streamsize>(stride * 4));
    }
    if (!out) {
        throw FormatError(path.string() + ": write failed");
    }
}

fs::path frame_path(const fs::path& directory, int index, const std::string& channel)
{
    char name[64];
    std::snprintf(name, sizeof(name), "frame_%04d_%s", index, channel.c_str());
    return directory / name;
}

void write_frame(const RenderOutput& frame, const fs::path& directory, int index)
{
    if (frame.color.empty() || frame.depth.empty() || frame.alpha.empty()) {
        throw FormatError("write_frame: frame " + std::to_string(index) + " is empty");
    }
    write_png(frame.color, frame_path(directory, index, "color.png"));
    write_pfm(frame.depth, frame_path(directory, index, "depth.pfm"));
    write_pfm(frame.alpha, frame_path(directory, index, "alpha.pfm"));
}

} // namespace physgs::io
