#include "spyflow/flow_io.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstring>
#include <fstream>
#include <numbers>
#include <sstream>
#include <string>

#include "spyflow/binary_io.hpp"

namespace spyflow {
namespace {

constexpr std::size_t kFloHeader = 12;

std::string lower_extension(const std::filesystem::path& path) {
    std::string ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext;
}

Tensor from_rgb8(const std::vector<std::uint8_t>& pixels, int height, int width) {
    Tensor out({3, height, width});
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            const std::size_t i = (static_cast<std::size_t>(y) * width + x) * 3;
            for (int c = 0; c < 3; ++c) out.at(c, y, x) = static_cast<float>(pixels[i + c]) / 255.0f;
        }
    }
    return out;
}

std::vector<std::uint8_t> to_rgb8(const Tensor& image) {
    std::vector<std::uint8_t> pixels(static_cast<std::size_t>(image.height()) * image.width() * 3);
    for (int y = 0; y < image.height(); ++y) {
        for (int x = 0; x < image.width(); ++x) {
            const std::size_t i = (static_cast<std::size_t>(y) * image.width() + x) * 3;
            for (int c = 0; c < 3; ++c) {
                const float v = std::clamp(image.at(c, y, x), 0.0f, 1.0f);
                pixels[i + c] = static_cast<std::uint8_t>(std::lround(v * 255.0f));
            }
        }
    }
    return pixels;
}

Tensor read_png(const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    if (!png_image_begin_read_from_file(&img, path.c_str())) {
        throw FormatError(path.string() + ": cannot decode PNG (" + img.message + ")");
    }
    img.format = PNG_FORMAT_RGB;
    std::vector<std::uint8_t> pixels(PNG_IMAGE_SIZE(img));
    if (!png_image_finish_read(&img, nullptr, pixels.data(), 0, nullptr)) {
        std::string msg = img.message;
        png_image_free(&img);
        throw FormatError(path.string() + ": corrupt PNG (" + msg + ")");
    }
    return from_rgb8(pixels, static_cast<int>(img.height), static_cast<int>(img.width));
}

void write_png(const Tensor& image, const std::filesystem::path& path) {
    png_image img;
    std::memset(&img, 0, sizeof img);
    img.version = PNG_IMAGE_VERSION;
    img.width = static_cast<png_uint_32>(image.width());
    img.height = static_cast<png_uint_32>(image.height());
    img.format = PNG_FORMAT_RGB;
    const std::vector<std::uint8_t> pixels = to_rgb8(image);
    if (!png_image_write_to_file(&img, path.c_str(), 0, pixels.data(), 0, nullptr)) {
        throw FormatError(path.string() + ": cannot write PNG (" + img.message + ")");
    }
}

Tensor read_ppm(const std::filesystem::path& path) {
    const std::vector<std::uint8_t> bytes = read_file_bytes(path);
    std::size_t pos = 0;
    auto token = [&]() {
        while (pos < bytes.size()) {
            if (std::isspace(bytes[pos])) {
                ++pos;
            } else if (bytes[pos] == '#') {
                while (pos < bytes.size() && bytes[pos] != '\n') ++pos;
            } else {
                break;
            }
        }
        std::string t;
        while (pos < bytes.size() && !std::isspace(bytes[pos])) t.push_back(static_cast<char>(bytes[pos++]));
        return t;
    };
    if (token() != "P6") throw FormatError(path.string() + ": not a binary PPM (P6) file");
    int width = 0, height = 0, maxval = 0;
    try {
        width = std::stoi(token());
        height = std::stoi(token());
        maxval = std::stoi(token());
    } catch (const std::exception&) {
        throw FormatError(path.string() + ": corrupt PPM header");
    }
    if (width <= 0 || height <= 0 || maxval != 255) {
        throw FormatError(path.string() + ": unsupported PPM (need positive size and maxval 255)");
    }
    ++pos;  // single whitespace after maxval
    const std::size_t need = static_cast<std::size_t>(width) * height * 3;
    if (bytes.size() < pos + need) {
        throw FormatError(path.string() + ": PPM payload truncated at offset " + std::to_string(bytes.size()));
    }
    std::vector<std::uint8_t> pixels(bytes.begin() + static_cast<std::ptrdiff_t>(pos),
                                     bytes.begin() + static_cast<std::ptrdiff_t>(pos + need));
    return from_rgb8(pixels, height, width);
}

void write_ppm(const Tensor& image, const std::filesystem::path& path) {
    const std::string header =
        "P6\n" + std::to_string(image.width()) + " " + std::to_string(image.height()) + "\n255\n";
    std::vector<std::uint8_t> bytes(header.begin(), header.end());
    const std::vector<std::uint8_t> pixels = to_rgb8(image);
    bytes.insert(bytes.end(), pixels.begin(), pixels.end());
    write_file_bytes(path, bytes);
}

}  // namespace

std::vector<std::uint8_t> encode_flo(const FlowField& flow) {
    std::vector<std::uint8_t> out;
    out.reserve(kFloHeader + flow.pixel_count() * 8);
    append_le_f32(out, kFloTag);
    append_le_i32(out, flow.width());
    append_le_i32(out, flow.height());
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            append_le_f32(out, flow.u(x, y));
            append_le_f32(out, flow.v(x, y));
        }
    }
    return out;
}

FlowField decode_flo(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < kFloHeader) {
        throw FormatError(".flo header truncated at offset " + std::to_string(bytes.size()) + ", need 12 bytes");
    }
    if (read_le_f32(bytes.data()) != kFloTag) {
        throw FormatError(".flo offset 0: bad tag, expected 202021.25");
    }
    const std::int32_t width = read_le_i32(bytes.data() + 4);
    const std::int32_t height = read_le_i32(bytes.data() + 8);
    if (width <= 0) throw FormatError(".flo offset 4: width " + std::to_string(width) + " must be positive");
    if (height <= 0) throw FormatError(".flo offset 8: height " + std::to_string(height) + " must be positive");
    const std::size_t payload = static_cast<std::size_t>(width) * static_cast<std::size_t>(height) * 8;
    if (bytes.size() != kFloHeader + payload) {
        throw FormatError(".flo offset " + std::to_string(std::min(bytes.size(), kFloHeader + payload)) +
                          ": expected " + std::to_string(kFloHeader + payload) + " bytes for " +
                          std::to_string(width) + "x" + std::to_string(height) + ", file has " +
                          std::to_string(bytes.size()));
    }
    FlowField flow(height, width);
    const std::uint8_t* p = bytes.data() + kFloHeader;
    for (int y = 0; y < height; ++y) {
        for (int x = 0; x < width; ++x) {
            flow.u(x, y) = read_le_f32(p);
            flow.v(x, y) = read_le_f32(p + 4);
            p += 8;
        }
    }
    return flow;
}

void write_flo(const FlowField& flow, const std::filesystem::path& path) {
    write_file_bytes(path, encode_flo(flow));
}

FlowField read_flo(const std::filesystem::path& path) {
    try {
        return decode_flo(read_file_bytes(path));
    } catch (const FormatError& e) {
        const std::string msg = e.what();
        if (msg.rfind(path.string(), 0) == 0) throw;
        throw FormatError(path.string() + ": " + msg);
    }
}

Tensor read_image(const std::filesystem::path& path) {
    if (!std::filesystem::exists(path)) throw FormatError("image not found: " + path.string());
    const std::string ext = lower_extension(path);
    if (ext == ".png") return read_png(path);
    if (ext == ".ppm") return read_ppm(path);
    throw FormatError(path.string() + ": unsupported image format '" + ext + "' (use .png or .ppm)");
}

void write_image(const Tensor& image, const std::filesystem::path& path) {
    require_chw(image, "write_image", 3);
    const std::string ext = lower_extension(path);
    if (ext == ".png") return write_png(image, path);
    if (ext == ".ppm") return write_ppm(image, path);
    throw FormatError(path.string() + ": unsupported image format '" + ext + "' (use .png or .ppm)");
}

Tensor flow_to_color(const FlowField& flow, std::optional<float> max_mag) {
    float scale = 0.0f;
    if (max_mag) {
        scale = *max_mag;
    } else {
        for (int y = 0; y < flow.height(); ++y) {
            for (int x = 0; x < flow.width(); ++x) scale = std::max(scale, std::hypot(flow.u(x, y), flow.v(x, y)));
        }
    }
    if (!(scale > 0.0f)) scale = 1.0f;

    Tensor rgb({3, flow.height(), flow.width()});
    for (int y = 0; y < flow.height(); ++y) {
        for (int x = 0; x < flow.width(); ++x) {
            const double u = flow.u(x, y);
            const double v = flow.v(x, y);
            const double sat = std::min(1.0, std::hypot(u, v) / scale);
            double angle = std::atan2(v, u);
            if (angle < 0.0) angle += 2.0 * std::numbers::pi;
            const double h = angle / (2.0 * std::numbers::pi) * 6.0;  // [0, 6)
            const int sector = static_cast<int>(std::floor(h)) % 6;
            const double f = h - std::floor(h);
            // HSV with V = 1.
            const double p = 1.0 - sat;
            const double q = 1.0 - sat * f;
            const double t = 1.0 - sat * (1.0 - f);
            double r = 1, g = 1, b = 1;
            switch (sector) {
                case 0: r = 1; g = t; b = p; break;
                case 1: r = q; g = 1; b = p; break;
                case 2: r = p; g = 1; b = t; break;
                case 3: r = p; g = q; b = 1; break;
                case 4: r = t; g = p; b = 1; break;
                default: r = 1; g = p; b = q; break;
            }
            rgb.at(0, y, x) = static_cast<float>(r);
            rgb.at(1, y, x) = static_cast<float>(g);
            rgb.at(2, y, x) = static_cast<float>(b);
        }
    }
    return rgb;
}

}  // namespace spyflow
