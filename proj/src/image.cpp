#include "cadkit/image.hpp"

#include "cadkit/errors.hpp"

#include <png.h>

#include <algorithm>
#include <cctype>
#include <csetjmp>
#include <cstdio>
#include <fstream>
#include <memory>
#include <sstream>
#include <string>

namespace cadkit {

RasterImage::RasterImage(int w, int h) : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, 0) {}

std::size_t RasterImage::count() const {
    return static_cast<std::size_t>(std::count_if(pixels.begin(), pixels.end(), [](auto p) { return p != 0; }));
}

GrayImage::GrayImage(int w, int h, std::uint8_t fill)
    : width(w), height(h), pixels(static_cast<std::size_t>(w) * h, fill) {}

GrayImage to_gray(const RasterImage& mask) {
    GrayImage g(mask.width, mask.height);
    for (std::size_t i = 0; i < mask.pixels.size(); ++i) {
        g.pixels[i] = mask.pixels[i] ? 0 : 255;
    }
    return g;
}

RasterImage to_mask(const GrayImage& img, std::uint8_t threshold) {
    RasterImage m(img.width, img.height);
    for (std::size_t i = 0; i < img.pixels.size(); ++i) {
        m.pixels[i] = img.pixels[i] < threshold ? 1 : 0;
    }
    return m;
}

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f != nullptr) {
            std::fclose(f);
        }
    }
};

void png_write_to_vector(png_structp png, png_bytep data, png_size_t length) {
    auto* out = static_cast<std::vector<std::uint8_t>*>(png_get_io_ptr(png));
    out->insert(out->end(), data, data + length);
}

void png_flush_noop(png_structp) {}

void png_warn(png_structp, png_const_charp) {}

} // namespace

std::vector<std::uint8_t> encode_png(const GrayImage& img) {
    std::vector<std::uint8_t> out;
    png_structp png = png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
    png_infop info = png_create_info_struct(png);
    if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_write_struct(&png, &info);
        throw Error(ErrorCode::Io, "png encoding failed");
    }
    png_set_write_fn(png, &out, png_write_to_vector, png_flush_noop);
    png_set_IHDR(png, info, static_cast<png_uint_32>(img.width), static_cast<png_uint_32>(img.height), 8,
                 PNG_COLOR_TYPE_GRAY, PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
    png_write_info(png, info);
    for (int y = 0; y < img.height; ++y) {
        png_write_row(png, const_cast<png_bytep>(&img.pixels[static_cast<std::size_t>(y) * img.width]));
    }
    png_write_end(png, nullptr);
    png_destroy_write_struct(&png, &info);
    return out;
}

void write_png(const std::filesystem::path& path, const GrayImage& img) {
    const auto bytes = encode_png(img);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

namespace {

/// Decodes into `img`; returns false on a libpng error.
bool decode_png(std::FILE* f, GrayImage& img) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, png_warn);
    png_infop info = png_create_info_struct(png);
    if (png == nullptr || info == nullptr || setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        return false;
    }
    png_init_io(png, f);
    png_set_sig_bytes(png, 8);
    png_read_info(png, info);
    const auto color = png_get_color_type(png, info);
    const auto depth = png_get_bit_depth(png, info);
    if (depth == 16) {
        png_set_strip_16(png);
    }
    if (color == PNG_COLOR_TYPE_PALETTE) {
        png_set_palette_to_rgb(png);
    }
    if (color == PNG_COLOR_TYPE_GRAY && depth < 8) {
        png_set_expand_gray_1_2_4_to_8(png);
    }
    if (color & PNG_COLOR_MASK_ALPHA) {
        png_set_strip_alpha(png);
    }
    if (color == PNG_COLOR_TYPE_RGB || color == PNG_COLOR_TYPE_RGB_ALPHA || color == PNG_COLOR_TYPE_PALETTE) {
        png_set_rgb_to_gray_fixed(png, 1, -1, -1);
    }
    png_read_update_info(png, info);
    img.width = static_cast<int>(png_get_image_width(png, info));
    img.height = static_cast<int>(png_get_image_height(png, info));
    img.pixels.assign(static_cast<std::size_t>(img.width) * img.height, 255);
    std::vector<png_bytep> rows(static_cast<std::size_t>(img.height));
    for (int y = 0; y < img.height; ++y) {
        rows[static_cast<std::size_t>(y)] = &img.pixels[static_cast<std::size_t>(y) * img.width];
    }
    png_read_image(png, rows.data());
    png_destroy_read_struct(&png, &info, nullptr);
    return true;
}

} // namespace

GrayImage read_png(const std::filesystem::path& path) {
    std::unique_ptr<std::FILE, FileCloser> f(std::fopen(path.c_str(), "rb"));
    if (!f) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    png_byte sig[8];
    if (std::fread(sig, 1, 8, f.get()) != 8 || png_sig_cmp(sig, 0, 8) != 0) {
        throw Error(ErrorCode::Io, path.string() + " is not a PNG file");
    }
    GrayImage img;
    if (!decode_png(f.get(), img)) {
        throw Error(ErrorCode::Io, path.string() + ": corrupt PNG data");
    }
    return img;
}

void write_pgm(const std::filesystem::path& path, const GrayImage& img) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) {
        throw Error(ErrorCode::Io, "cannot write " + path.string());
    }
    out << "P5\n" << img.width << ' ' << img.height << "\n255\n";
    out.write(reinterpret_cast<const char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
}

GrayImage read_pgm(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) {
        throw Error(ErrorCode::Io, "cannot open " + path.string());
    }
    auto token = [&]() {
        std::string t;
        while (in) {
            const int ch = in.get();
            if (ch == '#') {
                std::string skip;
                std::getline(in, skip);
                continue;
            }
            if (std::isspace(ch)) {
                if (!t.empty()) {
                    return t;
                }
                continue;
            }
            if (ch == EOF) {
                break;
            }
            t.push_back(static_cast<char>(ch));
        }
        return t;
    };
    if (token() != "P5") {
        throw Error(ErrorCode::Io, path.string() + " is not a binary PGM file");
    }
    const int w = std::stoi(token());
    const int h = std::stoi(token());
    const int maxval = std::stoi(token());
    if (w <= 0 || h <= 0 || maxval != 255) {
        throw Error(ErrorCode::Io, path.string() + ": unsupported PGM header");
    }
    GrayImage img(w, h);
    in.read(reinterpret_cast<char*>(img.pixels.data()), static_cast<std::streamsize>(img.pixels.size()));
    if (!in) {
        throw Error(ErrorCode::Io, path.string() + ": truncated PGM data");
    }
    return img;
}

namespace {

bool has_pgm_extension(const std::filesystem::path& path) {
    auto ext = path.extension().string();
    std::transform(ext.begin(), ext.end(), ext.begin(), [](unsigned char c) { return std::tolower(c); });
    return ext == ".pgm";
}

} // namespace

GrayImage read_image(const std::filesystem::path& path) {
    return has_pgm_extension(path) ? read_pgm(path) : read_png(path);
}

void write_image(const std::filesystem::path& path, const GrayImage& img) {
    if (path.has_parent_path()) {
        std::filesystem::create_directories(path.parent_path());
    }
    if (has_pgm_extension(path)) {
        write_pgm(path, img);
    } else {
        write_png(path, img);
    }
}

} // namespace cadkit
