#include "hcnn/image.hpp"

#include <jpeglib.h>
#include <png.h>

#include <algorithm>
#include <cmath>
#include <csetjmp>
#include <cstdio>
#include <cstring>
#include <memory>

#include "hcnn/errors.hpp"

namespace hcnn {

namespace {

struct FileCloser {
    void operator()(std::FILE* f) const {
        if (f) std::fclose(f);
    }
};
using FilePtr = std::unique_ptr<std::FILE, FileCloser>;

ImageU8 read_png_file(std::FILE* fp, const std::filesystem::path& path) {
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    if (!png) throw IoError("read_image: libpng init failed");
    png_infop info = png_create_info_struct(png);
    if (!info) {
        png_destroy_read_struct(&png, nullptr, nullptr);
        throw IoError("read_image: libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("read_image: undecodable PNG file " + path.string());
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    const png_uint_32 width = png_get_image_width(png, info);
    const png_uint_32 height = png_get_image_height(png, info);
    const int bit_depth = png_get_bit_depth(png, info);
    const int color_type = png_get_color_type(png, info);

    if (bit_depth == 16) png_set_strip_16(png);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    png_set_strip_alpha(png);
    png_read_update_info(png, info);

    const int out_channels = static_cast<int>(png_get_channels(png, info));
    if (out_channels != 1 && out_channels != 3) {
        png_destroy_read_struct(&png, &info, nullptr);
        throw FormatError("read_image: unsupported PNG channel layout in " + path.string());
    }

    ImageU8 img;
    img.w = static_cast<Index>(width);
    img.h = static_cast<Index>(height);
    img.channels = out_channels;
    img.pixels.resize(static_cast<std::size_t>(img.w) * img.h * img.channels);

    std::vector<png_bytep> rows(height);
    const std::size_t stride = static_cast<std::size_t>(width) * out_channels;
    for (png_uint_32 y = 0; y < height; ++y) rows[y] = img.pixels.data() + y * stride;
    png_read_image(png, rows.data());
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    return img;
}

struct JpegErrorMgr {
    jpeg_error_mgr pub;
    std::jmp_buf jump;
};

void jpeg_error_exit(j_common_ptr cinfo) {
    auto* mgr = reinterpret_cast<JpegErrorMgr*>(cinfo->err);
    std::longjmp(mgr->jump, 1);
}

ImageU8 read_jpeg_file(std::FILE* fp, const std::filesystem::path& path) {
    jpeg_decompress_struct cinfo;
    JpegErrorMgr err;
    cinfo.err = jpeg_std_error(&err.pub);
    err.pub.error_exit = jpeg_error_exit;
    if (setjmp(err.jump)) {
        jpeg_destroy_decompress(&cinfo);
        throw FormatError("read_image: undecodable JPEG file " + path.string());
    }
    jpeg_create_decompress(&cinfo);
    jpeg_stdio_src(&cinfo, fp);
    jpeg_read_header(&cinfo, TRUE);
    cinfo.out_color_space = cinfo.num_components == 1 ? JCS_GRAYSCALE : JCS_RGB;
    jpeg_start_decompress(&cinfo);

    ImageU8 img;
    img.w = static_cast<Index>(cinfo.output_width);
    img.h = static_cast<Index>(cinfo.output_height);
    img.channels = cinfo.output_components;
    img.pixels.resize(static_cast<std::size_t>(img.w) * img.h * img.channels);

    const std::size_t stride = static_cast<std::size_t>(img.w) * img.channels;
    while (cinfo.output_scanline < cinfo.output_height) {
        JSAMPROW row = img.pixels.data() + cinfo.output_scanline * stride;
        jpeg_read_scanlines(&cinfo, &row, 1);
    }
    jpeg_finish_decompress(&cinfo);
    jpeg_destroy_decompress(&cinfo);
    return img;
}

}  // namespace

ImageU8 read_image(const std::filesystem::path& path) {
    FilePtr fp(std::fopen(path.c_str(), "rb"));
    if (!fp) throw IoError("read_image: cannot open " + path.string());

    unsigned char magic[8] = {};
    const std::size_t got = std::fread(magic, 1, sizeof(magic), fp.get());
    std::rewind(fp.get());
    if (got >= 8 && png_sig_cmp(magic, 0, 8) == 0) {
        return read_png_file(fp.get(), path);
    }
    if (got >= 2 && magic[0] == 0xFF && magic[1] == 0xD8) {
        return read_jpeg_file(fp.get(), path);
    }
    throw FormatError("read_image: " + path.string() + " is neither PNG nor JPEG");
}

void write_png(const std::filesystem::path& path, const ImageU8& img) {
    if (img.channels != 1 && img.channels != 3) {
        throw ConfigError("write_png: only gray and RGB images are supported");
    }
    const std::filesystem::path tmp = path.string() + ".tmp";
    {
        FilePtr fp(std::fopen(tmp.c_str(), "wb"));
        if (!fp) throw IoError("write_png: cannot open " + tmp.string());

        png_structp png =
            png_create_write_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
        if (!png) throw IoError("write_png: libpng init failed");
        png_infop info = png_create_info_struct(png);
        if (!info) {
            png_destroy_write_struct(&png, nullptr);
            throw IoError("write_png: libpng init failed");
        }
        if (setjmp(png_jmpbuf(png))) {
            png_destroy_write_struct(&png, &info);
            throw IoError("write_png: encode failed for " + tmp.string());
        }
        png_init_io(png, fp.get());
        png_set_IHDR(png, info, static_cast<png_uint_32>(img.w), static_cast<png_uint_32>(img.h),
                     8, img.channels == 1 ? PNG_COLOR_TYPE_GRAY : PNG_COLOR_TYPE_RGB,
                     PNG_INTERLACE_NONE, PNG_COMPRESSION_TYPE_DEFAULT, PNG_FILTER_TYPE_DEFAULT);
        png_write_info(png, info);
        const std::size_t stride = static_cast<std::size_t>(img.w) * img.channels;
        for (Index y = 0; y < img.h; ++y) {
            png_write_row(png, const_cast<png_bytep>(img.pixels.data() + y * stride));
        }
        png_write_end(png, nullptr);
        png_destroy_write_struct(&png, &info);
    }
    std::filesystem::rename(tmp, path);
}

Tensor4<float> image_to_rgb_tensor(const ImageU8& img) {
    Tensor4<float> t(1, 3, img.h, img.w);
    for (Index y = 0; y < img.h; ++y) {
        for (Index x = 0; x < img.w; ++x) {
            for (Index c = 0; c < 3; ++c) {
                const Index src_c = img.channels == 1 ? 0 : c;
                t(0, c, y, x) = static_cast<float>(img.at(y, x, src_c)) / 255.0f;
            }
        }
    }
    return t;
}

PlaneX<double> image_to_gray_plane(const ImageU8& img) {
    PlaneX<double> p(img.h, img.w);
    for (Index y = 0; y < img.h; ++y) {
        for (Index x = 0; x < img.w; ++x) {
            if (img.channels == 1) {
                p(y, x) = static_cast<double>(img.at(y, x, 0));
            } else {
                p(y, x) = 0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) +
                          0.114 * img.at(y, x, 2);
            }
        }
    }
    return p;
}

Tensor4<float> image_to_mask_tensor(const ImageU8& img) {
    Tensor4<float> t(1, 1, img.h, img.w);
    for (Index y = 0; y < img.h; ++y) {
        for (Index x = 0; x < img.w; ++x) {
            std::uint8_t v = 0;
            if (img.channels == 1) {
                v = img.at(y, x, 0);
            } else {
                v = static_cast<std::uint8_t>(std::lround(
                    0.299 * img.at(y, x, 0) + 0.587 * img.at(y, x, 1) + 0.114 * img.at(y, x, 2)));
            }
            t(0, 0, y, x) = binarize_byte(v);
        }
    }
    return t;
}

namespace {

std::uint8_t round_half_up_u8(double v) {
    const double scaled = std::floor(v * 255.0 + 0.5);
    return static_cast<std::uint8_t>(std::clamp(scaled, 0.0, 255.0));
}

}  // namespace

ImageU8 probability_to_image(const Tensor4<float>& prob) {
    ImageU8 img;
    img.w = prob.w();
    img.h = prob.h();
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(img.w) * img.h);
    for (Index y = 0; y < img.h; ++y)
        for (Index x = 0; x < img.w; ++x)
            img.at(y, x, 0) = round_half_up_u8(static_cast<double>(prob(0, 0, y, x)));
    return img;
}

ImageU8 mask_to_image(const Tensor4<float>& mask) {
    ImageU8 img;
    img.w = mask.w();
    img.h = mask.h();
    img.channels = 1;
    img.pixels.resize(static_cast<std::size_t>(img.w) * img.h);
    for (Index y = 0; y < img.h; ++y)
        for (Index x = 0; x < img.w; ++x)
            img.at(y, x, 0) = mask(0, 0, y, x) > 0.5f ? 255 : 0;
    return img;
}

ImageU8 rgb_tensor_to_image(const Tensor4<float>& t) {
    ImageU8 img;
    img.w = t.w();
    img.h = t.h();
    img.channels = 3;
    img.pixels.resize(static_cast<std::size_t>(img.w) * img.h * 3);
    for (Index y = 0; y < img.h; ++y)
        for (Index x = 0; x < img.w; ++x)
            for (Index c = 0; c < 3; ++c)
                img.at(y, x, c) = round_half_up_u8(static_cast<double>(t(0, c, y, x)));
    return img;
}

}  // namespace hcnn
