#pragma once

#include <cstdint>
#include <filesystem>
#include <vector>

#include "hcnn/tensor.hpp"

namespace hcnn {

// 8-bit interleaved image, row-major; 1 (gray) or 3 (RGB) channels.
struct ImageU8 {
    Index w = 0;
    Index h = 0;
    Index channels = 0;
    std::vector<std::uint8_t> pixels;

    std::uint8_t at(Index y, Index x, Index c) const {
        return pixels[static_cast<std::size_t>((y * w + x) * channels + c)];
    }
    std::uint8_t& at(Index y, Index x, Index c) {
        return pixels[static_cast<std::size_t>((y * w + x) * channels + c)];
    }
};

// Decodes a PNG or JPEG file (dispatch on the magic bytes) to 8-bit gray or
// RGB. Alpha channels are dropped; palettes expand to RGB.
ImageU8 read_image(const std::filesystem::path& path);

// Writes an 8-bit gray or RGB PNG atomically (temp file + rename).
void write_png(const std::filesystem::path& path, const ImageU8& img);

// (1,3,H,W) tensor scaled to [0,1]; gray sources replicate to three channels.
Tensor4<float> image_to_rgb_tensor(const ImageU8& img);

// Rec.601 luma on the [0,255] scale.
PlaneX<double> image_to_gray_plane(const ImageU8& img);

// Mask binarization rule: byte value > 127 -> 1, else 0.
inline float binarize_byte(std::uint8_t v) { return v > 127 ? 1.0f : 0.0f; }

// (1,1,H,W) strictly binary tensor from an 8-bit mask image (luma-first for
// color inputs).
Tensor4<float> image_to_mask_tensor(const ImageU8& img);

// Probability map in [0,1] to 8-bit gray, rounding half up.
ImageU8 probability_to_image(const Tensor4<float>& prob);

// Binary mask tensor to 0/255 gray.
ImageU8 mask_to_image(const Tensor4<float>& mask);

// RGB [0,1] tensor back to 8-bit, rounding half up.
ImageU8 rgb_tensor_to_image(const Tensor4<float>& t);

}  // namespace hcnn
