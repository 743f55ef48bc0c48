#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "hcnn/image.hpp"
#include "hcnn/rng.hpp"
#include "hcnn/tensor.hpp"

namespace hcnn {

// One training pair: RGB image in [0,1] and its strictly binary mask, both
// (1,c,H,W) with equal spatial dims.
struct Sample {
    Tensor4<float> image;  // (1,3,H,W)
    Tensor4<float> mask;   // (1,1,H,W), values 0 or 1
    std::string id;
};

struct AugmentConfig {
    double rotation_min_deg = 0.0;
    double rotation_max_deg = 90.0;
    bool flip_horizontal = true;
    bool flip_vertical = true;
    Index crop_h = 256;
    Index crop_w = 256;
    int expansion_factor = 100;

    void validate() const;
};

enum class Interp { Bilinear, Nearest };

// Largest axis-aligned rectangle inscribed in a (w x h) rectangle rotated by
// angle_deg.
std::pair<Index, Index> rotated_interior_size(Index w, Index h, double angle_deg);

// Rotation about the image center with interior cropping so no undefined
// corner pixels survive. Output dims come from rotated_interior_size.
Tensor4<float> rotate_interior(const Tensor4<float>& src, double angle_deg, Interp interp);

Tensor4<float> flip_horizontal(const Tensor4<float>& src);
Tensor4<float> flip_vertical(const Tensor4<float>& src);
Tensor4<float> crop(const Tensor4<float>& src, Index y0, Index x0, Index h, Index w);

// rotate -> flip -> random crop, with the identical geometric transform
// applied to image and mask (bilinear vs nearest sampling respectively).
Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng);

// Derives the per-output rng stream: rng(seed, source_index, copy_index).
Rng augment_rng(std::uint64_t seed, std::size_t source_index, std::size_t copy_index);

// Image/mask pairs matched by filename stem across two directories, sorted by
// stem.
std::vector<Sample> load_pairs(const std::filesystem::path& image_dir,
                               const std::filesystem::path& mask_dir);

// Seeded synthetic crack sample: value-noise background plus a dark random
// walk polyline of width 1-3 px spanning the full width; the mask is the
// exact painted footprint.
Sample synth_crack(std::uint64_t seed, Index size, double noise_level);

}  // namespace hcnn
