#include "hcnn/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "hcnn/errors.hpp"

namespace hcnn {

namespace {

constexpr double kPi = 3.14159265358979323846;

float sample_bilinear(ConstPlaneMap<float> plane, double sy, double sx) {
    const Index h = plane.rows();
    const Index w = plane.cols();
    const double cy = std::clamp(sy, 0.0, static_cast<double>(h - 1));
    const double cx = std::clamp(sx, 0.0, static_cast<double>(w - 1));
    const Index y0 = static_cast<Index>(std::floor(cy));
    const Index x0 = static_cast<Index>(std::floor(cx));
    const Index y1 = std::min(y0 + 1, h - 1);
    const Index x1 = std::min(x0 + 1, w - 1);
    const double fy = cy - static_cast<double>(y0);
    const double fx = cx - static_cast<double>(x0);
    const double v = (1.0 - fy) * ((1.0 - fx) * plane(y0, x0) + fx * plane(y0, x1)) +
                     fy * ((1.0 - fx) * plane(y1, x0) + fx * plane(y1, x1));
    return static_cast<float>(v);
}

float sample_nearest(ConstPlaneMap<float> plane, double sy, double sx) {
    const Index h = plane.rows();
    const Index w = plane.cols();
    const Index y = std::clamp<Index>(static_cast<Index>(std::lround(sy)), 0, h - 1);
    const Index x = std::clamp<Index>(static_cast<Index>(std::lround(sx)), 0, w - 1);
    return plane(y, x);
}

void rebinarize(Tensor4<float>& mask) {
    mask.array() = (mask.array() > 0.5f).select(
        VectorX<float>::Constant(mask.size(), 1.0f), 0.0f);
}

}  // namespace

void AugmentConfig::validate() const {
    if (crop_h % 32 != 0 || crop_w % 32 != 0) {
        throw ConfigError("AugmentConfig: crop size must be divisible by 32");
    }
    if (rotation_min_deg < 0.0 || rotation_max_deg > 90.0 ||
        rotation_min_deg > rotation_max_deg) {
        throw ConfigError("AugmentConfig: rotation range must lie inside [0, 90] degrees");
    }
    if (expansion_factor < 1) {
        throw ConfigError("AugmentConfig: expansion factor must be >= 1");
    }
}

namespace {

// sin/cos with exact values at the axis-aligned angles, so 0 and 90 degree
// rotations stay grid-exact.
std::pair<double, double> snapped_sincos(double angle_deg) {
    const double a = angle_deg * kPi / 180.0;
    double s = std::sin(a);
    double c = std::cos(a);
    if (std::abs(s) < 1e-12) s = 0.0;
    if (std::abs(c) < 1e-12) c = 0.0;
    if (std::abs(s - 1.0) < 1e-12) s = 1.0;
    if (std::abs(c - 1.0) < 1e-12) c = 1.0;
    return {s, c};
}

}  // namespace

std::pair<Index, Index> rotated_interior_size(Index w, Index h, double angle_deg) {
    const auto [sin_raw, cos_raw] = snapped_sincos(angle_deg);
    const double sin_a = std::abs(sin_raw);
    const double cos_a = std::abs(cos_raw);
    const double wd = static_cast<double>(w);
    const double hd = static_cast<double>(h);

    double wr = 0.0, hr = 0.0;
    const double side_short = std::min(wd, hd);
    if (side_short <= 2.0 * sin_a * cos_a * std::max(wd, hd) ||
        std::abs(sin_a - cos_a) < 1e-10) {
        // the inscribed rectangle is constrained by two corners
        const double x = 0.5 * side_short;
        if (wd >= hd) {
            wr = x / sin_a;
            hr = x / cos_a;
        } else {
            wr = x / cos_a;
            hr = x / sin_a;
        }
    } else {
        const double cos_2a = cos_a * cos_a - sin_a * sin_a;
        wr = (wd * cos_a - hd * sin_a) / cos_2a;
        hr = (hd * cos_a - wd * sin_a) / cos_2a;
    }
    return {std::max<Index>(1, static_cast<Index>(std::floor(hr + 1e-9))),
            std::max<Index>(1, static_cast<Index>(std::floor(wr + 1e-9)))};
}

Tensor4<float> rotate_interior(const Tensor4<float>& src, double angle_deg, Interp interp) {
    if (angle_deg == 0.0) {
        return src;
    }
    const auto [oh, ow] = rotated_interior_size(src.w(), src.h(), angle_deg);
    Tensor4<float> out(src.n(), src.c(), oh, ow);

    const auto [sin_a, cos_a] = snapped_sincos(angle_deg);
    const double src_cy = 0.5 * static_cast<double>(src.h() - 1);
    const double src_cx = 0.5 * static_cast<double>(src.w() - 1);
    const double out_cy = 0.5 * static_cast<double>(oh - 1);
    const double out_cx = 0.5 * static_cast<double>(ow - 1);

    for (Index n = 0; n < src.n(); ++n) {
        for (Index c = 0; c < src.c(); ++c) {
            const auto plane = src.plane(n, c);
            auto dst = out.plane(n, c);
            for (Index y = 0; y < oh; ++y) {
                const double dy = static_cast<double>(y) - out_cy;
                for (Index x = 0; x < ow; ++x) {
                    const double dx = static_cast<double>(x) - out_cx;
                    // inverse rotation into source coordinates
                    const double sy = src_cy + (sin_a * dx + cos_a * dy);
                    const double sx = src_cx + (cos_a * dx - sin_a * dy);
                    dst(y, x) = interp == Interp::Bilinear ? sample_bilinear(plane, sy, sx)
                                                           : sample_nearest(plane, sy, sx);
                }
            }
        }
    }
    return out;
}

Tensor4<float> flip_horizontal(const Tensor4<float>& src) {
    Tensor4<float> out(src.n(), src.c(), src.h(), src.w());
    for (Index n = 0; n < src.n(); ++n)
        for (Index c = 0; c < src.c(); ++c)
            out.plane(n, c) = src.plane(n, c).rowwise().reverse();
    return out;
}

Tensor4<float> flip_vertical(const Tensor4<float>& src) {
    Tensor4<float> out(src.n(), src.c(), src.h(), src.w());
    for (Index n = 0; n < src.n(); ++n)
        for (Index c = 0; c < src.c(); ++c)
            out.plane(n, c) = src.plane(n, c).colwise().reverse();
    return out;
}

Tensor4<float> crop(const Tensor4<float>& src, Index y0, Index x0, Index h, Index w) {
    if (y0 < 0 || x0 < 0 || y0 + h > src.h() || x0 + w > src.w()) {
        throw SizeError("crop: window [" + std::to_string(y0) + "," + std::to_string(x0) +
                        "]+" + std::to_string(h) + "x" + std::to_string(w) +
                        " exceeds source " + src.shape_str());
    }
    Tensor4<float> out(src.n(), src.c(), h, w);
    for (Index n = 0; n < src.n(); ++n)
        for (Index c = 0; c < src.c(); ++c)
            out.plane(n, c) = src.plane(n, c).block(y0, x0, h, w);
    return out;
}

Sample augment(const Sample& sample, const AugmentConfig& config, Rng& rng) {
    config.validate();
    if (sample.image.h() != sample.mask.h() || sample.image.w() != sample.mask.w()) {
        throw ShapeError("augment: image and mask disagree on spatial dims");
    }

    const double angle = rng.uniform(config.rotation_min_deg, config.rotation_max_deg);
    Tensor4<float> img = rotate_interior(sample.image, angle, Interp::Bilinear);
    Tensor4<float> mask = rotate_interior(sample.mask, angle, Interp::Nearest);
    rebinarize(mask);

    if (config.flip_horizontal && rng.coin()) {
        img = flip_horizontal(img);
        mask = flip_horizontal(mask);
    }
    if (config.flip_vertical && rng.coin()) {
        img = flip_vertical(img);
        mask = flip_vertical(mask);
    }

    if (img.h() < config.crop_h || img.w() < config.crop_w) {
        throw SizeError("augment: source '" + sample.id + "' is " + std::to_string(img.w()) +
                        "x" + std::to_string(img.h()) + " after rotation cropping, smaller than " +
                        std::to_string(config.crop_w) + "x" + std::to_string(config.crop_h));
    }
    const Index y0 = rng.uniform_int(0, img.h() - config.crop_h);
    const Index x0 = rng.uniform_int(0, img.w() - config.crop_w);
    Sample out;
    out.image = crop(img, y0, x0, config.crop_h, config.crop_w);
    out.mask = crop(mask, y0, x0, config.crop_h, config.crop_w);
    out.id = sample.id;
    return out;
}

Rng augment_rng(std::uint64_t seed, std::size_t source_index, std::size_t copy_index) {
    return Rng::derive(seed, source_index, copy_index);
}

std::vector<Sample> load_pairs(const std::filesystem::path& image_dir,
                               const std::filesystem::path& mask_dir) {
    namespace fs = std::filesystem;
    const auto collect = [](const fs::path& dir) {
        if (!fs::is_directory(dir)) {
            throw IoError("load_pairs: " + dir.string() + " is not a directory");
        }
        std::map<std::string, fs::path> by_stem;
        for (const auto& entry : fs::directory_iterator(dir)) {
            if (!entry.is_regular_file()) continue;
            by_stem[entry.path().stem().string()] = entry.path();
        }
        return by_stem;
    };

    const auto images = collect(image_dir);
    const auto masks = collect(mask_dir);
    for (const auto& [stem, path] : masks) {
        if (!images.count(stem)) {
            throw PairingError("load_pairs: mask '" + stem + "' has no image counterpart");
        }
    }

    std::vector<Sample> out;
    for (const auto& [stem, path] : images) {
        const auto mask_it = masks.find(stem);
        if (mask_it == masks.end()) {
            throw PairingError("load_pairs: image '" + stem + "' has no mask counterpart");
        }
        Sample s;
        s.image = image_to_rgb_tensor(read_image(path));
        s.mask = image_to_mask_tensor(read_image(mask_it->second));
        s.id = stem;
        if (s.image.h() != s.mask.h() || s.image.w() != s.mask.w()) {
            throw ShapeError("load_pairs: pair '" + stem + "' disagrees on spatial dims");
        }
        out.push_back(std::move(s));
    }
    return out;
}

Sample synth_crack(std::uint64_t seed, Index size, double noise_level) {
    if (size % 32 != 0) {
        throw ConfigError("synth_crack: size must be divisible by 32");
    }
    Rng rng(seed);
    const Index cell = 8;
    const Index grid = size / cell + 2;

    // coarse value-noise lattice, bilinearly interpolated
    PlaneX<double> lattice(grid, grid);
    for (Index gy = 0; gy < grid; ++gy)
        for (Index gx = 0; gx < grid; ++gx) lattice(gy, gx) = rng.uniform(-1.0, 1.0);

    const double base = 0.62;
    PlaneX<double> gray(size, size);
    for (Index y = 0; y < size; ++y) {
        for (Index x = 0; x < size; ++x) {
            const double fy = static_cast<double>(y) / cell;
            const double fx = static_cast<double>(x) / cell;
            const Index gy = static_cast<Index>(fy);
            const Index gx = static_cast<Index>(fx);
            const double ty = fy - gy;
            const double tx = fx - gx;
            const double coarse =
                (1 - ty) * ((1 - tx) * lattice(gy, gx) + tx * lattice(gy, gx + 1)) +
                ty * ((1 - tx) * lattice(gy + 1, gx) + tx * lattice(gy + 1, gx + 1));
            const double fine = rng.uniform(-1.0, 1.0);
            gray(y, x) = base + noise_level * (0.8 * coarse + 0.2 * fine);
        }
    }

    // dark polyline spanning the full width, one column per step; the walk
    // drifts lazily so the crack stays locally smooth like a real one
    const Index width = rng.uniform_int(1, 3);
    const Index margin = 2;
    const double shift = std::max(0.35, 3.5 * noise_level);
    Index y = rng.uniform_int(margin, size - 1 - margin - (width - 1));

    Sample s;
    s.image = Tensor4<float>(1, 3, size, size);
    s.mask = Tensor4<float>(1, 1, size, size);
    s.id = "synth_" + std::to_string(seed);

    for (Index x = 0; x < size; ++x) {
        for (Index dy = 0; dy < width; ++dy) {
            gray(y + dy, x) = std::clamp(gray(y + dy, x) - shift, 0.0, 1.0);
            s.mask(0, 0, y + dy, x) = 1.0f;
        }
        const Index step = rng.uniform() < 0.7 ? 0 : rng.uniform_int(-1, 1);
        y = std::clamp<Index>(y + step, margin, size - 1 - margin - (width - 1));
    }

    for (Index yy = 0; yy < size; ++yy)
        for (Index xx = 0; xx < size; ++xx) {
            const float v = static_cast<float>(std::clamp(gray(yy, xx), 0.0, 1.0));
            for (Index c = 0; c < 3; ++c) s.image(0, c, yy, xx) = v;
        }
    return s;
}

}  // namespace hcnn
