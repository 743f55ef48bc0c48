#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include "hcnn/network.hpp"

namespace hcnn {

// Checkpoint layout, all integers little-endian:
//   "HCNN" | u32 version | u32 input_channels | 5x u32 channels_per_block |
//   5x u32 convs_per_block | f64 channel_scale | u8 use_batchnorm |
//   u64 epoch | u64 step | u64 seed | u64 record_count |
//   records: u32 name_len, name bytes, 4x u64 shape, f32 values
// Values are stored as IEEE-754 32-bit regardless of the in-memory scalar, so
// float networks round-trip bit-exactly.
struct CheckpointMeta {
    std::uint64_t epoch = 0;
    std::uint64_t step = 0;
    std::uint64_t seed = 0;
};

namespace detail {

constexpr char kCheckpointMagic[4] = {'H', 'C', 'N', 'N'};
constexpr std::uint32_t kCheckpointVersion = 1;

inline void write_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
}

template <class T>
void write_le(std::ostream& os, T v) {
    static_assert(std::is_trivially_copyable_v<T>);
    unsigned char buf[sizeof(T)];
    std::memcpy(buf, &v, sizeof(T));
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    }
    write_bytes(os, buf, sizeof(T));
}

inline void read_bytes(std::istream& is, void* p, std::size_t n, const char* what) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) {
        throw TruncatedError(std::string("checkpoint: file ended while reading ") + what);
    }
}

template <class T>
T read_le(std::istream& is, const char* what) {
    unsigned char buf[sizeof(T)];
    read_bytes(is, buf, sizeof(T), what);
    if constexpr (std::endian::native == std::endian::big) {
        for (std::size_t i = 0; i < sizeof(T) / 2; ++i) std::swap(buf[i], buf[sizeof(T) - 1 - i]);
    }
    T v;
    std::memcpy(&v, buf, sizeof(T));
    return v;
}

}  // namespace detail

template <class Scalar>
void save_checkpoint(Network<Scalar>& net, const std::filesystem::path& path,
                     const CheckpointMeta& meta = {}) {
    namespace fs = std::filesystem;
    const fs::path tmp = path.string() + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) {
            throw IoError("save_checkpoint: cannot open " + tmp.string() + " for writing");
        }
        detail::write_bytes(os, detail::kCheckpointMagic, 4);
        detail::write_le<std::uint32_t>(os, detail::kCheckpointVersion);

        const auto& cfg = net.config();
        detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(cfg.input_channels));
        for (Index c : cfg.channels_per_block)
            detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c));
        for (Index c : cfg.convs_per_block)
            detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(c));
        detail::write_le<double>(os, cfg.channel_scale);
        detail::write_le<std::uint8_t>(os, cfg.use_batchnorm ? 1 : 0);

        detail::write_le<std::uint64_t>(os, meta.epoch);
        detail::write_le<std::uint64_t>(os, meta.step);
        detail::write_le<std::uint64_t>(os, meta.seed);

        std::uint64_t records = 0;
        net.for_each_layer([&](auto&) { records += 2; });
        detail::write_le<std::uint64_t>(os, records);

        net.for_each_layer([&](auto& layer) {
            const auto write_record = [&](const std::string& name, const Scalar* data,
                                          std::uint64_t n, std::uint64_t c, std::uint64_t h,
                                          std::uint64_t w) {
                detail::write_le<std::uint32_t>(os, static_cast<std::uint32_t>(name.size()));
                detail::write_bytes(os, name.data(), name.size());
                detail::write_le<std::uint64_t>(os, n);
                detail::write_le<std::uint64_t>(os, c);
                detail::write_le<std::uint64_t>(os, h);
                detail::write_le<std::uint64_t>(os, w);
                const std::uint64_t count = n * c * h * w;
                for (std::uint64_t i = 0; i < count; ++i) {
                    detail::write_le<float>(os, static_cast<float>(data[i]));
                }
            };
            const auto& wt = layer.params.weights;
            write_record(layer.name + ".weight", wt.data(),
                         static_cast<std::uint64_t>(wt.n()), static_cast<std::uint64_t>(wt.c()),
                         static_cast<std::uint64_t>(wt.h()), static_cast<std::uint64_t>(wt.w()));
            write_record(layer.name + ".bias", layer.params.bias.data(), 1, 1, 1,
                         static_cast<std::uint64_t>(layer.params.bias.size()));
        });
        if (!os) {
            throw IoError("save_checkpoint: write failed for " + tmp.string());
        }
    }
    fs::rename(tmp, path);
}

struct CheckpointHeader {
    NetworkConfig config;
    CheckpointMeta meta;
    std::uint64_t record_count = 0;
};

namespace detail {

inline CheckpointHeader read_checkpoint_header(std::istream& is) {
    char magic[4];
    read_bytes(is, magic, 4, "magic");
    if (std::memcmp(magic, kCheckpointMagic, 4) != 0) {
        throw FormatError("checkpoint: bad magic string");
    }
    const auto version = read_le<std::uint32_t>(is, "version");
    if (version != kCheckpointVersion) {
        throw VersionError("checkpoint: unsupported format version " + std::to_string(version));
    }
    CheckpointHeader h;
    h.config.input_channels = read_le<std::uint32_t>(is, "input_channels");
    for (auto& c : h.config.channels_per_block) c = read_le<std::uint32_t>(is, "channels");
    for (auto& c : h.config.convs_per_block) c = read_le<std::uint32_t>(is, "convs");
    h.config.channel_scale = read_le<double>(is, "channel_scale");
    h.config.use_batchnorm = read_le<std::uint8_t>(is, "use_batchnorm") != 0;
    h.meta.epoch = read_le<std::uint64_t>(is, "epoch");
    h.meta.step = read_le<std::uint64_t>(is, "step");
    h.meta.seed = read_le<std::uint64_t>(is, "seed");
    h.record_count = read_le<std::uint64_t>(is, "record_count");
    return h;
}

template <class Scalar>
void read_checkpoint_records(std::istream& is, std::uint64_t record_count,
                             Network<Scalar>& net) {
    auto views = net.param_views();
    std::vector<bool> filled(views.size(), false);

    for (std::uint64_t r = 0; r < record_count; ++r) {
        const auto name_len = read_le<std::uint32_t>(is, "record name length");
        std::string name(name_len, '\0');
        read_bytes(is, name.data(), name_len, "record name");
        std::uint64_t shape[4];
        for (auto& s : shape) s = read_le<std::uint64_t>(is, "record shape");
        const std::uint64_t count = shape[0] * shape[1] * shape[2] * shape[3];

        std::size_t slot = views.size();
        for (std::size_t i = 0; i < views.size(); ++i) {
            if (views[i].name == name) {
                slot = i;
                break;
            }
        }
        if (slot == views.size()) {
            throw FormatError("checkpoint: unknown parameter record '" + name + "'");
        }
        if (static_cast<std::uint64_t>(views[slot].value->size()) != count) {
            throw ShapeError("checkpoint: record '" + name + "' holds " + std::to_string(count) +
                             " values, network parameter expects " +
                             std::to_string(views[slot].value->size()));
        }
        auto& dst = *views[slot].value;
        for (std::uint64_t i = 0; i < count; ++i) {
            dst[static_cast<Index>(i)] = static_cast<Scalar>(read_le<float>(is, "record values"));
        }
        filled[slot] = true;
    }
    for (std::size_t i = 0; i < views.size(); ++i) {
        if (!filled[i]) {
            throw FormatError("checkpoint: missing parameter record '" + views[i].name + "'");
        }
    }
}

}  // namespace detail

// Rebuilds the network described by the checkpoint itself.
template <class Scalar>
Network<Scalar> load_checkpoint(const std::filesystem::path& path,
                                CheckpointMeta* meta_out = nullptr) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("load_checkpoint: cannot open " + path.string());
    }
    const CheckpointHeader h = detail::read_checkpoint_header(is);
    Rng rng(0);  // weights are overwritten record by record
    Network<Scalar> net = build_network<Scalar>(h.config, rng);
    detail::read_checkpoint_records(is, h.record_count, net);
    if (meta_out) *meta_out = h.meta;
    return net;
}

// Loads records into an existing network; shapes must match exactly.
template <class Scalar>
CheckpointMeta load_checkpoint_into(Network<Scalar>& net, const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("load_checkpoint_into: cannot open " + path.string());
    }
    const CheckpointHeader h = detail::read_checkpoint_header(is);
    detail::read_checkpoint_records(is, h.record_count, net);
    return h.meta;
}

}  // namespace hcnn
