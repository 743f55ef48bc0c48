#pragma once

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "hcnn/loss.hpp"
#include "hcnn/ops.hpp"
#include "hcnn/rng.hpp"
#include "hcnn/tensor.hpp"

namespace hcnn {

// Topology description. channel_scale shrinks every block width uniformly for
// desk-scale runs; the scaled widths must stay integral and >= 1.
struct NetworkConfig {
    Index input_channels = 3;
    std::array<Index, 5> channels_per_block{64, 128, 256, 512, 512};
    std::array<Index, 5> convs_per_block{2, 2, 3, 3, 3};
    bool use_batchnorm = false;
    double channel_scale = 1.0;

    static constexpr Index block_count = 5;
    static constexpr Index downsample_total = 32;  // 2^5

    std::array<Index, 5> scaled_channels() const {
        std::array<Index, 5> out{};
        for (std::size_t b = 0; b < 5; ++b) {
            const double scaled = channel_scale * static_cast<double>(channels_per_block[b]);
            const double rounded = std::round(scaled);
            if (rounded < 1.0 || std::abs(scaled - rounded) > 1e-9) {
                throw ConfigError("NetworkConfig: channel_scale " + std::to_string(channel_scale) +
                                  " does not yield integral channels >= 1 for block " +
                                  std::to_string(b + 1));
            }
            out[b] = static_cast<Index>(rounded);
        }
        return out;
    }

    void validate() const {
        if (input_channels < 1) {
            throw ConfigError("NetworkConfig: input_channels must be >= 1");
        }
        Index conv_total = 0;
        for (Index c : convs_per_block) conv_total += c;
        if (conv_total != 13) {
            throw ConfigError("NetworkConfig: encoder must total 13 conv layers, got " +
                              std::to_string(conv_total));
        }
        // widths strictly grow, then plateau
        bool plateau = false;
        for (std::size_t b = 1; b < 5; ++b) {
            if (channels_per_block[b] > channels_per_block[b - 1]) {
                if (plateau) {
                    throw ConfigError("NetworkConfig: channel widths must grow then plateau");
                }
            } else if (channels_per_block[b] == channels_per_block[b - 1]) {
                plateau = true;
            } else {
                throw ConfigError("NetworkConfig: channel widths must not shrink");
            }
        }
        (void)scaled_channels();
    }
};

// Binary mask from a probability map: strictly greater than the threshold.
template <class Scalar>
Tensor4<Scalar> threshold_probability(const Tensor4<Scalar>& prob, double threshold) {
    if (!(threshold > 0.0 && threshold < 1.0)) {
        throw ConfigError("threshold_probability: threshold must lie strictly inside (0, 1)");
    }
    Tensor4<Scalar> mask(prob.n(), prob.c(), prob.h(), prob.w());
    mask.array() = (prob.array() > static_cast<Scalar>(threshold))
                       .select(VectorX<Scalar>::Constant(prob.size(), Scalar(1)), Scalar(0));
    return mask;
}

// Everything the backward pass needs from one forward pass.
template <class Scalar>
struct ForwardCache {
    Tensor4<Scalar> input;
    std::array<std::vector<Tensor4<Scalar>>, 5> enc_pre;  // pre-ReLU conv outputs
    std::array<Tensor4<Scalar>, 5> enc_out;               // post-ReLU, pre-pool
    std::array<PoolIndices, 5> pool_idx;
    std::array<Tensor4<Scalar>, 5> pooled;

    std::array<Tensor4<Scalar>, 5> branch;        // B_k; branch[0] aliases enc_out[0]
    std::array<PoolIndices, 4> branch_down_idx;   // argmax of the branch downsampling
    std::array<Tensor4<Scalar>, 4> branch_cat;    // concat(down(B_{k-1}), E_k)

    std::array<Tensor4<Scalar>, 5> unpooled;
    std::array<std::vector<Tensor4<Scalar>>, 5> dec_pre;
    std::array<Tensor4<Scalar>, 5> dec_out;       // D_k

    std::array<Tensor4<Scalar>, 5> side_cat;      // concat(B_k, D_k)
    std::array<Tensor4<Scalar>, 5> side_small;    // 1x1 output feeding the deconv
    Tensor4<Scalar> fuse_cat;                     // concat(F^1..F^5)
};

// The enhanced hierarchical encoder-decoder network. Immutable during
// forward; training mutates parameters and requires exclusive access.
template <class Scalar>
class Network {
public:
    struct Layer {
        std::string name;
        ConvParams<Scalar> params;
        ConvParams<Scalar> grads;
        Index padding = 0;   // conv layers only
        Index factor = 0;    // deconv layers only; 0 marks a plain conv

        void zero_grads() {
            grads.weights.set_zero();
            grads.bias.setZero();
        }
        void accumulate(const ConvGrads<Scalar>& g) {
            grads.weights.array() += g.weights.array();
            grads.bias += g.bias;
        }
    };

    Network() = default;

    const NetworkConfig& config() const { return config_; }
    const std::array<Index, 5>& channels() const { return ch_; }

    // --- structural introspection -------------------------------------

    Index encoder_conv_count() const {
        Index n = 0;
        for (const auto& blk : encoder_) n += static_cast<Index>(blk.size());
        return n;
    }
    Index decoder_conv_count() const {
        Index n = 0;
        for (const auto& blk : decoder_) n += static_cast<Index>(blk.size());
        return n;
    }
    Index pool_count() const { return static_cast<Index>(encoder_.size()); }
    Index unpool_count() const { return static_cast<Index>(decoder_.size()); }
    static constexpr Index side_map_count() { return 5; }
    static constexpr Index output_map_count() { return 6; }

    // Receptive field of encoder block b's conv stack (0-based).
    Index block_receptive_field(Index b) const {
        std::vector<LayerGeometry> geo;
        for (const auto& l : encoder_[static_cast<std::size_t>(b)]) {
            geo.push_back({l.params.kh(), 1});
        }
        return receptive_field(geo);
    }

    // --- parameter access ----------------------------------------------

    struct ParamView {
        std::string name;
        VectorX<Scalar>* value;
        VectorX<Scalar>* grad;
    };

    std::vector<ParamView> param_views() {
        std::vector<ParamView> out;
        for_each_layer([&](Layer& l) {
            out.push_back({l.name + ".weight", &l.params.weights.array(), &l.grads.weights.array()});
            out.push_back({l.name + ".bias", &l.params.bias, &l.grads.bias});
        });
        return out;
    }

    Index param_count() {
        Index total = 0;
        for (const auto& v : param_views()) total += v.value->size();
        return total;
    }

    void zero_grads() {
        for_each_layer([](Layer& l) { l.zero_grads(); });
    }

    template <class Fn>
    void for_each_layer(Fn&& fn) {
        for (auto& blk : encoder_)
            for (auto& l : blk) fn(l);
        for (auto& l : branch_merge_) fn(l);
        for (auto& blk : decoder_)
            for (auto& l : blk) fn(l);
        for (auto& l : side_conv_) fn(l);
        for (auto& l : side_up_) fn(l);
        fn(fuse_);
    }

    // --- construction ---------------------------------------------------

    static Network build(const NetworkConfig& config, Rng& rng) {
        config.validate();
        if (config.use_batchnorm) {
            throw ConfigError("build_network: batch normalization is not implemented");
        }
        Network net;
        net.config_ = config;
        net.ch_ = config.scaled_channels();
        const auto& ch = net.ch_;
        const auto& convs = config.convs_per_block;

        for (Index b = 0; b < 5; ++b) {
            std::vector<Layer> blk;
            for (Index j = 0; j < convs[static_cast<std::size_t>(b)]; ++j) {
                const Index in_c = (j == 0)
                                       ? (b == 0 ? config.input_channels
                                                 : ch[static_cast<std::size_t>(b - 1)])
                                       : ch[static_cast<std::size_t>(b)];
                blk.push_back(net.make_conv("enc" + std::to_string(b + 1) + ".conv" +
                                                std::to_string(j + 1),
                                            ch[static_cast<std::size_t>(b)], in_c, 3, 1, rng));
            }
            net.encoder_.push_back(std::move(blk));
        }

        for (Index b = 1; b < 5; ++b) {
            const Index in_c = ch[static_cast<std::size_t>(b - 1)] + ch[static_cast<std::size_t>(b)];
            net.branch_merge_.push_back(net.make_conv(
                "branch" + std::to_string(b + 1) + ".merge", ch[static_cast<std::size_t>(b)],
                in_c, 1, 0, rng));
        }

        for (Index b = 0; b < 5; ++b) {
            std::vector<Layer> blk;
            const Index width = ch[static_cast<std::size_t>(b)];
            const Index out_final = (b == 0) ? ch[0] : ch[static_cast<std::size_t>(b - 1)];
            const Index count = convs[static_cast<std::size_t>(b)];
            for (Index j = 0; j < count; ++j) {
                const Index out_c = (j == count - 1) ? out_final : width;
                blk.push_back(net.make_conv("dec" + std::to_string(b + 1) + ".conv" +
                                                std::to_string(j + 1),
                                            out_c, width, 3, 1, rng));
            }
            net.decoder_.push_back(std::move(blk));
        }

        for (Index b = 0; b < 5; ++b) {
            const Index dec_c = (b == 0) ? ch[0] : ch[static_cast<std::size_t>(b - 1)];
            const Index in_c = ch[static_cast<std::size_t>(b)] + dec_c;
            net.side_conv_.push_back(
                net.make_conv("side" + std::to_string(b + 1) + ".conv", 1, in_c, 1, 0, rng));
            net.side_up_.push_back(
                net.make_deconv("side" + std::to_string(b + 1) + ".up", Index(1) << b));
        }

        net.fuse_ = net.make_conv("fuse", 1, 5, 1, 0, rng);
        return net;
    }

    // --- forward ----------------------------------------------------------

    std::pair<SideOutputs<Scalar>, ForwardCache<Scalar>> forward(
        const Tensor4<Scalar>& image) const {
        if (image.c() != config_.input_channels) {
            throw ShapeError("forward: image has " + std::to_string(image.c()) +
                             " channels, network expects " +
                             std::to_string(config_.input_channels));
        }
        if (image.h() % NetworkConfig::downsample_total != 0 ||
            image.w() % NetworkConfig::downsample_total != 0) {
            throw ShapeError("forward: spatial dims must be divisible by 32, got " +
                             image.shape_str());
        }

        ForwardCache<Scalar> cache;
        SideOutputs<Scalar> outs;
        cache.input = image;

        Tensor4<Scalar> a = image;
        for (std::size_t b = 0; b < 5; ++b) {
            for (const auto& layer : encoder_[b]) {
                Tensor4<Scalar> pre = conv2d(a, layer.params, layer.padding);
                a = relu(pre);
                cache.enc_pre[b].push_back(std::move(pre));
            }
            cache.enc_out[b] = a;
            auto pooled = maxpool2x2(a);
            cache.pool_idx[b] = std::move(pooled.indices);
            cache.pooled[b] = std::move(pooled.output);
            a = cache.pooled[b];
        }

        cache.branch[0] = cache.enc_out[0];
        for (std::size_t b = 1; b < 5; ++b) {
            auto down = maxpool2x2(cache.branch[b - 1]);
            cache.branch_down_idx[b - 1] = std::move(down.indices);
            cache.branch_cat[b - 1] = concat_channels(down.output, cache.enc_out[b]);
            cache.branch[b] = conv2d(cache.branch_cat[b - 1], branch_merge_[b - 1].params, 0);
        }

        Tensor4<Scalar> d = cache.pooled[4];
        for (Index b = 4; b >= 0; --b) {
            const auto bu = static_cast<std::size_t>(b);
            cache.unpooled[bu] = max_unpool2x2(d, cache.pool_idx[bu], 2 * d.h(), 2 * d.w());
            Tensor4<Scalar> t = cache.unpooled[bu];
            for (const auto& layer : decoder_[bu]) {
                Tensor4<Scalar> pre = conv2d(t, layer.params, layer.padding);
                t = relu(pre);
                cache.dec_pre[bu].push_back(std::move(pre));
            }
            cache.dec_out[bu] = t;
            d = t;
        }

        for (std::size_t b = 0; b < 5; ++b) {
            cache.side_cat[b] = concat_channels(cache.branch[b], cache.dec_out[b]);
            cache.side_small[b] = conv2d(cache.side_cat[b], side_conv_[b].params, 0);
            outs.side[b] = deconv(cache.side_small[b], side_up_[b].params, side_up_[b].factor);
        }

        cache.fuse_cat = outs.side[0];
        for (std::size_t b = 1; b < 5; ++b) {
            cache.fuse_cat = concat_channels(cache.fuse_cat, outs.side[b]);
        }
        outs.fused = conv2d(cache.fuse_cat, fuse_.params, 0);
        return {std::move(outs), std::move(cache)};
    }

    // --- backward ----------------------------------------------------------

    // Accumulates d(image_loss)/d(theta) into the layer gradient buffers.
    // Call zero_grads() at step boundaries; batches accumulate across calls.
    void backward(const ForwardCache<Scalar>& cache, const SideOutputs<Scalar>& outs,
                  const Tensor4<Scalar>& gt) {
        std::array<Tensor4<Scalar>, 5> g_side;
        for (std::size_t b = 0; b < 5; ++b) {
            g_side[b] = bce_logit_gradient(outs.side[b], gt);
        }
        Tensor4<Scalar> g_fused = bce_logit_gradient(outs.fused, gt);

        // fusion head
        ConvGrads<Scalar> fg = conv2d_backward(cache.fuse_cat, fuse_.params, g_fused, 0);
        fuse_.accumulate(fg);
        for (std::size_t b = 0; b < 5; ++b) {
            g_side[b].array() +=
                slice_channels(fg.input, static_cast<Index>(b), 1).array();
        }

        // side heads
        std::array<Tensor4<Scalar>, 5> g_branch;
        std::array<Tensor4<Scalar>, 5> g_dec;
        for (std::size_t b = 0; b < 5; ++b) {
            ConvGrads<Scalar> ug = deconv_backward(cache.side_small[b], side_up_[b].params,
                                                   side_up_[b].factor, g_side[b]);
            side_up_[b].accumulate(ug);
            ConvGrads<Scalar> sg = conv2d_backward(cache.side_cat[b], side_conv_[b].params,
                                                   ug.input, 0);
            side_conv_[b].accumulate(sg);
            auto [gb, gd] = concat_channels_backward(sg.input, cache.branch[b].c());
            g_branch[b] = std::move(gb);
            g_dec[b] = std::move(gd);
        }

        // decoder chain, shallow to deep; stage b's input was dec_out[b+1]
        Tensor4<Scalar> g_bottleneck;
        for (std::size_t b = 0; b < 5; ++b) {
            Tensor4<Scalar> g = std::move(g_dec[b]);
            g = block_backward(decoder_[b], cache.dec_pre[b], cache.unpooled[b], g);
            Tensor4<Scalar> g_in = max_unpool2x2_backward(g, cache.pool_idx[b]);
            if (b < 4) {
                g_dec[b + 1].array() += g_in.array();
            } else {
                g_bottleneck = std::move(g_in);
            }
        }

        // branch chain, deep to shallow
        std::array<Tensor4<Scalar>, 5> g_enc_extra;
        for (std::size_t b = 4; b >= 1; --b) {
            ConvGrads<Scalar> mg =
                conv2d_backward(cache.branch_cat[b - 1], branch_merge_[b - 1].params,
                                g_branch[b], 0);
            branch_merge_[b - 1].accumulate(mg);
            auto [g_down, g_e] = concat_channels_backward(mg.input, cache.branch[b - 1].c());
            accumulate_into(g_enc_extra[b], g_e);
            Tensor4<Scalar> g_up = maxpool2x2_backward(g_down, cache.branch_down_idx[b - 1]);
            g_branch[b - 1].array() += g_up.array();
        }
        accumulate_into(g_enc_extra[0], g_branch[0]);  // B_1 aliases E_1

        // encoder, deep to shallow
        Tensor4<Scalar> g_pooled = std::move(g_bottleneck);
        for (Index b = 4; b >= 0; --b) {
            const auto bu = static_cast<std::size_t>(b);
            Tensor4<Scalar> g_e = maxpool2x2_backward(g_pooled, cache.pool_idx[bu]);
            if (!g_enc_extra[bu].empty()) {
                g_e.array() += g_enc_extra[bu].array();
            }
            const Tensor4<Scalar>& block_in = (b == 0) ? cache.input : cache.pooled[bu - 1];
            Tensor4<Scalar> g = block_backward(encoder_[bu], cache.enc_pre[bu], block_in, g_e);
            if (b > 0) g_pooled = std::move(g);
        }
    }

    // --- prediction ---------------------------------------------------------

    Tensor4<Scalar> predict(const Tensor4<Scalar>& image, double threshold) const {
        if (!(threshold > 0.0 && threshold < 1.0)) {
            throw ConfigError("predict: threshold must lie strictly inside (0, 1)");
        }
        auto [outs, cache] = forward(image);
        return threshold_probability(sigmoid_map(outs.fused), threshold);
    }

    std::vector<std::vector<Layer>>& encoder_blocks() { return encoder_; }
    std::vector<Layer>& branch_merges() { return branch_merge_; }
    std::vector<std::vector<Layer>>& decoder_blocks() { return decoder_; }
    std::vector<Layer>& side_convs() { return side_conv_; }
    std::vector<Layer>& side_ups() { return side_up_; }
    Layer& fuse_layer() { return fuse_; }

private:
    Layer make_conv(std::string name, Index out_c, Index in_c, Index k, Index padding, Rng& rng) {
        Layer l;
        l.name = std::move(name);
        l.params.weights = he_normal_init<Scalar>(out_c, in_c, k, k, rng);
        l.params.bias = VectorX<Scalar>::Zero(out_c);
        l.grads = ConvParams<Scalar>(out_c, in_c, k, k);
        l.padding = padding;
        return l;
    }

    Layer make_deconv(std::string name, Index factor) {
        Layer l;
        l.name = std::move(name);
        l.params = bilinear_kernel<Scalar>(factor, 1);
        l.grads = ConvParams<Scalar>(1, 1, 2 * factor, 2 * factor);
        l.factor = factor;
        return l;
    }

    // Reverse pass through one conv+ReLU block; returns grad w.r.t. the block
    // input and accumulates layer gradients.
    Tensor4<Scalar> block_backward(std::vector<Layer>& block,
                                   const std::vector<Tensor4<Scalar>>& pre,
                                   const Tensor4<Scalar>& block_in, Tensor4<Scalar> g) {
        for (Index j = static_cast<Index>(block.size()) - 1; j >= 0; --j) {
            const auto ju = static_cast<std::size_t>(j);
            g = relu_backward(pre[ju], g);
            const Tensor4<Scalar> conv_in = (j == 0) ? block_in : relu(pre[ju - 1]);
            ConvGrads<Scalar> cg = conv2d_backward(conv_in, block[ju].params, g, block[ju].padding);
            block[ju].accumulate(cg);
            g = std::move(cg.input);
        }
        return g;
    }

    static void accumulate_into(Tensor4<Scalar>& dst, const Tensor4<Scalar>& src) {
        if (dst.empty()) {
            dst = src;
        } else {
            dst.array() += src.array();
        }
    }

    NetworkConfig config_;
    std::array<Index, 5> ch_{};
    std::vector<std::vector<Layer>> encoder_;
    std::vector<Layer> branch_merge_;
    std::vector<std::vector<Layer>> decoder_;
    std::vector<Layer> side_conv_;
    std::vector<Layer> side_up_;
    Layer fuse_;
};

template <class Scalar>
Network<Scalar> build_network(const NetworkConfig& config, Rng& rng) {
    return Network<Scalar>::build(config, rng);
}

}  // namespace hcnn
