#pragma once

// The segmentation models: a residual 2D U-Net (default) and a vanilla
// 2D U-Net, both single-channel in / single-logit out.
//
// Residual variant, depth D, base filters F (channels double per level):
//   stem  conv3x3 1->F (no bias)
//   enc 0 ResBlock(F)
//   per level l>0: down conv3x3 stride2 + BN + ReLU, then ResBlock
//   per decoder level: nearest x2 + conv3x3 + BN + ReLU, 1x1 conv on the
//   skip feature, channel-wise SUM merge, then ResBlock
//   head  conv3x3 F->1 (no bias)
// Convolutions carry no bias (BN follows them on the main path; stem and
// head are kept bias-free so the first/last layer groups hold equal
// parameter counts).
//
// Vanilla variant: double 3x3 conv blocks, 2x2 max pooling, nearest-x2
// up path and channel-wise CONCAT merges, 1x1 output conv.
//
// Layer groups ("first" / "last" / "all"): the main-path convolution
// order is stem, enc0.conv1, enc0.conv2, ..., dec0.conv1, dec0.conv2,
// head; "first" is the first three of these, "last" the final three,
// each together with the batchnorm that follows the conv. The 1x1 skip
// convolutions are not main-path layers and belong to "all" only.

#include <map>
#include <memory>
#include <stdexcept>
#include <string>
#include <vector>

#include "segda/nn_layers.hpp"

namespace segda::nn {

enum class Variant { residual_unet, vanilla_unet };

inline const char* variant_name(Variant v) {
    return v == Variant::residual_unet ? "residual_unet" : "vanilla_unet";
}

inline Variant variant_from_name(const std::string& s) {
    if (s == "residual_unet") return Variant::residual_unet;
    if (s == "vanilla_unet") return Variant::vanilla_unet;
    throw std::invalid_argument("unknown model variant: " + s);
}

struct ModelSpec {
    Variant variant = Variant::residual_unet;
    int depth = 4;         // resolution levels
    int base_filters = 16; // channels at level 0
    int in_channels = 1;
    int out_channels = 1;

    void validate() const {
        if (depth < 2) throw std::invalid_argument("ModelSpec: depth must be >= 2");
        if (base_filters < 1) throw std::invalid_argument("ModelSpec: base_filters must be >= 1");
        if (in_channels != 1 || out_channels != 1)
            throw std::invalid_argument("ModelSpec: single input/output channel only");
    }

    int channels_at(int level) const { return base_filters << level; }
    std::size_t divisor() const { return std::size_t(1) << (depth - 1); }
};

struct LayerGroup {
    std::string name;
    std::vector<std::string> parameter_ids;
};

template <typename T>
struct ResBlock {
    Conv2D<T> conv1, conv2;
    BatchNorm2D<T> bn1, bn2;
    ReLU<T> relu1, relu2;
    Tensor<T> sum, dx;

    void init(const std::string& name, std::int64_t c, Rng& rng) {
        conv1.init(name + ".conv1", c, c, 3, 1, false, rng);
        bn1.init(name + ".bn1", c);
        conv2.init(name + ".conv2", c, c, 3, 1, false, rng);
        bn2.init(name + ".bn2", c);
    }

    const Tensor<T>& forward(const Tensor<T>& x, bool training) {
        const Tensor<T>& h = relu1.forward(bn1.forward(conv1.forward(x), training));
        const Tensor<T>& h2 = bn2.forward(conv2.forward(h), training);
        sum = h2;
        kern::add_inplace(sum.data(), x.data(), static_cast<std::int64_t>(x.numel()));
        return relu2.forward(sum);
    }

    const Tensor<T>& backward(const Tensor<T>& dy) {
        const Tensor<T>& dsum = relu2.backward(dy);
        dx = conv1.backward(bn1.backward(relu1.backward(conv2.backward(bn2.backward(dsum)))));
        kern::add_inplace(dx.data(), dsum.data(), static_cast<std::int64_t>(dx.numel()));
        return dx;
    }
};

template <typename T>
struct ConvBnRelu {
    Conv2D<T> conv;
    BatchNorm2D<T> bn;
    ReLU<T> relu;

    void init(const std::string& name, std::int64_t ci, std::int64_t co, std::int64_t stride,
              Rng& rng) {
        conv.init(name + ".conv", ci, co, 3, stride, false, rng);
        bn.init(name + ".bn", co);
    }
    const Tensor<T>& forward(const Tensor<T>& x, bool training) {
        return relu.forward(bn.forward(conv.forward(x), training));
    }
    const Tensor<T>& backward(const Tensor<T>& dy) {
        return conv.backward(bn.backward(relu.backward(dy)));
    }
};

template <typename T>
struct DoubleConv {
    ConvBnRelu<T> a, b;

    void init(const std::string& name, std::int64_t ci, std::int64_t co, Rng& rng) {
        a.init(name + ".a", ci, co, 1, rng);
        b.init(name + ".b", co, co, 1, rng);
    }
    const Tensor<T>& forward(const Tensor<T>& x, bool training) {
        return b.forward(a.forward(x, training), training);
    }
    const Tensor<T>& backward(const Tensor<T>& dy) { return a.backward(b.backward(dy)); }
};

template <typename T>
class Unet2D {
public:
    Unet2D() = default;

    static Unet2D build(const ModelSpec& spec, Rng rng) {
        spec.validate();
        Unet2D m;
        m.spec_ = spec;
        const int D = spec.depth;
        if (spec.variant == Variant::residual_unet) {
            m.stem_.init("stem", spec.in_channels, spec.base_filters, 3, 1, false, rng);
            m.enc_.resize(D);
            m.downs_.resize(D);  // index 0 unused
            for (int l = 0; l < D; ++l) {
                if (l > 0)
                    m.downs_[l].init("down" + std::to_string(l), spec.channels_at(l - 1),
                                     spec.channels_at(l), 2, rng);
                m.enc_[l].init("enc" + std::to_string(l), spec.channels_at(l), rng);
            }
            m.ups_.resize(D - 1);
            m.upsamples_.resize(D - 1);
            m.skips_.resize(D - 1);
            m.dec_.resize(D - 1);
            for (int l = D - 2; l >= 0; --l) {
                m.ups_[l].init("up" + std::to_string(l), spec.channels_at(l + 1),
                               spec.channels_at(l), 1, rng);
                m.skips_[l].init("skip" + std::to_string(l), spec.channels_at(l),
                                 spec.channels_at(l), 1, 1, false, rng);
                m.dec_[l].init("dec" + std::to_string(l), spec.channels_at(l), rng);
            }
            m.head_.init("head", spec.base_filters, spec.out_channels, 3, 1, false, rng);
        } else {
            m.venc_.resize(D);
            m.pools_.resize(D);  // index 0 unused
            for (int l = 0; l < D; ++l)
                m.venc_[l].init("enc" + std::to_string(l),
                                l == 0 ? spec.in_channels : spec.channels_at(l - 1),
                                spec.channels_at(l), rng);
            m.vups_.resize(D - 1);
            m.upsamples_.resize(D - 1);
            m.vdec_.resize(D - 1);
            for (int l = D - 2; l >= 0; --l) {
                m.vups_[l].init("up" + std::to_string(l), spec.channels_at(l + 1),
                                spec.channels_at(l), 1, rng);
                m.vdec_[l].init("dec" + std::to_string(l), 2 * spec.channels_at(l),
                                spec.channels_at(l), rng);
            }
            m.head_.init("head", spec.base_filters, spec.out_channels, 1, 1, true, rng);
        }
        return m;
    }

    const ModelSpec& spec() const { return spec_; }
    bool training() const { return training_; }
    void set_training(bool t) { training_ = t; }

    // --- parameter access ---------------------------------------------------

    std::vector<Param<T>*> params() {
        std::vector<Param<T>*> out;
        visit_params([&](Param<T>& p) { out.push_back(&p); });
        return out;
    }

    std::vector<BatchNorm2D<T>*> batchnorms() {
        std::vector<BatchNorm2D<T>*> out;
        visit_bns([&](BatchNorm2D<T>& bn) { out.push_back(&bn); });
        return out;
    }

    Param<T>* find_param(const std::string& name) {
        Param<T>* found = nullptr;
        visit_params([&](Param<T>& p) {
            if (p.name == name) found = &p;
        });
        return found;
    }

    std::map<std::string, LayerGroup> layer_groups() {
        std::map<std::string, LayerGroup> g;
        auto convs = main_path_convs();
        auto add = [&](LayerGroup& lg, std::size_t i) {
            lg.parameter_ids.push_back(convs[i].conv->w.name);
            if (convs[i].conv->has_bias) lg.parameter_ids.push_back(convs[i].conv->b.name);
            if (convs[i].bn) {
                lg.parameter_ids.push_back(convs[i].bn->gamma.name);
                lg.parameter_ids.push_back(convs[i].bn->beta.name);
            }
        };
        LayerGroup first{"first", {}}, last{"last", {}}, all{"all", {}};
        for (std::size_t i = 0; i < 3 && i < convs.size(); ++i) add(first, i);
        for (std::size_t i = convs.size() >= 3 ? convs.size() - 3 : 0; i < convs.size(); ++i)
            add(last, i);
        visit_params([&](Param<T>& p) { all.parameter_ids.push_back(p.name); });
        g["first"] = std::move(first);
        g["last"] = std::move(last);
        g["all"] = std::move(all);
        return g;
    }

    std::size_t parameter_count(const std::string& group_name) {
        auto groups = layer_groups();
        auto it = groups.find(group_name);
        if (it == groups.end())
            throw std::out_of_range("unknown layer group: " + group_name);
        std::size_t n = 0;
        for (const auto& id : it->second.parameter_ids) {
            Param<T>* p = find_param(id);
            if (!p) throw std::logic_error("group references unknown parameter: " + id);
            n += p->value.numel();
        }
        return n;
    }

    // keep BN freeze state consistent with the trainable flags
    void sync_bn_freeze() {
        visit_bns([](BatchNorm2D<T>& bn) { bn.frozen_stats = !bn.gamma.trainable; });
    }

    void zero_grad() {
        visit_params([](Param<T>& p) { p.grad.zero(); });
    }

    // --- forward / backward -------------------------------------------------

    Tensor<T> forward(const Tensor<T>& x) {
        if (x.rank() != 4 || x.dim(1) != static_cast<std::size_t>(spec_.in_channels))
            throw std::invalid_argument("forward: expected NCHW input with matching channels");
        const std::size_t div = spec_.divisor();
        if (x.dim(2) % div != 0 || x.dim(3) % div != 0)
            throw std::invalid_argument("forward: spatial dims must be divisible by 2^(depth-1)");
        return spec_.variant == Variant::residual_unet ? forward_residual(x) : forward_vanilla(x);
    }

    void backward(const Tensor<T>& dlogits) {
        if (spec_.variant == Variant::residual_unet)
            backward_residual(dlogits);
        else
            backward_vanilla(dlogits);
    }

private:
    ModelSpec spec_;
    bool training_ = true;

    // residual variant
    Conv2D<T> stem_, head_;
    std::vector<ResBlock<T>> enc_, dec_;
    std::vector<ConvBnRelu<T>> downs_, ups_;
    std::vector<Conv2D<T>> skips_;

    // vanilla variant
    std::vector<DoubleConv<T>> venc_, vdec_;
    std::vector<ConvBnRelu<T>> vups_;
    std::vector<MaxPool2<T>> pools_;

    std::vector<Upsample2<T>> upsamples_;

    // per-forward caches
    std::vector<Tensor<T>> enc_out_;
    std::vector<Tensor<T>> merged_;
    std::vector<Tensor<T>> concat_;

    struct MainConv {
        Conv2D<T>* conv;
        BatchNorm2D<T>* bn;
    };

    std::vector<MainConv> main_path_convs() {
        std::vector<MainConv> v;
        const int D = spec_.depth;
        if (spec_.variant == Variant::residual_unet) {
            v.push_back({&stem_, nullptr});
            for (int l = 0; l < D; ++l) {
                if (l > 0) v.push_back({&downs_[l].conv, &downs_[l].bn});
                v.push_back({&enc_[l].conv1, &enc_[l].bn1});
                v.push_back({&enc_[l].conv2, &enc_[l].bn2});
            }
            for (int l = D - 2; l >= 0; --l) {
                v.push_back({&ups_[l].conv, &ups_[l].bn});
                v.push_back({&dec_[l].conv1, &dec_[l].bn1});
                v.push_back({&dec_[l].conv2, &dec_[l].bn2});
            }
            v.push_back({&head_, nullptr});
        } else {
            for (int l = 0; l < D; ++l) {
                v.push_back({&venc_[l].a.conv, &venc_[l].a.bn});
                v.push_back({&venc_[l].b.conv, &venc_[l].b.bn});
            }
            for (int l = D - 2; l >= 0; --l) {
                v.push_back({&vups_[l].conv, &vups_[l].bn});
                v.push_back({&vdec_[l].a.conv, &vdec_[l].a.bn});
                v.push_back({&vdec_[l].b.conv, &vdec_[l].b.bn});
            }
            v.push_back({&head_, nullptr});
        }
        return v;
    }

    template <typename Fn>
    void visit_params(Fn&& fn) {
        auto conv = [&](Conv2D<T>& c) {
            fn(c.w);
            if (c.has_bias) fn(c.b);
        };
        auto bn = [&](BatchNorm2D<T>& b) {
            fn(b.gamma);
            fn(b.beta);
        };
        const int D = spec_.depth;
        if (spec_.variant == Variant::residual_unet) {
            conv(stem_);
            for (int l = 0; l < D; ++l) {
                if (l > 0) {
                    conv(downs_[l].conv);
                    bn(downs_[l].bn);
                }
                conv(enc_[l].conv1);
                bn(enc_[l].bn1);
                conv(enc_[l].conv2);
                bn(enc_[l].bn2);
            }
            for (int l = D - 2; l >= 0; --l) {
                conv(ups_[l].conv);
                bn(ups_[l].bn);
                conv(skips_[l]);
                conv(dec_[l].conv1);
                bn(dec_[l].bn1);
                conv(dec_[l].conv2);
                bn(dec_[l].bn2);
            }
            conv(head_);
        } else {
            for (int l = 0; l < D; ++l) {
                conv(venc_[l].a.conv);
                bn(venc_[l].a.bn);
                conv(venc_[l].b.conv);
                bn(venc_[l].b.bn);
            }
            for (int l = D - 2; l >= 0; --l) {
                conv(vups_[l].conv);
                bn(vups_[l].bn);
                conv(vdec_[l].a.conv);
                bn(vdec_[l].a.bn);
                conv(vdec_[l].b.conv);
                bn(vdec_[l].b.bn);
            }
            conv(head_);
        }
    }

    template <typename Fn>
    void visit_bns(Fn&& fn) {
        const int D = spec_.depth;
        if (spec_.variant == Variant::residual_unet) {
            for (int l = 0; l < D; ++l) {
                if (l > 0) fn(downs_[l].bn);
                fn(enc_[l].bn1);
                fn(enc_[l].bn2);
            }
            for (int l = D - 2; l >= 0; --l) {
                fn(ups_[l].bn);
                fn(dec_[l].bn1);
                fn(dec_[l].bn2);
            }
        } else {
            for (int l = 0; l < D; ++l) {
                fn(venc_[l].a.bn);
                fn(venc_[l].b.bn);
            }
            for (int l = D - 2; l >= 0; --l) {
                fn(vups_[l].bn);
                fn(vdec_[l].a.bn);
                fn(vdec_[l].b.bn);
            }
        }
    }

public:
    template <typename Fn>
    void for_each_param(Fn&& fn) { visit_params(std::forward<Fn>(fn)); }

    template <typename Fn>
    void for_each_bn(Fn&& fn) { visit_bns(std::forward<Fn>(fn)); }

private:
    Tensor<T> forward_residual(const Tensor<T>& x) {
        const int D = spec_.depth;
        enc_out_.assign(D, {});
        merged_.assign(D - 1, {});
        Tensor<T> h = stem_.forward(x);
        for (int l = 0; l < D; ++l) {
            if (l > 0) h = downs_[l].forward(h, training_);
            h = enc_[l].forward(h, training_);
            enc_out_[l] = h;
        }
        for (int l = D - 2; l >= 0; --l) {
            Tensor<T> up = ups_[l].forward(upsamples_[l].forward(h), training_);
            const Tensor<T>& sk = skips_[l].forward(enc_out_[l]);
            kern::add_inplace(up.data(), sk.data(), static_cast<std::int64_t>(up.numel()));
            merged_[l] = up;
            h = dec_[l].forward(merged_[l], training_);
        }
        return head_.forward(h);
    }

    void backward_residual(const Tensor<T>& dlogits) {
        const int D = spec_.depth;
        Tensor<T> d = head_.backward(dlogits);
        // decoder ran for l = D-2 .. 0, so backprop ascends; the skip branch
        // gradient toward each encoder output is held until the encoder sweep
        std::vector<Tensor<T>> d_enc(D);
        for (int l = 0; l <= D - 2; ++l) {
            const Tensor<T> dmerged = dec_[l].backward(d);
            // merge was up + skip(enc_out): both branches receive dmerged
            d_enc[l] = skips_[l].backward(dmerged);
            d = upsamples_[l].backward(ups_[l].backward(dmerged));
        }
        // d now carries the gradient at the bottleneck encoder output
        for (int l = D - 1; l >= 0; --l) {
            if (l <= D - 2)
                kern::add_inplace(d.data(), d_enc[l].data(), static_cast<std::int64_t>(d.numel()));
            d = enc_[l].backward(d);
            if (l > 0) d = downs_[l].backward(d);
        }
        stem_.backward(d);
    }

    Tensor<T> forward_vanilla(const Tensor<T>& x) {
        const int D = spec_.depth;
        enc_out_.assign(D, {});
        concat_.assign(D - 1, {});
        Tensor<T> h = x;
        for (int l = 0; l < D; ++l) {
            if (l > 0) h = pools_[l].forward(h);
            h = venc_[l].forward(h, training_);
            enc_out_[l] = h;
        }
        for (int l = D - 2; l >= 0; --l) {
            Tensor<T> up = vups_[l].forward(upsamples_[l].forward(h), training_);
            concat_[l] = concat_channels(enc_out_[l], up);
            h = vdec_[l].forward(concat_[l], training_);
        }
        return head_.forward(h);
    }

    void backward_vanilla(const Tensor<T>& dlogits) {
        const int D = spec_.depth;
        Tensor<T> d = head_.backward(dlogits);
        std::vector<Tensor<T>> d_enc(D);
        for (int l = 0; l <= D - 2; ++l) {
            Tensor<T> dcat = vdec_[l].backward(d);
            Tensor<T> dup;
            split_channels(dcat, enc_out_[l].dim(1), d_enc[l], dup);
            d = upsamples_[l].backward(vups_[l].backward(dup));
        }
        // d now carries the gradient at the bottleneck encoder output
        for (int l = D - 1; l >= 0; --l) {
            if (l <= D - 2 && !d_enc[l].empty())
                kern::add_inplace(d.data(), d_enc[l].data(), static_cast<std::int64_t>(d.numel()));
            d = venc_[l].backward(d);
            if (l > 0) d = pools_[l].backward(d);
        }
    }

    static Tensor<T> concat_channels(const Tensor<T>& a, const Tensor<T>& b) {
        const std::size_t n = a.dim(0), ca = a.dim(1), cb = b.dim(1), h = a.dim(2), w = a.dim(3);
        Tensor<T> out({n, ca + cb, h, w});
        const std::size_t plane = h * w;
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(a.data() + i * ca * plane, a.data() + (i + 1) * ca * plane,
                      out.data() + i * (ca + cb) * plane);
            std::copy(b.data() + i * cb * plane, b.data() + (i + 1) * cb * plane,
                      out.data() + (i * (ca + cb) + ca) * plane);
        }
        return out;
    }

    static void split_channels(const Tensor<T>& cat, std::size_t ca, Tensor<T>& a, Tensor<T>& b) {
        const std::size_t n = cat.dim(0), c = cat.dim(1), h = cat.dim(2), w = cat.dim(3);
        const std::size_t cb = c - ca, plane = h * w;
        a = Tensor<T>({n, ca, h, w});
        b = Tensor<T>({n, cb, h, w});
        for (std::size_t i = 0; i < n; ++i) {
            std::copy(cat.data() + i * c * plane, cat.data() + (i * c + ca) * plane,
                      a.data() + i * ca * plane);
            std::copy(cat.data() + (i * c + ca) * plane, cat.data() + (i + 1) * c * plane,
                      b.data() + i * cb * plane);
        }
    }
};

} // namespace segda::nn
