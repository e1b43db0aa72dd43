#pragma once

// Trainable layer primitives. Each layer caches what its backward pass
// needs during forward; a layer instance appears exactly once in a model
// graph and is used once per step, so backward overwrites gradients.

#include <cstdint>
#include <string>

#include "segda/kernels.hpp"
#include "segda/rng.hpp"
#include "segda/tensor.hpp"

namespace segda::nn {

template <typename T>
struct Param {
    std::string name;
    Tensor<T> value;
    Tensor<T> grad;
    Tensor<T> velocity;
    bool trainable = true;

    void init_shape(std::vector<std::size_t> shape) {
        value = Tensor<T>(shape);
        grad = Tensor<T>(shape);
        velocity = Tensor<T>(std::move(shape));
    }
};

template <typename T>
struct Conv2D {
    std::int64_t ci = 0, co = 0, k = 3, stride = 1, pad = 1;
    bool has_bias = false;
    Param<T> w;  // (co, ci, k, k)
    Param<T> b;  // (co)

    Tensor<T> x_cache, y, dx;

    void init(const std::string& name, std::int64_t ci_, std::int64_t co_, std::int64_t k_,
              std::int64_t stride_, bool bias, Rng& rng) {
        ci = ci_; co = co_; k = k_; stride = stride_;
        pad = (k - 1) / 2;
        has_bias = bias;
        w.name = name + ".w";
        w.init_shape({static_cast<std::size_t>(co), static_cast<std::size_t>(ci),
                      static_cast<std::size_t>(k), static_cast<std::size_t>(k)});
        const double std_dev = std::sqrt(2.0 / static_cast<double>(ci * k * k));  // Kaiming fan-in
        for (auto& v : w.value.vec()) v = static_cast<T>(rng.next_normal() * std_dev);
        if (has_bias) {
            b.name = name + ".b";
            b.init_shape({static_cast<std::size_t>(co)});
        }
    }

    kern::ConvShape shape_for(const Tensor<T>& x) const {
        return kern::ConvShape{static_cast<std::int64_t>(x.dim(0)), ci,
                               static_cast<std::int64_t>(x.dim(2)),
                               static_cast<std::int64_t>(x.dim(3)),
                               co, k, k, stride, pad};
    }

    const Tensor<T>& forward(const Tensor<T>& x) {
        x_cache = x;
        const auto s = shape_for(x);
        y = Tensor<T>({x.dim(0), static_cast<std::size_t>(co),
                       static_cast<std::size_t>(s.ho()), static_cast<std::size_t>(s.wo())});
        kern::conv2d_forward(x, w.value, has_bias ? &b.value : nullptr, y, s);
        return y;
    }

    const Tensor<T>& backward(const Tensor<T>& dy) {
        const auto s = shape_for(x_cache);
        dx = Tensor<T>(x_cache.shape());
        kern::conv2d_backward_input(dy, w.value, dx, s);
        kern::conv2d_backward_params(x_cache, dy, w.grad, has_bias ? &b.grad : nullptr, s);
        return dx;
    }
};

template <typename T>
struct BatchNorm2D {
    std::int64_t c = 0;
    T eps = T(1e-5);
    T momentum = T(0.1);
    Param<T> gamma, beta;
    Tensor<T> running_mean, running_var;  // buffers, checkpointed, never trained
    std::string name;

    // When the containing layer is frozen, the layer runs on its running
    // statistics even during training and the stats are not updated.
    bool frozen_stats = false;

    Tensor<T> x_cache, y, dx, save_mean, save_invstd;
    bool used_batch_stats = false;

    void init(const std::string& name_, std::int64_t c_) {
        name = name_;
        c = c_;
        gamma.name = name + ".gamma";
        gamma.init_shape({static_cast<std::size_t>(c)});
        gamma.value.fill(T(1));
        beta.name = name + ".beta";
        beta.init_shape({static_cast<std::size_t>(c)});
        running_mean = Tensor<T>({static_cast<std::size_t>(c)});
        running_var = Tensor<T>({static_cast<std::size_t>(c)}, T(1));
    }

    const Tensor<T>& forward(const Tensor<T>& x, bool training) {
        x_cache = x;
        y = Tensor<T>(x.shape());
        const auto n = static_cast<std::int64_t>(x.dim(0));
        const auto hw = static_cast<std::int64_t>(x.dim(2) * x.dim(3));
        used_batch_stats = training && !frozen_stats;
        if (used_batch_stats) {
            save_mean = Tensor<T>({static_cast<std::size_t>(c)});
            save_invstd = Tensor<T>({static_cast<std::size_t>(c)});
            kern::bn_forward_train(x.data(), y.data(), gamma.value.data(), beta.value.data(),
                                   running_mean.data(), running_var.data(), save_mean.data(),
                                   save_invstd.data(), n, c, hw, eps, momentum);
        } else {
            save_mean = running_mean;
            save_invstd = Tensor<T>({static_cast<std::size_t>(c)});
            for (std::int64_t i = 0; i < c; ++i)
                save_invstd[static_cast<std::size_t>(i)] =
                    T(1) / std::sqrt(running_var[static_cast<std::size_t>(i)] + eps);
            kern::bn_forward_eval(x.data(), y.data(), gamma.value.data(), beta.value.data(),
                                  running_mean.data(), running_var.data(), n, c, hw, eps);
        }
        return y;
    }

    const Tensor<T>& backward(const Tensor<T>& dy) {
        dx = Tensor<T>(x_cache.shape());
        const auto n = static_cast<std::int64_t>(x_cache.dim(0));
        const auto hw = static_cast<std::int64_t>(x_cache.dim(2) * x_cache.dim(3));
        kern::bn_backward(x_cache.data(), dy.data(), dx.data(), gamma.value.data(),
                          save_mean.data(), save_invstd.data(), gamma.grad.data(),
                          beta.grad.data(), n, c, hw, used_batch_stats);
        return dx;
    }
};

template <typename T>
struct ReLU {
    Tensor<T> x_cache, y, dx;

    const Tensor<T>& forward(const Tensor<T>& x) {
        x_cache = x;
        y = Tensor<T>(x.shape());
        kern::relu_forward(x.data(), y.data(), static_cast<std::int64_t>(x.numel()));
        return y;
    }
    const Tensor<T>& backward(const Tensor<T>& dy) {
        dx = Tensor<T>(x_cache.shape());
        kern::relu_backward(x_cache.data(), dy.data(), dx.data(),
                            static_cast<std::int64_t>(x_cache.numel()));
        return dx;
    }
};

template <typename T>
struct MaxPool2 {
    Tensor<T> y, dx;
    Tensor<std::int32_t> argmax;
    std::vector<std::size_t> in_shape;

    const Tensor<T>& forward(const Tensor<T>& x) {
        in_shape = x.shape();
        const std::size_t planes = x.dim(0) * x.dim(1), h = x.dim(2), w = x.dim(3);
        y = Tensor<T>({x.dim(0), x.dim(1), h / 2, w / 2});
        argmax = Tensor<std::int32_t>({planes, h / 2, w / 2});
        kern::maxpool2_forward(x.data(), y.data(), argmax.data(),
                               static_cast<std::int64_t>(planes),
                               static_cast<std::int64_t>(h), static_cast<std::int64_t>(w));
        return y;
    }
    const Tensor<T>& backward(const Tensor<T>& dy) {
        dx = Tensor<T>(in_shape);
        const std::size_t planes = in_shape[0] * in_shape[1];
        kern::maxpool2_backward(dy.data(), argmax.data(), dx.data(),
                                static_cast<std::int64_t>(planes),
                                static_cast<std::int64_t>(in_shape[2]),
                                static_cast<std::int64_t>(in_shape[3]));
        return dx;
    }
};

template <typename T>
struct Upsample2 {
    Tensor<T> y, dx;
    std::vector<std::size_t> in_shape;

    const Tensor<T>& forward(const Tensor<T>& x) {
        in_shape = x.shape();
        y = Tensor<T>({x.dim(0), x.dim(1), x.dim(2) * 2, x.dim(3) * 2});
        kern::upsample2_forward(x.data(), y.data(),
                                static_cast<std::int64_t>(x.dim(0) * x.dim(1)),
                                static_cast<std::int64_t>(x.dim(2)),
                                static_cast<std::int64_t>(x.dim(3)));
        return y;
    }
    const Tensor<T>& backward(const Tensor<T>& dy) {
        dx = Tensor<T>(in_shape);
        kern::upsample2_backward(dy.data(), dx.data(),
                                 static_cast<std::int64_t>(in_shape[0] * in_shape[1]),
                                 static_cast<std::int64_t>(in_shape[2]),
                                 static_cast<std::int64_t>(in_shape[3]));
        return dx;
    }
};

} // namespace segda::nn
