#include "segda/train.hpp"

namespace segda::train {

TrainConfig paper_source_config() {
    TrainConfig c;
    c.phase = Phase::source;
    c.epochs = 100;
    c.iterations_per_epoch = 100;
    c.batch_size = 32;
    c.lr_initial = 1e-2;
    c.lr_reduced = 1e-3;
    c.lr_drop_epoch = 80;
    c.momentum = 0.9;
    c.crop_h = c.crop_w = 256;
    return c;
}

TrainConfig paper_finetune_config() {
    TrainConfig c = paper_source_config();
    c.phase = Phase::finetune;
    c.epochs = 20;
    c.lr_initial = 1e-3;
    c.lr_reduced = 1e-4;
    c.lr_drop_epoch = 15;
    return c;
}

TrainConfig desk_source_config() {
    TrainConfig c;
    c.phase = Phase::source;
    c.epochs = 10;
    c.iterations_per_epoch = 20;
    c.batch_size = 4;
    c.lr_initial = 1e-2;
    c.lr_reduced = 1e-3;
    c.lr_drop_epoch = 8;  // 80% of epochs, as in the full-scale schedule
    c.momentum = 0.9;
    c.crop_h = c.crop_w = 64;
    return c;
}

TrainConfig desk_finetune_config() {
    TrainConfig c = desk_source_config();
    c.phase = Phase::finetune;
    c.epochs = 4;
    c.iterations_per_epoch = 8;
    c.lr_initial = 1e-3;
    c.lr_reduced = 1e-4;
    c.lr_drop_epoch = 3;  // 75% of epochs
    return c;
}

Slice2D apply_dihedral(const Slice2D& s, int element) {
    if (element < 0 || element >= 8)
        throw std::invalid_argument("apply_dihedral: element must lie in [0, 8)");
    const int rot = element & 3;
    const bool flip = element >= 4;
    if (rot != 0 && s.h() != s.w())
        throw std::invalid_argument("apply_dihedral: 90-degree rotations need a square slice");

    Slice2D cur = s;
    if (flip) {
        // horizontal flip: reverse columns
        Slice2D f = cur;
        for (std::size_t i = 0; i < cur.h(); ++i)
            for (std::size_t j = 0; j < cur.w(); ++j) f.at(i, j) = cur.at(i, cur.w() - 1 - j);
        cur = std::move(f);
    }
    for (int r = 0; r < rot; ++r) {
        // rotate 90 degrees counterclockwise: (i, j) <- (j, w-1-i)
        Slice2D t = cur;
        const std::size_t n = cur.h();
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) t.at(i, j) = cur.at(j, n - 1 - i);
        cur = std::move(t);
    }
    return cur;
}

SlicePair crop_pair(const SlicePair& p, std::size_t h, std::size_t w, Rng& rng) {
    if (!p.image.data.same_shape(p.mask.data))
        throw std::invalid_argument("crop_pair: image/mask shape mismatch");
    const Slice2D img = pad_to(p.image, h, w);
    const Slice2D msk = pad_to(p.mask, h, w);
    const CropOffset o = choose_crop_offset(img.h(), img.w(), h, w, rng);
    return {crop_at(img, o, h, w), crop_at(msk, o, h, w)};
}

Batch<float> sample_training_batch(const SlicePool& pool, const TrainConfig& c, Rng& rng) {
    if (pool.empty()) throw std::invalid_argument("sample_training_batch: empty slice pool");
    const auto n = static_cast<std::size_t>(c.batch_size);
    Batch<float> b;
    b.images = Tensor<float>({n, 1, c.crop_h, c.crop_w});
    b.targets = Tensor<float>({n, 1, c.crop_h, c.crop_w});
    const std::size_t plane = c.crop_h * c.crop_w;
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t idx = static_cast<std::size_t>(rng.next_below(pool.size()));
        SlicePair cp = crop_pair(pool[idx], c.crop_h, c.crop_w, rng);
        if (c.augment) {
            const int e = static_cast<int>(rng.next_below(8));
            cp.image = apply_dihedral(cp.image, e);
            cp.mask = apply_dihedral(cp.mask, e);
        }
        std::copy(cp.image.data.data(), cp.image.data.data() + plane, b.images.data() + i * plane);
        std::copy(cp.mask.data.data(), cp.mask.data.data() + plane, b.targets.data() + i * plane);
    }
    return b;
}

TrainHistory train(nn::Unet2D<float>& model, const SlicePool& pool, const TrainConfig& config) {
    config.validate();
    if (pool.empty()) throw std::invalid_argument("train: dataset has no slices");

    model.set_training(true);
    model.sync_bn_freeze();
    Rng rng(config.seed);
    TrainHistory history;
    Tensor<float> dlogits;

    for (int epoch = 0; epoch < config.epochs; ++epoch) {
        const double lr = lr_schedule(config, epoch);
        const auto t0 = std::chrono::steady_clock::now();
        double loss_sum = 0.0;
        for (int it = 0; it < config.iterations_per_epoch; ++it) {
            Batch<float> batch = sample_training_batch(pool, config, rng);
            const Tensor<float> logits = model.forward(batch.images);
            const double loss = bce_with_logits(logits, batch.targets, dlogits);
            if (!std::isfinite(loss))
                throw TrainingDivergence("non-finite loss at epoch " + std::to_string(epoch) +
                                         " iteration " + std::to_string(it));
            loss_sum += loss;
            model.zero_grad();
            model.backward(dlogits);
            model.for_each_param([&](nn::Param<float>& p) {
                if (p.trainable) nesterov_sgd_step(p, lr, config.momentum);
            });
        }
        const auto t1 = std::chrono::steady_clock::now();
        history.epochs.push_back({epoch, lr, loss_sum / config.iterations_per_epoch,
                                  std::chrono::duration<double>(t1 - t0).count()});
    }
    model.set_training(false);
    return history;
}

} // namespace segda::train
