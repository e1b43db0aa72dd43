#pragma once

// Training loop, schedules, batch sampling and augmentation.
//
// RNG discipline: train() owns a single Rng seeded from the config; per
// sample it draws, in this order, the pool index, the crop offset
// (row, col) and, when augmentation is on, the dihedral element. This
// fixes the stream layout, so a (seed, config, dataset) triple always
// replays the same batches.

#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>
#include <vector>

#include "segda/model.hpp"
#include "segda/volume.hpp"

namespace segda::train {

enum class Phase { source, finetune };
enum class LossKind { bce };  // the training loss; bce on the foreground logit

struct TrainConfig {
    Phase phase = Phase::source;
    int epochs = 100;
    int iterations_per_epoch = 100;
    int batch_size = 32;
    double lr_initial = 1e-2;
    double lr_reduced = 1e-3;
    int lr_drop_epoch = 80;
    double momentum = 0.9;
    std::size_t crop_h = 256, crop_w = 256;
    bool augment = false;
    std::uint64_t seed = 0;
    LossKind loss = LossKind::bce;

    void validate() const {
        if (epochs <= 0) throw std::invalid_argument("TrainConfig: epochs must be > 0");
        if (iterations_per_epoch <= 0)
            throw std::invalid_argument("TrainConfig: iterations_per_epoch must be > 0");
        if (batch_size <= 0) throw std::invalid_argument("TrainConfig: batch_size must be > 0");
        if (lr_drop_epoch < 0 || lr_drop_epoch > epochs)
            throw std::invalid_argument("TrainConfig: lr_drop_epoch must lie in [0, epochs]");
        if (!(momentum >= 0.0 && momentum < 1.0))
            throw std::invalid_argument("TrainConfig: momentum must lie in [0, 1)");
        if (!(lr_initial > 0.0) || !(lr_reduced > 0.0))
            throw std::invalid_argument("TrainConfig: learning rates must be > 0");
        if (crop_h < 1 || crop_w < 1)
            throw std::invalid_argument("TrainConfig: crop size components must be >= 1");
    }
};

// Hyperparameters used for full-scale runs: 100 source epochs at lr 1e-2
// dropping to 1e-3 at epoch 80; 20 fine-tune epochs at 1e-3 dropping to
// 1e-4 at epoch 15; 100 iterations/epoch, batch 32, 256x256 crops,
// Nesterov momentum 0.9.
TrainConfig paper_source_config();
TrainConfig paper_finetune_config();

// Scaled-down profile for CPU runs; schedule shape preserved (drop at 80%
// of source epochs, 75% of fine-tune epochs).
TrainConfig desk_source_config();
TrainConfig desk_finetune_config();

inline double lr_schedule(const TrainConfig& c, int epoch) {
    if (epoch < 0 || epoch >= c.epochs) throw std::out_of_range("lr_schedule: epoch out of range");
    return epoch < c.lr_drop_epoch ? c.lr_initial : c.lr_reduced;
}

struct EpochStats {
    int epoch = 0;
    double lr = 0.0;
    double mean_loss = 0.0;
    double seconds = 0.0;
};

struct TrainHistory {
    std::vector<EpochStats> epochs;
};

struct TrainingDivergence : std::runtime_error {
    using std::runtime_error::runtime_error;
};

// Nesterov step, fixed recurrence:
//   v' = momentum * v - lr * g
//   p' = p + momentum * v' - lr * g
template <typename T>
void nesterov_sgd_step(nn::Param<T>& p, double lr, double momentum) {
    const std::size_t n = p.value.numel();
    for (std::size_t i = 0; i < n; ++i) {
        const T g = p.grad[i];
        if (!std::isfinite(static_cast<double>(g)))
            throw TrainingDivergence("non-finite gradient in " + p.name);
        const T v = static_cast<T>(momentum) * p.velocity[i] - static_cast<T>(lr) * g;
        p.velocity[i] = v;
        p.value[i] += static_cast<T>(momentum) * v - static_cast<T>(lr) * g;
    }
}

// --- slice pool and batches -------------------------------------------------

struct SlicePair {
    Slice2D image;
    Slice2D mask;  // {0,1} values stored as float
};

using SlicePool = std::vector<SlicePair>;

template <typename T>
struct Batch {
    Tensor<T> images;  // (N, 1, H, W)
    Tensor<T> targets; // (N, 1, H, W), {0,1}
};

// One element of the dihedral group of order 8: e in [0,8);
// e < 4: rotate by 90*e degrees; e >= 4: horizontal flip then rotate.
Slice2D apply_dihedral(const Slice2D& s, int element);

inline Slice2D augment(const Slice2D& s, Rng& rng) {
    return apply_dihedral(s, static_cast<int>(rng.next_below(8)));
}

// Crops image and mask at one shared offset; pads both first if needed.
SlicePair crop_pair(const SlicePair& p, std::size_t h, std::size_t w, Rng& rng);

Batch<float> sample_training_batch(const SlicePool& pool, const TrainConfig& c, Rng& rng);

// --- loss -------------------------------------------------------------------

// Mean binary cross-entropy with logits over all batch pixels; fills
// dlogits with the gradient of the mean loss.
template <typename T>
double bce_with_logits(const Tensor<T>& logits, const Tensor<T>& targets, Tensor<T>& dlogits) {
    if (!logits.same_shape(targets))
        throw std::invalid_argument("bce_with_logits: shape mismatch");
    dlogits = Tensor<T>(logits.shape());
    const std::size_t n = logits.numel();
    double total = 0.0;
    const double inv_n = 1.0 / static_cast<double>(n);
    for (std::size_t i = 0; i < n; ++i) {
        const double z = static_cast<double>(logits[i]);
        const double y = static_cast<double>(targets[i]);
        total += std::max(z, 0.0) - z * y + std::log1p(std::exp(-std::abs(z)));
        const double sig = 1.0 / (1.0 + std::exp(-z));
        dlogits[i] = static_cast<T>((sig - y) * inv_n);
    }
    return total * inv_n;
}

// --- training ---------------------------------------------------------------

TrainHistory train(nn::Unet2D<float>& model, const SlicePool& pool, const TrainConfig& config);

} // namespace segda::train
