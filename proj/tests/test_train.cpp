#include <doctest.h>

#include <cmath>

#include "segda/model.hpp"
#include "segda/train.hpp"

using namespace segda;
using train::TrainConfig;

namespace {

Slice2D make_slice(std::size_t h, std::size_t w, float fill = 0.0f) {
    Slice2D s;
    s.data = Tensor<float>({h, w});
    for (std::size_t i = 0; i < s.data.numel(); ++i) s.data[i] = fill;
    return s;
}

// a bright centered square on dark background, with the matching mask
train::SlicePair blob_pair(std::size_t n) {
    train::SlicePair p{make_slice(n, n, 0.1f), make_slice(n, n, 0.0f)};
    for (std::size_t i = n / 4; i < 3 * n / 4; ++i)
        for (std::size_t j = n / 4; j < 3 * n / 4; ++j) {
            p.image.at(i, j) = 0.9f;
            p.mask.at(i, j) = 1.0f;
        }
    return p;
}

} // namespace

TEST_CASE("learning-rate schedules return the published step values") {
    const TrainConfig src = train::paper_source_config();
    CHECK(train::lr_schedule(src, 0) == 1e-2);
    CHECK(train::lr_schedule(src, 79) == 1e-2);
    CHECK(train::lr_schedule(src, 80) == 1e-3);
    CHECK(train::lr_schedule(src, 99) == 1e-3);

    const TrainConfig ft = train::paper_finetune_config();
    CHECK(train::lr_schedule(ft, 0) == 1e-3);
    CHECK(train::lr_schedule(ft, 14) == 1e-3);
    CHECK(train::lr_schedule(ft, 15) == 1e-4);
    CHECK(train::lr_schedule(ft, 19) == 1e-4);

    CHECK_THROWS_AS(train::lr_schedule(src, -1), std::out_of_range);
    CHECK_THROWS_AS(train::lr_schedule(src, 100), std::out_of_range);
}

TEST_CASE("desk profile preserves the schedule shape") {
    const TrainConfig src = train::desk_source_config();
    CHECK(src.lr_drop_epoch * 5 == src.epochs * 4);  // drop at 80%
    CHECK(train::lr_schedule(src, 0) == 1e-2);
    CHECK(train::lr_schedule(src, src.epochs - 1) == 1e-3);
    const TrainConfig ft = train::desk_finetune_config();
    CHECK(ft.lr_drop_epoch * 4 == ft.epochs * 3);  // drop at 75%
}

TEST_CASE("config validation rejects out-of-range fields") {
    TrainConfig c = train::desk_source_config();
    c.epochs = 0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = train::desk_source_config();
    c.momentum = 1.0;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
    c = train::desk_source_config();
    c.lr_drop_epoch = c.epochs + 1;
    CHECK_THROWS_AS(c.validate(), std::invalid_argument);
}

TEST_CASE("Nesterov update follows the documented recurrence") {
    nn::Param<double> p;
    p.name = "w";
    p.value = Tensor<double>({1});
    p.grad = Tensor<double>({1});
    p.velocity = Tensor<double>({1});
    p.value[0] = 1.0;
    p.grad[0] = 1.0;
    p.velocity[0] = 0.0;

    train::nesterov_sgd_step(p, 0.1, 0.9);
    CHECK(p.value[0] == doctest::Approx(0.81).epsilon(1e-15));
    CHECK(p.velocity[0] == doctest::Approx(-0.1).epsilon(1e-15));

    p.grad[0] = 1.0;
    train::nesterov_sgd_step(p, 0.1, 0.9);
    CHECK(p.value[0] == doctest::Approx(0.539).epsilon(1e-15));

    p.grad[0] = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(train::nesterov_sgd_step(p, 0.1, 0.9), train::TrainingDivergence);
}

TEST_CASE("dihedral transforms: identity, closure and content") {
    Slice2D s = make_slice(4, 4);
    for (int i = 0; i < 16; ++i) s.data[i] = static_cast<float>(i);

    const Slice2D id = train::apply_dihedral(s, 0);
    for (int i = 0; i < 16; ++i) CHECK(id.data[i] == s.data[i]);

    // rotating four times by 90 degrees is the identity
    Slice2D r = s;
    for (int t = 0; t < 4; ++t) r = train::apply_dihedral(r, 1);
    for (int i = 0; i < 16; ++i) CHECK(r.data[i] == s.data[i]);

    // flips and rotations preserve the multiset of values
    for (int e = 0; e < 8; ++e) {
        const Slice2D t = train::apply_dihedral(s, e);
        double sum = 0.0;
        for (int i = 0; i < 16; ++i) sum += t.data[i];
        CHECK(sum == 120.0);
    }

    // a 90-degree rotation moves the corner as expected (counterclockwise)
    const Slice2D rot = train::apply_dihedral(s, 1);
    CHECK(rot.at(3, 0) == s.at(0, 0));

    CHECK_THROWS_AS(train::apply_dihedral(s, 8), std::invalid_argument);
    const Slice2D rect = make_slice(2, 4);
    CHECK_THROWS_AS(train::apply_dihedral(rect, 1), std::invalid_argument);
}

TEST_CASE("augmentation draws are uniform over the 8 elements") {
    Slice2D probe = make_slice(2, 2);
    probe.data[0] = 1.0f;  // distinguishable under all 8 transforms? corners only
    Rng rng(99);
    // count the dihedral elements through the rng stream directly
    std::size_t counts[8] = {0};
    const std::size_t draws = 8000;
    for (std::size_t t = 0; t < draws; ++t) counts[rng.next_below(8)]++;
    // 3 sigma for binomial(8000, 1/8): mean 1000, sd ~29.6
    for (int e = 0; e < 8; ++e) {
        CAPTURE(e);
        CHECK(std::abs(static_cast<double>(counts[e]) - 1000.0) < 3.0 * 29.6);
    }
}

TEST_CASE("crop_pair crops image and mask at one shared offset") {
    train::SlicePair p = blob_pair(16);
    Rng rng(3);
    for (int t = 0; t < 10; ++t) {
        const train::SlicePair c = train::crop_pair(p, 8, 8, rng);
        REQUIRE(c.image.h() == 8);
        REQUIRE(c.mask.h() == 8);
        for (std::size_t i = 0; i < 8; ++i)
            for (std::size_t j = 0; j < 8; ++j) {
                const bool fg = c.image.at(i, j) > 0.5f;
                CHECK(fg == (c.mask.at(i, j) == 1.0f));
            }
    }
}

TEST_CASE("sample_training_batch has the right shapes and replays under a seed") {
    train::SlicePool pool = {blob_pair(16), blob_pair(16), blob_pair(16)};
    TrainConfig c = train::desk_source_config();
    c.batch_size = 4;
    c.crop_h = c.crop_w = 8;

    Rng r1(5), r2(5);
    const auto b1 = train::sample_training_batch(pool, c, r1);
    const auto b2 = train::sample_training_batch(pool, c, r2);
    REQUIRE(b1.images.shape() == std::vector<std::size_t>{4, 1, 8, 8});
    REQUIRE(b1.targets.shape() == std::vector<std::size_t>{4, 1, 8, 8});
    for (std::size_t i = 0; i < b1.images.numel(); ++i) {
        CHECK(b1.images[i] == b2.images[i]);
        CHECK(b1.targets[i] == b2.targets[i]);
    }
    for (std::size_t i = 0; i < b1.targets.numel(); ++i)
        CHECK((b1.targets[i] == 0.0f || b1.targets[i] == 1.0f));
}

TEST_CASE("augmented finetune sampling still pairs image and mask") {
    train::SlicePool pool = {blob_pair(16)};
    TrainConfig c = train::desk_finetune_config();
    c.batch_size = 8;
    c.crop_h = c.crop_w = 8;
    c.augment = true;
    Rng rng(9);
    const auto b = train::sample_training_batch(pool, c, rng);
    for (std::size_t n = 0; n < 8; ++n)
        for (std::size_t i = 0; i < 64; ++i) {
            const float img = b.images[n * 64 + i];
            const float tgt = b.targets[n * 64 + i];
            CHECK((img > 0.5f) == (tgt == 1.0f));
        }
}

TEST_CASE("a tiny model fits one blob slice") {
    nn::ModelSpec spec;
    spec.depth = 2;
    spec.base_filters = 4;
    auto m = nn::Unet2D<float>::build(spec, Rng(1));

    train::SlicePool pool = {blob_pair(16)};
    TrainConfig c;
    c.phase = train::Phase::source;
    c.epochs = 6;
    c.iterations_per_epoch = 10;
    c.batch_size = 4;
    c.lr_initial = 5e-2;
    c.lr_reduced = 1e-2;
    c.lr_drop_epoch = 5;
    c.crop_h = c.crop_w = 16;
    c.seed = 2;

    const train::TrainHistory h = train::train(m, pool, c);
    REQUIRE(h.epochs.size() == 6);
    CHECK(h.epochs.front().lr == 5e-2);
    CHECK(h.epochs.back().lr == 1e-2);
    CHECK(h.epochs.back().mean_loss < h.epochs.front().mean_loss);
    CHECK(h.epochs.back().mean_loss < 0.2);

    // training is reproducible under the same seed
    auto m2 = nn::Unet2D<float>::build(spec, Rng(1));
    const train::TrainHistory h2 = train::train(m2, pool, c);
    CHECK(h2.epochs.back().mean_loss == h.epochs.back().mean_loss);
}
