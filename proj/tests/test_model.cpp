#include <doctest.h>

#include <filesystem>
#include <set>

#include "segda/model.hpp"
#include "segda/model_io.hpp"

using namespace segda;
using nn::ModelSpec;
using nn::Unet2D;
using nn::Variant;

namespace {

Tensor<float> random_input(std::size_t n, std::size_t h, std::size_t w, std::uint64_t seed) {
    Tensor<float> x({n, 1, h, w});
    Rng rng(seed);
    for (std::size_t i = 0; i < x.numel(); ++i) x[i] = static_cast<float>(rng.next_unit());
    return x;
}

ModelSpec desk_spec() {
    ModelSpec s;
    s.depth = 3;
    s.base_filters = 8;
    return s;
}

} // namespace

TEST_CASE("first and last layer groups hold equal parameter counts") {
    for (int base : {4, 8, 16}) {
        for (int depth : {2, 3, 4}) {
            CAPTURE(base);
            CAPTURE(depth);
            ModelSpec s;
            s.depth = depth;
            s.base_filters = base;
            auto m = Unet2D<float>::build(s, Rng(1));
            CHECK(m.parameter_count("first") == m.parameter_count("last"));
        }
    }
}

TEST_CASE("group parameter counts match hand arithmetic at depth 3, base 8") {
    auto m = Unet2D<float>::build(desk_spec(), Rng(1));
    // first: stem 1*8*9 + two 8*8*9 convs + two batchnorms (2*8 each)
    const std::size_t expected = 72 + 576 + 576 + 16 + 16;
    CHECK(m.parameter_count("first") == expected);
    CHECK(m.parameter_count("last") == expected);
    CHECK(m.parameter_count("all") > 2 * expected);
}

TEST_CASE("layer groups partition as documented") {
    auto m = Unet2D<float>::build(desk_spec(), Rng(1));
    auto groups = m.layer_groups();
    REQUIRE(groups.count("first"));
    REQUIRE(groups.count("last"));
    REQUIRE(groups.count("all"));

    const auto& first = groups["first"].parameter_ids;
    const auto& last = groups["last"].parameter_ids;
    const std::set<std::string> all(groups["all"].parameter_ids.begin(),
                                    groups["all"].parameter_ids.end());

    auto has = [](const std::vector<std::string>& v, const std::string& needle) {
        for (const auto& s : v)
            if (s.find(needle) != std::string::npos) return true;
        return false;
    };
    CHECK(has(first, "stem"));
    CHECK(has(last, "head"));
    CHECK(!has(first, "skip"));
    CHECK(!has(last, "skip"));
    for (const auto& id : first) CHECK(all.count(id));
    for (const auto& id : last) CHECK(all.count(id));
    // every parameter belongs to "all"
    CHECK(all.size() == m.params().size());
}

TEST_CASE("identical seeds build identical models; different seeds differ") {
    auto a = Unet2D<float>::build(desk_spec(), Rng(7));
    auto b = Unet2D<float>::build(desk_spec(), Rng(7));
    auto c = Unet2D<float>::build(desk_spec(), Rng(8));
    const auto pa = a.params(), pb = b.params(), pc = c.params();
    REQUIRE(pa.size() == pb.size());
    bool all_equal = true, any_diff_c = false;
    for (std::size_t i = 0; i < pa.size(); ++i) {
        for (std::size_t j = 0; j < pa[i]->value.numel(); ++j) {
            if (pa[i]->value[j] != pb[i]->value[j]) all_equal = false;
            if (pa[i]->value[j] != pc[i]->value[j]) any_diff_c = true;
        }
    }
    CHECK(all_equal);
    CHECK(any_diff_c);
}

TEST_CASE("forward is deterministic and shape-checked") {
    auto m = Unet2D<float>::build(desk_spec(), Rng(3));
    const auto x = random_input(2, 16, 16, 5);
    const Tensor<float> y1 = m.forward(x);
    const Tensor<float> y2 = m.forward(x);
    REQUIRE(y1.shape() == std::vector<std::size_t>{2, 1, 16, 16});
    for (std::size_t i = 0; i < y1.numel(); ++i) CHECK(y1[i] == y2[i]);

    // spatial dims must divide 2^(depth-1) = 4
    CHECK_THROWS_AS(m.forward(random_input(1, 18, 16, 1)), std::invalid_argument);
    Tensor<float> bad({2, 16, 16});
    CHECK_THROWS_AS(m.forward(bad), std::invalid_argument);
}

TEST_CASE("zero weights produce zero logits") {
    auto m = Unet2D<float>::build(desk_spec(), Rng(3));
    for (auto* p : m.params()) p->value.zero();
    const Tensor<float> y = m.forward(random_input(1, 8, 8, 9));
    for (std::size_t i = 0; i < y.numel(); ++i) CHECK(y[i] == 0.0f);
}

TEST_CASE("vanilla variant forward and backward run with concat merges") {
    ModelSpec s = desk_spec();
    s.variant = Variant::vanilla_unet;
    auto m = Unet2D<float>::build(s, Rng(4));
    const auto x = random_input(2, 16, 16, 6);
    const Tensor<float> y = m.forward(x);
    REQUIRE(y.shape() == std::vector<std::size_t>{2, 1, 16, 16});

    Tensor<float> dy(y.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dy[i] = 1.0f / static_cast<float>(dy.numel());
    m.zero_grad();
    m.backward(dy);
    bool any_nonzero = false;
    for (auto* p : m.params())
        for (std::size_t i = 0; i < p->grad.numel(); ++i)
            if (p->grad[i] != 0.0f) any_nonzero = true;
    CHECK(any_nonzero);
}

TEST_CASE("backward fills gradients for every trainable parameter group") {
    auto m = Unet2D<float>::build(desk_spec(), Rng(5));
    const auto x = random_input(2, 8, 8, 10);
    const Tensor<float> y = m.forward(x);
    Tensor<float> dy(y.shape());
    for (std::size_t i = 0; i < dy.numel(); ++i) dy[i] = 1.0f / static_cast<float>(dy.numel());
    m.zero_grad();
    m.backward(dy);

    auto groups = m.layer_groups();
    for (const char* gname : {"first", "last"}) {
        bool any = false;
        for (const auto& id : groups[gname].parameter_ids) {
            const auto* p = m.find_param(id);
            REQUIRE(p != nullptr);
            for (std::size_t i = 0; i < p->grad.numel(); ++i)
                if (p->grad[i] != 0.0f) any = true;
        }
        CAPTURE(gname);
        CHECK(any);
    }
}

TEST_CASE("checkpoints round-trip bit-exactly") {
    namespace fs = std::filesystem;
    const fs::path dir = fs::temp_directory_path() / "segda_ckpt_test";
    fs::create_directories(dir);
    const std::string stem = (dir / "model").string();

    auto m = Unet2D<float>::build(desk_spec(), Rng(11));
    // make running stats non-trivial so buffers are exercised
    const auto x = random_input(2, 16, 16, 12);
    m.set_training(true);
    m.forward(x);
    nn::save_checkpoint(m, stem);
    auto r = nn::load_checkpoint<float>(stem);

    const auto pm = m.params(), pr = r.params();
    REQUIRE(pm.size() == pr.size());
    for (std::size_t i = 0; i < pm.size(); ++i) {
        REQUIRE(pm[i]->name == pr[i]->name);
        for (std::size_t j = 0; j < pm[i]->value.numel(); ++j)
            CHECK(pm[i]->value[j] == pr[i]->value[j]);
    }
    const auto bm = m.batchnorms(), br = r.batchnorms();
    REQUIRE(bm.size() == br.size());
    for (std::size_t i = 0; i < bm.size(); ++i)
        for (std::size_t j = 0; j < bm[i]->running_mean.numel(); ++j) {
            CHECK(bm[i]->running_mean[j] == br[i]->running_mean[j]);
            CHECK(bm[i]->running_var[j] == br[i]->running_var[j]);
        }

    // reload and the forward pass agrees bit for bit in eval mode
    m.set_training(false);
    r.set_training(false);
    const Tensor<float> ym = m.forward(x), yr = r.forward(x);
    for (std::size_t i = 0; i < ym.numel(); ++i) CHECK(ym[i] == yr[i]);

    fs::remove_all(dir);
}
