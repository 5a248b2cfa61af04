#include <doctest.h>

#include "morphnas/gradcheck.hpp"
#include "morphnas/mten.hpp"
#include "morphnas/ops.hpp"
#include "test_helpers.hpp"

#include <cstdio>
#include <cstring>

using namespace morphnas;

TEST_CASE("conv2d: all-ones 3x3 sums to 9") {
    auto x = Tensor<float>::from_data({1, 1, 3, 3}, std::vector<float>(9, 1.f));
    auto w = Tensor<float>::from_data({1, 1, 3, 3}, std::vector<float>(9, 1.f));
    auto y = conv2d<float>(x, w, nullptr, 1, 0);
    REQUIRE(y->shape == Shape{1, 1, 1, 1});
    CHECK(y->data[0] == doctest::Approx(9.f));
}

TEST_CASE("conv2d: 1x1 identity filter passes the input through") {
    std::mt19937 rng(11);
    auto x = testutil::random_var<float>({1, 1, 5, 7}, rng);
    auto w = Tensor<float>::from_data({1, 1, 1, 1}, {1.f});
    auto y = conv2d<float>(x, w, nullptr, 1, 0);
    CHECK(y->data == x->data);
}

TEST_CASE("conv2d: matches the nested-loop oracle on 100 random cases") {
    std::mt19937 rng(23);
    std::uniform_int_distribution<int> dim(3, 8), chan(1, 3), ker(1, 3), st(1, 2), pd(0, 1);
    for (int t = 0; t < 100; ++t) {
        const int h = dim(rng), w = dim(rng), ci = chan(rng), co = chan(rng);
        int k = ker(rng);
        k = std::min(k, std::min(h, w));
        const int stride = st(rng), pad = pd(rng);
        auto x = testutil::random_var<float>({1, ci, h, w}, rng);
        auto wt = testutil::random_var<float>({co, ci, k, k}, rng);
        auto b = testutil::random_var<float>({co}, rng);
        auto y = conv2d<float>(x, wt, b, stride, pad);
        const auto expect =
            testutil::conv_oracle<float>(x->data, 1, ci, h, w, wt->data, co, k, k, b->data, stride, pad);
        REQUIRE(y->data.size() == expect.size());
        for (std::size_t i = 0; i < expect.size(); ++i)
            CHECK(y->data[i] == doctest::Approx(expect[i]).epsilon(1e-6));
    }
}

TEST_CASE("conv2d: channel mismatch is a descriptive shape error") {
    auto x = Tensor<float>::create({1, 2, 4, 4});
    auto w = Tensor<float>::create({1, 3, 3, 3});
    CHECK_THROWS_AS(conv2d<float>(x, w, nullptr, 1, 0), std::invalid_argument);
    auto w2 = Tensor<float>::create({1, 2, 5, 5});
    CHECK_THROWS_AS(conv2d<float>(x, w2, nullptr, 1, 0), std::invalid_argument);  // kernel > input
}

TEST_CASE("pool2d: 2x2 extremes") {
    auto x = Tensor<float>::from_data({1, 2, 2}, {1, 2, 3, 4});
    CHECK(pool2d<float>(x, PoolMode::Max, 2, 2)->data[0] == 4.f);
    CHECK(pool2d<float>(x, PoolMode::Min, 2, 2)->data[0] == 1.f);
    CHECK(pool2d<float>(x, PoolMode::Avg, 2, 2)->data[0] == doctest::Approx(2.5f));
}

TEST_CASE("pool2d: sliding max matches window-scan oracle") {
    std::mt19937 rng(5);
    auto x = testutil::random_var<float>({1, 8, 8}, rng);
    auto y = pool2d<float>(x, PoolMode::Max, 3, 1);
    REQUIRE(y->shape == Shape{1, 6, 6});
    for (int oy = 0; oy < 6; ++oy)
        for (int ox = 0; ox < 6; ++ox) {
            float best = -1e30f;
            for (int u = 0; u < 3; ++u)
                for (int v = 0; v < 3; ++v) best = std::max(best, x->data[(oy + u) * 8 + ox + v]);
            CHECK(y->data[oy * 6 + ox] == best);
        }
}

TEST_CASE("pool2d: window larger than input is rejected") {
    auto x = Tensor<float>::create({1, 2, 2});
    CHECK_THROWS_AS(pool2d<float>(x, PoolMode::Max, 3, 1), std::invalid_argument);
}

TEST_CASE("pool2d: max backward routes to first attaining element in scan order") {
    // two equal maxima; row-major first one wins
    auto x = Tensor<float>::from_data({1, 2, 2}, {7, 3, 7, 1}, true);
    auto y = pool2d<float>(x, PoolMode::Max, 2, 2);
    backward(sum(y));
    CHECK(x->grad == std::vector<float>{1, 0, 0, 0});
}

TEST_CASE("pixel_shuffle: reproduces the four-channel 4x4 layout") {
    // channels (12,8;11,2),(13,10;4,0),(14,1;7,9),(5,3;6,15)
    auto x = Tensor<float>::from_data({4, 2, 2},
                                      {12, 8, 11, 2, 13, 10, 4, 0, 14, 1, 7, 9, 5, 3, 6, 15});
    auto y = pixel_shuffle<float>(x, 2);
    REQUIRE(y->shape == Shape{1, 4, 4});
    const std::vector<float> expect = {12, 13, 8, 10, 14, 5, 1, 3, 11, 4, 2, 0, 7, 6, 9, 15};
    CHECK(y->data == expect);
    // inverse-permutation oracle: unshuffle restores the input exactly
    auto back = pixel_unshuffle<float>(y, 2);
    CHECK(back->data == x->data);
}

TEST_CASE("pixel_shuffle: r=1 is the identity") {
    std::mt19937 rng(2);
    auto x = testutil::random_var<float>({3, 4, 5}, rng);
    CHECK(pixel_shuffle<float>(x, 1)->data == x->data);
}

TEST_CASE("pixel_shuffle: unshuffle(shuffle(x)) == x over random shapes and r in {1,2,3}") {
    std::mt19937 rng(31);
    std::uniform_int_distribution<int> dim(1, 5), chan(1, 4), rr(1, 3), batch(1, 2);
    for (int t = 0; t < 60; ++t) {
        const int r = rr(rng);
        const int c = chan(rng) * r * r, h = dim(rng), w = dim(rng), n = batch(rng);
        auto x = testutil::random_var<float>({n, c, h, w}, rng);
        auto y = pixel_shuffle<float>(x, r);
        REQUIRE(y->shape == Shape{n, c / (r * r), h * r, w * r});
        CHECK(pixel_unshuffle<float>(y, r)->data == x->data);
    }
}

TEST_CASE("pixel_shuffle: non-divisible channel count is rejected") {
    auto x = Tensor<float>::create({3, 2, 2});
    CHECK_THROWS_AS(pixel_shuffle<float>(x, 2), std::invalid_argument);
}

TEST_CASE("batch_norm: eval with matching running stats zeroes a constant input") {
    auto x = Tensor<float>::from_data({2, 3, 3}, std::vector<float>(18, 4.5f));
    auto gamma = Tensor<float>::from_data({2}, {1, 1});
    auto beta = Tensor<float>::from_data({2}, {0, 0});
    std::vector<float> mean(2, 4.5f), var(2, 1.f);
    auto y = batch_norm<float>(x, gamma, beta, mean, var, false, 0.1f, 0.f);
    for (float v : y->data) CHECK(v == 0.f);
}

TEST_CASE("batch_norm: training output has per-channel mean 0 and var 1") {
    std::mt19937 rng(17);
    auto x = testutil::random_var<float>({4, 3, 5, 5}, rng);
    auto gamma = Tensor<float>::from_data({3}, {1, 1, 1});
    auto beta = Tensor<float>::from_data({3}, {0, 0, 0});
    std::vector<float> mean(3, 0.f), var(3, 1.f);
    auto y = batch_norm<float>(x, gamma, beta, mean, var, true, 0.1f, 0.f);
    for (int c = 0; c < 3; ++c) {
        double m = 0, v = 0;
        int count = 0;
        for (int n = 0; n < 4; ++n)
            for (int i = 0; i < 25; ++i) {
                m += y->data[(n * 3 + c) * 25 + i];
                ++count;
            }
        m /= count;
        for (int n = 0; n < 4; ++n)
            for (int i = 0; i < 25; ++i) {
                const double d = y->data[(n * 3 + c) * 25 + i] - m;
                v += d * d;
            }
        v /= count;
        CHECK(std::abs(m) < 1e-5);
        CHECK(std::abs(v - 1.0) < 1e-4);
    }
}

TEST_CASE("batch_norm: running stats follow the closed-form EMA over two steps") {
    std::mt19937 rng(19);
    auto gamma = Tensor<float>::from_data({1}, {1});
    auto beta = Tensor<float>::from_data({1}, {0});
    std::vector<float> rmean(1, 0.f), rvar(1, 1.f);
    const float momentum = 0.25f;

    auto batch_stats = [](const Var<float>& x) {
        double m = 0;
        for (float v : x->data) m += v;
        m /= x->data.size();
        double var = 0;
        for (float v : x->data) var += (v - m) * (v - m);
        var /= x->data.size();
        return std::make_pair(m, var);
    };

    double em = 0.0, ev = 1.0;  // hand EMA
    for (int step = 0; step < 2; ++step) {
        auto x = testutil::random_var<float>({1, 4, 4}, rng);
        auto [bm, bv] = batch_stats(x);
        em = (1 - momentum) * em + momentum * bm;
        ev = (1 - momentum) * ev + momentum * bv;
        batch_norm<float>(x, gamma, beta, rmean, rvar, true, momentum);
        CHECK(rmean[0] == doctest::Approx(em).epsilon(1e-5));
        CHECK(rvar[0] == doctest::Approx(ev).epsilon(1e-5));
    }
}

TEST_CASE("batch_norm: buffer size mismatch rejected") {
    auto x = Tensor<float>::create({2, 3, 3});
    auto gamma = Tensor<float>::from_data({1}, {1});
    auto beta = Tensor<float>::from_data({1}, {0});
    std::vector<float> mean(1, 0.f), var(1, 1.f);
    CHECK_THROWS_AS(batch_norm<float>(x, gamma, beta, mean, var, true), std::invalid_argument);
}

TEST_CASE("backward: sum gives all-ones gradient") {
    std::mt19937 rng(3);
    auto x = testutil::random_var<double>({2, 3, 4}, rng, -1.0, 1.0, true);
    backward(sum(x));
    for (double g : x->grad) CHECK(g == 1.0);
}

TEST_CASE("backward: non-scalar loss rejected") {
    auto x = Tensor<double>::create({2, 2}, true);
    CHECK_THROWS_AS(backward(add(x, x)), std::invalid_argument);
}

TEST_CASE("backward: conv loss matches finite differences") {
    std::mt19937 rng(41);
    auto x = testutil::random_var<double>({1, 2, 5, 5}, rng, -1.0, 1.0, true);
    auto w = testutil::random_var<double>({3, 2, 3, 3}, rng, -1.0, 1.0, true);
    auto b = testutil::random_var<double>({3}, rng, -1.0, 1.0, true);
    auto fn = [&] { return sum(conv2d<double>(x, w, b, 1, 1)); };
    const auto res = gradcheck(fn, {x, w, b}, 25, rng);
    CHECK_MESSAGE(res.ok, res.detail);
}

TEST_CASE("backward: unique strict max yields a one-hot window gradient") {
    auto x = Tensor<double>::from_data({1, 2, 2}, {0.1, 0.9, 0.3, 0.2}, true);
    backward(sum(pool2d<double>(x, PoolMode::Max, 2, 2)));
    CHECK(x->grad == std::vector<double>{0, 1, 0, 0});
}

TEST_CASE("gradient checks across the op set at generic points") {
    std::mt19937 rng(57);
    struct Case {
        const char* name;
        std::function<GradCheckResult(std::mt19937&)> run;
    };
    auto simple = [](auto make_op) {
        return [make_op](std::mt19937& r) {
            auto x = testutil::random_var<double>({2, 4, 4}, r, -1.0, 1.0, true);
            auto fn = [&] { return make_op(x); };
            return gradcheck(fn, {x}, 20, r);
        };
    };
    std::vector<Case> cases = {
        {"relu", simple([](const Var<double>& x) { return sum(relu(x)); })},
        {"sigmoid", simple([](const Var<double>& x) { return sum(sigmoid(x)); })},
        {"tanh", simple([](const Var<double>& x) { return sum(tanh_op(x)); })},
        {"mean", simple([](const Var<double>& x) { return mean(x); })},
        {"max_pool", simple([](const Var<double>& x) { return sum(pool2d(x, PoolMode::Max, 2, 1)); })},
        {"min_pool", simple([](const Var<double>& x) { return sum(pool2d(x, PoolMode::Min, 2, 2)); })},
        {"avg_pool", simple([](const Var<double>& x) { return sum(pool2d(x, PoolMode::Avg, 3, 1)); })},
        {"anchored_pool",
         simple([](const Var<double>& x) { return sum(pool2d_anchored(x, PoolMode::Max, 2, 2, 1)); })},
        {"pixel_shuffle", [](std::mt19937& r) {
             auto x = testutil::random_var<double>({4, 3, 3}, r, -1.0, 1.0, true);
             auto fn = [&] { return sum(mul(pixel_shuffle(x, 2), pixel_shuffle(x, 2))); };
             return gradcheck(fn, {x}, 20, r);
         }},
        {"pad2d", simple([](const Var<double>& x) {
             return sum(mul(pad2d(x, 1, 0, 2, 1, 0.5), pad2d(x, 1, 0, 2, 1, 0.5)));
         })},
        {"global_avg_pool", [](std::mt19937& r) {
             auto x = testutil::random_var<double>({2, 3, 4, 4}, r, -1.0, 1.0, true);
             auto fn = [&] { return sum(mul(global_avg_pool(x), global_avg_pool(x))); };
             return gradcheck(fn, {x}, 20, r);
         }},
        {"upsample_bilinear", simple([](const Var<double>& x) {
             return sum(mul(upsample_bilinear(x, 7, 9), upsample_bilinear(x, 7, 9)));
         })},
        {"conv_transpose", [](std::mt19937& r) {
             auto x = testutil::random_var<double>({1, 2, 3, 3}, r, -1.0, 1.0, true);
             auto w = testutil::random_var<double>({2, 3, 2, 2}, r, -1.0, 1.0, true);
             auto b = testutil::random_var<double>({3}, r, -1.0, 1.0, true);
             auto fn = [&] { return sum(mul(conv_transpose2d(x, w, b, 2, 0), conv_transpose2d(x, w, b, 2, 0))); };
             return gradcheck(fn, {x, w, b}, 20, r);
         }},
        {"linear_softmax_ce", [](std::mt19937& r) {
             auto x = testutil::random_var<double>({4, 5}, r, -1.0, 1.0, true);
             auto w = testutil::random_var<double>({3, 5}, r, -1.0, 1.0, true);
             auto b = testutil::random_var<double>({3}, r, -1.0, 1.0, true);
             const std::vector<int> labels = {0, 2, 1, 2};
             auto fn = [&] { return softmax_cross_entropy(linear(x, w, b), labels); };
             return gradcheck(fn, {x, w, b}, 20, r);
         }},
        {"bce", [](std::mt19937& r) {
             auto x = testutil::random_var<double>({2, 3, 3}, r, -2.0, 2.0, true);
             const std::vector<double> target = {1, 0, 1, 0, 1, 0, 1, 0, 1,
                                                 0, 1, 0, 1, 0, 1, 0, 1, 0};
             auto fn = [&] { return binary_cross_entropy(sigmoid(x), target); };
             return gradcheck(fn, {x}, 18, r);
         }},
        {"embedding", [](std::mt19937& r) {
             auto table = testutil::random_var<double>({6, 4}, r, -1.0, 1.0, true);
             const std::vector<int> ids = {0, 3, 3, 5, 1};
             auto fn = [&] { return sum(mul(embedding(table, ids), embedding(table, ids))); };
             return gradcheck(fn, {table}, 20, r);
         }},
        {"concat", [](std::mt19937& r) {
             auto a = testutil::random_var<double>({2, 2, 3, 3}, r, -1.0, 1.0, true);
             auto b = testutil::random_var<double>({2, 1, 3, 3}, r, -1.0, 1.0, true);
             auto fn = [&] {
                 auto c = concat<double>({a, b}, 1);
                 return sum(mul(c, c));
             };
             return gradcheck(fn, {a, b}, 20, r);
         }},
        {"batch_norm_train", [](std::mt19937& r) {
             auto x = testutil::random_var<double>({2, 2, 3, 3}, r, -1.0, 1.0, true);
             auto gamma = testutil::random_var<double>({2}, r, 0.5, 1.5, true);
             auto beta = testutil::random_var<double>({2}, r, -0.5, 0.5, true);
             std::vector<double> mean(2, 0.0), var(2, 1.0);
             auto fn = [&] {
                 auto y = batch_norm<double>(x, gamma, beta, mean, var, true);
                 return sum(mul(y, y));
             };
             return gradcheck(fn, {x, gamma, beta}, 20, r);
         }},
    };
    for (auto& c : cases) {
        const auto res = c.run(rng);
        const std::string msg = std::string(c.name) + ": " + res.detail;
        CHECK_MESSAGE(res.ok, msg);
    }
}

TEST_CASE("ops are deterministic: same inputs give bit-identical outputs") {
    auto run = [] {
        std::mt19937 rng(99);
        auto x = testutil::random_var<float>({2, 3, 6, 6}, rng);
        auto w = testutil::random_var<float>({4, 3, 3, 3}, rng);
        auto b = testutil::random_var<float>({4}, rng);
        auto y = conv2d<float>(x, w, b, 1, 1);
        return pool2d<float>(relu(y), PoolMode::Max, 2, 2)->data;
    };
    const auto a = run(), b = run();
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(float)) == 0);
}

TEST_CASE("mten: f32 and f64 round-trips preserve bits") {
    std::mt19937 rng(7);
    const std::string path32 = "test_roundtrip32.mten", path64 = "test_roundtrip64.mten";
    std::vector<float> data(24);
    std::uniform_real_distribution<float> dist(-10.f, 10.f);
    for (auto& v : data) v = dist(rng);
    write_mten_f32(path32, {2, 3, 4}, data.data());
    const auto md = read_mten(path32);
    REQUIRE(md.dtype == 1);
    CHECK(md.dims == std::vector<std::uint32_t>{2, 3, 4});
    CHECK(std::memcmp(md.f32.data(), data.data(), data.size() * sizeof(float)) == 0);

    std::vector<double> d64(6, 1.0 / 3.0);
    write_mten_f64(path64, {6}, d64.data());
    const auto md64 = read_mten(path64);
    REQUIRE(md64.dtype == 2);
    CHECK(std::memcmp(md64.f64.data(), d64.data(), d64.size() * sizeof(double)) == 0);
    std::remove(path32.c_str());
    std::remove(path64.c_str());
}

TEST_CASE("mten: corrupt magic rejected") {
    const std::string path = "test_badmagic.mten";
    {
        std::vector<float> data(1, 0.f);
        write_mten_f32(path, {1}, data.data());
        FILE* f = std::fopen(path.c_str(), "r+b");
        std::fputc('X', f);
        std::fclose(f);
    }
    CHECK_THROWS_AS(read_mten(path), std::runtime_error);
    std::remove(path.c_str());
}
