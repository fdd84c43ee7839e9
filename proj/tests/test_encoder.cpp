#include "helpers.hpp"

#include "mobiclr/encoder.hpp"
#include "mobiclr/kernels.hpp"
#include "mobiclr/objectives.hpp"
#include "mobiclr/trainer.hpp"

#include "doctest.h"

#include <cmath>

using namespace mobiclr;
using namespace mobiclr::encoder;

namespace {

std::vector<Mat> random_taps(int k, int in, int out, std::uint64_t seed) {
    std::vector<Mat> taps;
    for (int j = 0; j < k; ++j) taps.push_back(testing::random_mat(in, out, seed + j));
    return taps;
}

ModelConfig small_config(int d = 8) {
    ModelConfig c;
    c.hidden_channels = 8;
    c.repr_dim = d;
    c.projection.proj_dim = d;
    c.projection.hidden = 8;
    return c;
}

}  // namespace

TEST_CASE("gelu matches the erf form and its derivative") {
    for (double x : {-3.0, -0.5, 0.0, 0.7, 2.5}) {
        CHECK(kernels::gelu(x) == doctest::Approx(0.5 * x * (1 + std::erf(x / std::sqrt(2.0)))));
        const double h = 1e-6;
        CHECK(kernels::gelu_grad(x) == doctest::Approx((kernels::gelu(x + h) - kernels::gelu(x - h)) / (2 * h)).epsilon(1e-7));
    }
}

TEST_CASE("conv1d agrees with the loop reference across dilations and lengths") {
    for (int d : {1, 2, 4}) {
        for (int T : {1, 3, 16, 41}) {
            const Mat x = testing::random_mat(T, 5, 100 + T);
            const auto taps = random_taps(3, 5, 6, 7 * d);
            const Mat bias = testing::random_mat(1, 6, 9);
            const Mat a = kernels::conv1d(x, taps, bias, d);
            const Mat b = kernels::conv1d_reference(x, taps, bias, d);
            REQUIRE(a.rows() == T);
            CHECK((a - b).cwiseAbs().maxCoeff() < 1e-12);
        }
    }
}

TEST_CASE("conv1d uses symmetric zero padding") {
    // Single channel, taps [1, 10, 100], dilation 2: out[t] = x[t-2] + 10 x[t] + 100 x[t+2].
    Mat x(5, 1);
    x << 1, 2, 3, 4, 5;
    std::vector<Mat> taps = {Mat::Constant(1, 1, 1), Mat::Constant(1, 1, 10), Mat::Constant(1, 1, 100)};
    const Mat y = kernels::conv1d(x, taps, Mat::Zero(1, 1), 2);
    CHECK(y(0, 0) == 10 + 300);
    CHECK(y(2, 0) == 1 + 30 + 500);
    CHECK(y(4, 0) == 3 + 50);
    CHECK(kernels::left_pad(3, 4) == 4);
}

TEST_CASE("conv1d backward agrees with the loop reference") {
    const Mat x = testing::random_mat(19, 4, 1);
    const auto taps = random_taps(3, 4, 3, 2);
    const Mat g = testing::random_mat(19, 3, 3);
    std::vector<Mat> ga(3, Mat::Zero(4, 3)), gb(3, Mat::Zero(4, 3));
    Mat ba = Mat::Zero(1, 3), bb = Mat::Zero(1, 3);
    const Mat dxa = kernels::conv1d_backward(x, taps, 2, g, ga, ba);
    const Mat dxb = kernels::conv1d_backward_reference(x, taps, 2, g, gb, bb);
    CHECK((dxa - dxb).cwiseAbs().maxCoeff() < 1e-12);
    CHECK((ba - bb).cwiseAbs().maxCoeff() < 1e-12);
    for (int j = 0; j < 3; ++j) CHECK((ga[j] - gb[j]).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("init_model is deterministic in the seed and within the fan-in bound") {
    const ModelConfig c = small_config();
    const Model a = init_model(c, 5), b = init_model(c, 5), other = init_model(c, 6);
    bool differs = false;
    std::vector<const Mat*> bt, ot;
    for_each_tensor(b, [&](const std::string&, const Mat& t) { bt.push_back(&t); });
    for_each_tensor(other, [&](const std::string&, const Mat& t) { ot.push_back(&t); });
    std::size_t k = 0;
    for_each_tensor(a, [&](const std::string& name, const Mat& t) {
        CHECK(t == *bt[k]);
        if (t != *ot[k]) differs = true;
        CHECK(t.allFinite());
        const bool is_bias = name.find("bias") != std::string::npos;
        if (is_bias) {
            CHECK(t.cwiseAbs().maxCoeff() == 0.0);
        } else {
            // Conv taps have fan-in in_channels * kernel_size.
            const bool is_tap = name.find(".tap") != std::string::npos;
            const double fan_in = static_cast<double>(t.rows()) * (is_tap ? c.kernel_size : 1);
            CHECK(t.cwiseAbs().maxCoeff() <= 1.0 / std::sqrt(fan_in));
        }
        ++k;
    });
    CHECK(differs);
}

TEST_CASE("encode shapes and purity") {
    const Model m = init_model(ModelConfig{}, 1);
    const Mat x = testing::random_mat(336, 2, 2);
    const Mat h = encode(x, m.encoder(Flow::Joint));
    CHECK(h.rows() == 336);
    CHECK(h.cols() == 128);
    CHECK(encode(x, m.encoder(Flow::Joint)) == h);
    CHECK(project(h, m.head(Flow::Joint)).rows() == 336);
    CHECK(project(h, m.head(Flow::Joint)).cols() == 128);

    const Mat one = encode(testing::random_mat(1, 2, 3), m.encoder(Flow::Joint));
    CHECK(one.rows() == 1);
    CHECK(one.allFinite());
}

TEST_CASE("encode rejects bad input") {
    const Model m = init_model(small_config(), 1);
    CHECK_THROWS_AS(encode(testing::random_mat(10, 2, 1), m.encoder(Flow::Inbound)), ArgumentError);
    CHECK_THROWS_AS(encode(Mat(0, 2), m.encoder(Flow::Joint)), ArgumentError);
    Mat bad = testing::random_mat(10, 2, 1);
    bad(3, 1) = std::nan("");
    CHECK_THROWS_AS(encode(bad, m.encoder(Flow::Joint)), ArgumentError);
    CHECK_THROWS_AS(project(testing::random_mat(4, 3, 1), m.head(Flow::Joint)), ArgumentError);
}

TEST_CASE("encode_batch matches the serial path") {
    const Model m = init_model(small_config(), 2);
    std::vector<Mat> xs;
    for (int i = 0; i < 9; ++i) xs.push_back(testing::random_mat(20 + i, 2, 40 + i));
    const auto a = encode_batch(xs, m.encoder(Flow::Joint));
    const auto b = encode_batch_serial(xs, m.encoder(Flow::Joint));
    for (std::size_t i = 0; i < xs.size(); ++i) CHECK(a[i] == b[i]);
}

TEST_CASE("encoder output depends only on a bounded neighbourhood") {
    EncoderConfig ec;
    ec.in_channels = 1;
    ec.hidden_channels = 6;
    ec.repr_dim = 4;
    Rng rng(3);
    const Encoder e = init_encoder(ec, rng);
    const int radius = ec.receptive_radius();
    CHECK(radius == 14);
    const Mat x = testing::random_mat(80, 1, 4);
    Mat y = x;
    y(40, 0) += 1.0;
    const Mat hx = encode(x, e), hy = encode(y, e);
    for (int t = 0; t < 80; ++t) {
        const bool near = std::abs(t - 40) <= radius;
        if (!near) CHECK((hx.row(t) - hy.row(t)).cwiseAbs().maxCoeff() == 0.0);
    }
    CHECK((hx.row(40) - hy.row(40)).cwiseAbs().maxCoeff() > 0.0);
}

TEST_CASE("projection head is per-timestep") {
    const Model m = init_model(small_config(), 3);
    const Mat h = testing::random_mat(12, 8, 5);
    std::vector<int> perm = {3, 0, 11, 5, 7, 1, 2, 10, 9, 4, 8, 6};
    Mat hp(12, 8);
    for (int t = 0; t < 12; ++t) hp.row(t) = h.row(perm[t]);
    const Mat z = project(h, m.head(Flow::Inbound)), zp = project(hp, m.head(Flow::Inbound));
    for (int t = 0; t < 12; ++t) CHECK((zp.row(t) - z.row(perm[t])).cwiseAbs().maxCoeff() < 1e-14);

    ProjectionHead zero = zeros_like(m.head(Flow::Inbound));
    CHECK(project(h, zero).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("forward_trio shapes and flow inputs") {
    const Model m = init_model(small_config(), 4);
    const Mat a = testing::random_mat(16, 2, 6), b = testing::random_mat(16, 2, 7);
    const auto out = forward_trio(a, b, m);
    for (const auto* v : {&out.view_a, &out.view_b})
        for (int f = 0; f < 3; ++f) {
            CHECK(v->h[f].rows() == 16);
            CHECK(v->h[f].cols() == 8);
            CHECK(v->z[f].rows() == 16);
            CHECK(v->z[f].cols() == 8);
        }
    Mat joint(16, 2);
    joint << flow_input(a, Flow::Inbound), flow_input(a, Flow::Outbound);
    CHECK(joint == a);
    CHECK(out.view_a.h[0] == encode(flow_input(a, Flow::Inbound), m.encoder(Flow::Inbound)));
}

TEST_CASE("the total loss sends gradient to all three encoders") {
    const Model m = init_model(small_config(), 8);
    std::vector<Mat> va, vb;
    for (int i = 0; i < 4; ++i) {
        va.push_back(testing::random_mat(16, 2, 10 + i));
        vb.push_back(testing::random_mat(16, 2, 20 + i));
    }
    const auto g = trainer::loss_and_gradient(m, va, vb, {}, {});
    for (Flow f : kFlows) {
        CHECK(squared_norm(g.grad.encoder(f)) > 0.0);
        CHECK(squared_norm(g.grad.head(f)) > 0.0);
    }
}

TEST_CASE("checkpoint round trip") {
    const auto dir = testing::scratch_dir("encoder_ckpt");
    const Model m = init_model(small_config(), 9);
    save_checkpoint(dir / "m.bin", m, {7, "hash", {{"note", 1}}});
    CheckpointMeta meta;
    const Model back = load_checkpoint(dir / "m.bin", &meta);
    CHECK(meta.train_seed == 7);
    CHECK(meta.config_hash == "hash");
    CHECK(back.config.repr_dim == 8);
    std::vector<Mat> a, b;
    for_each_tensor(m, [&](const std::string&, const Mat& t) { a.push_back(t); });
    for_each_tensor(back, [&](const std::string&, const Mat& t) { b.push_back(t); });
    REQUIRE(a.size() == b.size());
    for (std::size_t i = 0; i < a.size(); ++i) CHECK(a[i] == b[i]);
    CHECK(parameter_count(back) == parameter_count(m));
}

TEST_CASE("config validation") {
    ModelConfig c = small_config();
    c.kernel_size = 0;
    CHECK_THROWS(c.validate());
    c = small_config();
    c.dilations.clear();
    CHECK_THROWS(c.validate());
}
