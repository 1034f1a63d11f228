#include <doctest.h>

#include "test_util.hpp"
#include "voxslam/decoder.hpp"

using namespace voxslam;
using namespace voxslam::testutil;

namespace {

DecoderLayout small_layout() {
    return DecoderLayout::make(16, 8, 2, 1, 4, 8);
}

} // namespace

TEST_SUITE("decoder") {

TEST_CASE("layout dimensions and parameter count") {
    const DecoderLayout full = DecoderLayout::make();
    CHECK(full.layers.size() == 6);
    CHECK(full.layers[0].in == 16);
    CHECK(full.layers[0].out == 256);
    CHECK(full.layers[2].in == 256 + 16); // skip connection re-concatenates the embedding
    CHECK(full.layers[3].out == 1 + 128); // sdf + hidden feature
    CHECK(full.layers[4].in == 128);
    CHECK(full.layers[5].out == 3);
    int64_t expect = 0;
    for (const auto& l : full.layers) {
        expect += static_cast<int64_t>(l.in) * l.out + l.out;
    }
    CHECK(full.param_count == expect);
}

TEST_CASE("init is deterministic per seed and respects bounds") {
    const DecoderLayout layout = small_layout();
    const DecoderParams a = init_params(42, layout);
    const DecoderParams b = init_params(42, layout);
    const DecoderParams c = init_params(43, layout);
    CHECK(a.theta == b.theta);
    CHECK(a.theta != c.theta);
    for (const auto& l : layout.layers) {
        const double bound = std::sqrt(6.0 / (l.in + l.out));
        for (int64_t i = 0; i < static_cast<int64_t>(l.in) * l.out; ++i) {
            CHECK(std::abs(a.theta[l.w_off + i]) <= bound);
        }
        for (int i = 0; i < l.out; ++i) {
            CHECK(a.theta[l.b_off + i] == 0.0);
        }
    }
}

TEST_CASE("decode determinism and sigmoid range") {
    const DecoderParams params = init_params(7, small_layout());
    const Eigen::VectorXd zero = Eigen::VectorXd::Zero(16);
    const auto [rgb1, sdf1] = decode(params, zero);
    const auto [rgb2, sdf2] = decode(params, zero);
    CHECK(rgb1 == rgb2);
    CHECK(sdf1 == sdf2);

    Rng rng(5);
    for (int i = 0; i < 200; ++i) {
        Eigen::VectorXd e(16);
        for (int d = 0; d < 16; ++d) {
            e[d] = rng.normal();
        }
        const auto [rgb, sdf] = decode(params, e);
        for (int ch = 0; ch < 3; ++ch) {
            CHECK(rgb[ch] > 0.0);
            CHECK(rgb[ch] < 1.0);
        }
        CHECK(std::isfinite(sdf));
    }
}

TEST_CASE("saturated color bias pushes rgb above 0.999") {
    DecoderParams params = init_params(7, small_layout());
    const auto& out_layer = params.layout.layers[params.layout.color_fc2()];
    for (int i = 0; i < out_layer.out; ++i) {
        params.theta[out_layer.b_off + i] = 1000.0;
    }
    Rng rng(9);
    Eigen::VectorXd e(16);
    for (int d = 0; d < 16; ++d) {
        e[d] = rng.normal();
    }
    const auto [rgb, sdf] = decode(params, e);
    for (int ch = 0; ch < 3; ++ch) {
        CHECK(rgb[ch] > 0.999);
    }
}

TEST_CASE("tape forward equals pure batched forward") {
    const DecoderParams params = init_params(11, small_layout());
    Rng rng(13);
    Eigen::MatrixXd X(16, 9);
    for (Eigen::Index j = 0; j < X.size(); ++j) {
        X(j) = rng.normal();
    }
    Eigen::MatrixXd rgb_pure;
    Eigen::RowVectorXd sdf_pure;
    decode_batch(params, X, &rgb_pure, &sdf_pure);

    Tape tape;
    const auto x_node = tape.var(X);
    const auto [rgb_node, sdf_node] = decode_on_tape(tape, params, x_node, nullptr);
    CHECK(tape.value(rgb_node) == rgb_pure);
    CHECK(tape.value(sdf_node).row(0) == sdf_pure);
}

TEST_CASE("gradients match finite differences on small networks") {
    Rng rng(17);
    RenderConfig rcfg;
    for (int trial = 0; trial < 6; ++trial) {
        const DecoderParams params = init_params(100 + trial, small_layout());
        BatchSpec spec;
        spec.rays = 3;
        spec.max_samples_per_ray = 6;
        const AssembledBatch batch = random_batch(spec, rng);
        const FdReport rep = fd_check(params, batch, rcfg, 30, 20, rng);
        CHECK(rep.max_rel_error < 1e-4);
        CHECK(rep.checked == 30 + 20 + 6);
    }
}

TEST_CASE("embedding gradients scatter through the stencil weights") {
    // Loss = sum of SDF outputs for one sample whose 8 stencil corners are
    // distinct vertices; the per-corner gradient must equal w_k times the
    // gradient w.r.t. the blended embedding.
    const DecoderParams params = init_params(19, small_layout());
    Rng rng(21);
    Eigen::MatrixXd E(16, 8);
    for (Eigen::Index i = 0; i < E.size(); ++i) {
        E(i) = 0.3 * rng.normal();
    }
    const Vec3 cell_min(0.1, -0.2, 0.3);
    const double vs = 0.2;
    const Vec3 p = cell_min + Vec3(0.3, 0.7, 0.45) * vs;
    std::vector<std::array<int32_t, 8>> corners{{0, 1, 2, 3, 4, 5, 6, 7}};
    std::vector<Vec3> cell_mins{cell_min};
    Eigen::MatrixXd q(3, 1);
    q.col(0) = p;

    Tape tape;
    const auto e_node = tape.var(E);
    const auto p_node = tape.se3_points(q, Twist(), nullptr);
    const auto x_node = tape.trilerp(p_node, e_node, corners, cell_mins, vs);
    const auto [rgb_node, sdf_node] = decode_on_tape(tape, params, x_node, nullptr);
    const auto loss = tape.sum_all(sdf_node);
    tape.backward(loss);
    const Eigen::MatrixXd corner_grads = tape.grad(e_node);

    // Direct gradient w.r.t. the blended embedding.
    const Vec3 u = (p - cell_min) / vs;
    Eigen::VectorXd blended = Eigen::VectorXd::Zero(16);
    std::array<double, 8> w;
    for (int k = 0; k < 8; ++k) {
        const double wx = (k & 1) ? u.x() : 1 - u.x();
        const double wy = ((k >> 1) & 1) ? u.y() : 1 - u.y();
        const double wz = ((k >> 2) & 1) ? u.z() : 1 - u.z();
        w[k] = wx * wy * wz;
        blended += w[k] * E.col(k);
    }
    Tape tape2;
    const auto blend_node = tape2.var(blended);
    const auto [rgb2, sdf2] = decode_on_tape(tape2, params, blend_node, nullptr);
    tape2.backward(tape2.sum_all(sdf2));
    const Eigen::VectorXd blended_grad = tape2.grad(blend_node);

    Eigen::VectorXd corner_sum = Eigen::VectorXd::Zero(16);
    for (int k = 0; k < 8; ++k) {
        CHECK((corner_grads.col(k) - w[k] * blended_grad).cwiseAbs().maxCoeff() < 1e-12);
        corner_sum += corner_grads.col(k);
    }
    // Partition of unity: per-corner gradients sum to the blended gradient.
    CHECK((corner_sum - blended_grad).cwiseAbs().maxCoeff() < 1e-12);
}

TEST_CASE("backward cost stays within 5x of forward") {
    const DecoderParams params = init_params(23, DecoderLayout::make());
    Rng rng(25);
    BatchSpec spec;
    spec.rays = 8;
    spec.max_samples_per_ray = 8;
    const AssembledBatch batch = random_batch(spec, rng);
    GradRequest req;
    req.theta = true;
    req.embeddings = true;
    req.pose = true;
    const RenderEval eval = evaluate_batch(params, batch, RenderConfig(), Twist(), req);
    REQUIRE(eval.valid);
    CHECK(eval.forward_ops > 0);
    CHECK(eval.backward_ops > 0);
    CHECK(eval.backward_ops <= 5 * eval.forward_ops);
}

} // TEST_SUITE
