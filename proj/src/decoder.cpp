#include "voxslam/decoder.hpp"

#include <cmath>

#include "voxslam/errors.hpp"
#include "voxslam/rng.hpp"

namespace voxslam {

using Eigen::MatrixXd;

DecoderLayout DecoderLayout::make(int embedding_dim, int hidden, int trunk_layers, int skip_at,
                                  int sdf_hidden, int color_hidden) {
    if (embedding_dim < 1 || hidden < 1 || trunk_layers < 1 || sdf_hidden < 1 ||
        color_hidden < 1) {
        throw ConfigError("decoder layout: dimensions must be positive");
    }
    DecoderLayout l;
    l.embedding_dim = embedding_dim;
    l.hidden = hidden;
    l.trunk_layers = trunk_layers;
    l.skip_at = skip_at;
    l.sdf_hidden = sdf_hidden;
    l.color_hidden = color_hidden;
    int64_t off = 0;
    auto add = [&](int in, int out) {
        Layer layer;
        layer.in = in;
        layer.out = out;
        layer.w_off = off;
        off += static_cast<int64_t>(in) * out;
        layer.b_off = off;
        off += out;
        l.layers.push_back(layer);
    };
    for (int i = 0; i < trunk_layers; ++i) {
        const int in = (i == 0 ? embedding_dim : hidden) + (l.has_skip_at(i) ? embedding_dim : 0);
        add(in, hidden);
    }
    add(hidden, 1 + sdf_hidden);        // SDF head: scalar + hidden feature
    add(sdf_hidden, color_hidden);      // color fc1
    add(color_hidden, 3);               // color fc2 (pre-sigmoid)
    l.param_count = off;
    return l;
}

DecoderParams init_params(uint64_t seed, const DecoderLayout& layout) {
    DecoderParams p;
    p.layout = layout;
    p.theta = Eigen::VectorXd::Zero(layout.param_count);
    Rng rng(mix_seed(seed, 0x6465636f64657221ull));
    for (const auto& layer : layout.layers) {
        const double bound = std::sqrt(6.0 / (layer.in + layer.out));
        for (int64_t i = 0; i < static_cast<int64_t>(layer.in) * layer.out; ++i) {
            p.theta[layer.w_off + i] = rng.uniform(-bound, bound);
        }
        // biases stay zero
    }
    return p;
}

namespace {

Tape::ParamSlot slot_for(const DecoderParams& params, int layer_index, double* theta_grad) {
    const auto& layer = params.layout.layers[layer_index];
    Tape::ParamSlot s;
    s.w = params.theta.data() + layer.w_off;
    s.b = params.theta.data() + layer.b_off;
    s.rows = layer.out;
    s.cols = layer.in;
    if (theta_grad != nullptr) {
        s.w_grad = theta_grad + layer.w_off;
        s.b_grad = theta_grad + layer.b_off;
    }
    return s;
}

} // namespace

std::pair<Tape::NodeId, Tape::NodeId> decode_on_tape(Tape& tape, const DecoderParams& params,
                                                     Tape::NodeId input, double* theta_grad) {
    const DecoderLayout& l = params.layout;
    Tape::NodeId cur = input;
    for (int i = 0; i < l.trunk_layers; ++i) {
        if (l.has_skip_at(i)) {
            cur = tape.concat_rows(cur, input);
        }
        cur = tape.relu(tape.affine(slot_for(params, i, theta_grad), cur));
    }
    const Tape::NodeId sd = tape.affine(slot_for(params, l.sdf_head(), theta_grad), cur);
    const Tape::NodeId sdf = tape.rows(sd, 0, 1);
    const Tape::NodeId feat = tape.rows(sd, 1, l.sdf_hidden);
    Tape::NodeId c = tape.relu(tape.affine(slot_for(params, l.color_fc1(), theta_grad), feat));
    c = tape.affine(slot_for(params, l.color_fc2(), theta_grad), c);
    const Tape::NodeId rgb = tape.sigmoid(c);
    return {rgb, sdf};
}

void decode_batch(const DecoderParams& params, const MatrixXd& X, MatrixXd* rgb,
                  Eigen::RowVectorXd* sdf) {
    const DecoderLayout& l = params.layout;
    if (X.rows() != l.embedding_dim) {
        throw Error("decode_batch: embedding dimension mismatch");
    }
    auto W = [&](int i) {
        const auto& layer = l.layers[i];
        return Eigen::Map<const MatrixXd>(params.theta.data() + layer.w_off, layer.out, layer.in);
    };
    auto b = [&](int i) {
        const auto& layer = l.layers[i];
        return Eigen::Map<const Eigen::VectorXd>(params.theta.data() + layer.b_off, layer.out);
    };
    MatrixXd cur = X;
    for (int i = 0; i < l.trunk_layers; ++i) {
        if (l.has_skip_at(i)) {
            MatrixXd cat(cur.rows() + X.rows(), cur.cols());
            cat.topRows(cur.rows()) = cur;
            cat.bottomRows(X.rows()) = X;
            cur = std::move(cat);
        }
        MatrixXd next;
        next.noalias() = W(i) * cur;
        next.colwise() += b(i);
        cur = next.cwiseMax(0.0);
    }
    MatrixXd sd;
    sd.noalias() = W(l.sdf_head()) * cur;
    sd.colwise() += b(l.sdf_head());
    if (sdf != nullptr) {
        *sdf = sd.row(0);
    }
    if (rgb != nullptr) {
        MatrixXd f;
        f.noalias() = W(l.color_fc1()) * sd.bottomRows(l.sdf_hidden);
        f.colwise() += b(l.color_fc1());
        f = f.cwiseMax(0.0);
        MatrixXd c;
        c.noalias() = W(l.color_fc2()) * f;
        c.colwise() += b(l.color_fc2());
        *rgb = (1.0 + (-c.array()).exp()).inverse().matrix();
    }
}

std::pair<Vec3, double> decode(const DecoderParams& params, const Eigen::VectorXd& embedding) {
    MatrixXd rgb;
    Eigen::RowVectorXd sdf;
    decode_batch(params, embedding, &rgb, &sdf);
    return {Vec3(rgb.col(0)), sdf[0]};
}

} // namespace voxslam
