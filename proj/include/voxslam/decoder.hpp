#pragma once

#include <cstdint>
#include <utility>

#include <Eigen/Dense>

#include "voxslam/tape.hpp"

namespace voxslam {

// Fully-connected decoder: embedding -> (rgb, sdf). ReLU trunk with one skip
// connection of the input embedding, a linear SDF head emitting the scalar
// SDF plus a hidden feature, and a two-layer color head ending in a sigmoid.
struct DecoderLayout {
    int embedding_dim = 16;
    int hidden = 256;     // trunk width
    int trunk_layers = 3; // L
    int skip_at = 2;      // embedding re-concatenated before this trunk layer
    int sdf_hidden = 128; // hidden feature emitted by the SDF head
    int color_hidden = 256;

    struct Layer {
        int in = 0, out = 0;
        int64_t w_off = 0, b_off = 0;
    };
    std::vector<Layer> layers; // trunk..., sdf head, color fc1, color fc2
    int64_t param_count = 0;

    static DecoderLayout make(int embedding_dim = 16, int hidden = 256, int trunk_layers = 3,
                              int skip_at = 2, int sdf_hidden = 128, int color_hidden = 256);

    bool has_skip_at(int trunk_layer) const {
        return trunk_layer == skip_at && skip_at >= 1 && skip_at < trunk_layers;
    }
    int sdf_head() const { return trunk_layers; }
    int color_fc1() const { return trunk_layers + 1; }
    int color_fc2() const { return trunk_layers + 2; }

    bool operator==(const DecoderLayout& o) const {
        return embedding_dim == o.embedding_dim && hidden == o.hidden &&
               trunk_layers == o.trunk_layers && skip_at == o.skip_at &&
               sdf_hidden == o.sdf_hidden && color_hidden == o.color_hidden;
    }
};

struct DecoderParams {
    DecoderLayout layout;
    Eigen::VectorXd theta;
};

// Glorot-uniform weights, zero biases; deterministic per seed.
DecoderParams init_params(uint64_t seed, const DecoderLayout& layout);

// Pure batched forward (no tape): X is embedding_dim x S. Either output may
// be null to skip the corresponding head.
void decode_batch(const DecoderParams& params, const Eigen::MatrixXd& X, Eigen::MatrixXd* rgb,
                  Eigen::RowVectorXd* sdf);

std::pair<Vec3, double> decode(const DecoderParams& params, const Eigen::VectorXd& embedding);

// Tape graph of the decoder from an input node (embedding_dim x S). Returns
// {rgb_node, sdf_node}. theta_grad (same size as theta) receives parameter
// gradients when non-null.
std::pair<Tape::NodeId, Tape::NodeId> decode_on_tape(Tape& tape, const DecoderParams& params,
                                                     Tape::NodeId input, double* theta_grad);

} // namespace voxslam
