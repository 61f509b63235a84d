#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "qsm/kernels.hpp"
#include "qsm/schedule.hpp"

namespace qsm {

/// Noise-predictor architecture: stem conv (1 -> F), B residual blocks
/// (conv -> +time bias -> swish -> conv, added back to the stream), head conv
/// (F -> 1, zero-initialized). All convs 3x3x3 with zero padding. The time
/// path is a sinusoidal embedding of t through two dense layers producing one
/// per-channel bias shared by all blocks.
struct DenoiserArch {
    int width = 32;      // F
    int blocks = 4;      // B
    int time_embed = 32; // sinusoidal embedding width, must be even
};

/// Offsets into the flat parameter vector, in serialized order:
/// stem, blocks in order (conv1, conv2), head, time-embedding dense layers
/// last.
struct ParamLayout {
    std::size_t stem_w = 0, stem_b = 0;
    struct BlockOffsets {
        std::size_t c1w, c1b, c2w, c2b;
    };
    std::vector<BlockOffsets> block;
    std::size_t head_w = 0, head_b = 0;
    std::size_t t1w = 0, t1b = 0, t2w = 0, t2b = 0;
    std::size_t total = 0;
};

ParamLayout make_param_layout(const DenoiserArch& arch);
std::size_t param_count(const DenoiserArch& arch);

// He-normal conv/dense weights, zero biases, zero head. Deterministic.
std::vector<float> init_params(const DenoiserArch& arch, std::uint64_t seed);

/// Double-precision working copy of the f32 parameter vector.
struct NetWeights {
    DenoiserArch arch;
    ParamLayout layout;
    std::vector<double> w;
};

NetWeights promote_weights(const DenoiserArch& arch, std::span<const float> theta);

/// Forward activations recorded for the backward pass.
struct NetTape {
    Dims3 dims{0, 0, 0};
    int t = 0;
    std::vector<double> x;                   // input, 1 channel
    std::vector<std::vector<double>> h;      // stream after stem and each block (B+1 entries)
    std::vector<std::vector<double>> u;      // per block, pre-activation
    std::vector<std::vector<double>> s;      // per block, swish(u)
    std::vector<double> emb, z1, h1, tbias;  // time path
};

// eps_out = network(x, t); records to tape when given.
void net_forward(const NetWeights& W, std::span<const double> x, const Dims3& dims, int t,
                 NetTape* tape, std::span<double> eps_out);

// Reverse mode from cotangent gout (same shape as the output). Either output
// may be null. grad_theta is overwritten, not accumulated.
void net_backward(const NetWeights& W, const NetTape& tape, std::span<const double> gout,
                  std::vector<double>* grad_theta, std::vector<double>* grad_x);

struct TrainSample {
    std::span<const double> x0;
    std::span<const double> eps;
    int t = 1;
};

/// Mean-squared-error training loss over the batch and its exact parameter
/// gradient: loss = mean over samples of the per-voxel MSE between eps and
/// the network prediction at x_t = q_sample(x0, eps, t).
double loss_and_grads(const DenoiserArch& arch, std::span<const float> theta,
                      const NoiseSchedule& sched, std::span<const TrainSample> batch,
                      const Dims3& patch_dims, std::vector<double>& grad);

} // namespace qsm
