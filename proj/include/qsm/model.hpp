#pragma once

#include <string>

#include "qsm/denoiser.hpp"
#include "qsm/net.hpp"
#include "qsm/volume.hpp"

namespace qsm {

struct TrainMeta {
    long steps = 0;
    std::vector<float> loss_curve; // per-step training loss, in-memory only
};

/// Trained noise predictor plus everything needed to run it: schedule
/// parameters and the normalization scale are stored in the model file so a
/// model is self-describing. Parameters are kept quantized to f32 so that a
/// save/load roundtrip reproduces outputs exactly.
struct DenoiserModel {
    DenoiserArch arch;
    std::vector<float> theta;
    NoiseSchedule sched;
    double chi_scale = 0.2; // ppm, f32-quantized
    TrainMeta meta;
};

DenoiserModel make_model(const DenoiserArch& arch, const NoiseSchedule& sched, double chi_scale,
                         std::uint64_t init_seed);

// eps_hat = network(x_t, t); the spec-level inference entry point.
std::vector<double> forward_eps(const DenoiserModel& m, std::span<const double> x_t,
                                const Dims3& dims, int t);

/// QDM file (little-endian): magic "QDM1", u32 version=1, u32 T,
/// f64 beta_start, f64 beta_end, f32 chi_scale, u32 F, u32 B,
/// u32 time_embed_dim, u64 param_count, then param_count f32 parameters in
/// layer order (stem, blocks, head, time-embedding dense layers last).
void save_model(const DenoiserModel& m, const std::string& path);
DenoiserModel load_model(const std::string& path);

/// Denoiser backed by the trained network; provides the exact input VJP.
class NetDenoiser : public Denoiser {
public:
    explicit NetDenoiser(const DenoiserModel& m);

    void predict(std::span<const double> x, const Dims3& dims, int t,
                 std::span<double> eps_out) const override;
    bool has_input_vjp() const override { return true; }
    void input_vjp(std::span<const double> x, const Dims3& dims, int t,
                   std::span<const double> cotangent, std::span<double> out) const override;

private:
    NetWeights weights_;
};

} // namespace qsm
