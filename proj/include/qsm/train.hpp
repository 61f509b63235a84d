#pragma once

#include "qsm/dataset.hpp"
#include "qsm/model.hpp"

namespace qsm {

struct TrainHyper {
    double lr = 1e-4;
    int batch = 8;
    long steps = 2000;
    std::uint64_t seed = 0;
};

/// Denoising-model training loop: per optimizer step, draw `batch` patches
/// uniformly with replacement, t uniform in 1..T, standard-normal noise,
/// form x_t and take one Adam step (beta1 0.9, beta2 0.999, eps 1e-8) on the
/// MSE noise-prediction loss. Fully reproducible from the seed; steps == 0
/// returns the freshly initialized model unchanged.
DenoiserModel train(const PatchDataset& dataset, const DenoiserArch& arch,
                    const NoiseSchedule& sched, const NormalizationSpec& norm,
                    const TrainHyper& hyper);

/// Continues training an existing model in place (same loop; meta is
/// appended). Used by train() and handy for warm restarts.
void train_steps(DenoiserModel& model, const PatchDataset& dataset, const TrainHyper& hyper);

} // namespace qsm
