#include "qsm/train.hpp"

#include <cmath>
#include <string>

#include "qsm/errors.hpp"
#include "qsm/rng.hpp"

namespace qsm {

void train_steps(DenoiserModel& model, const PatchDataset& dataset, const TrainHyper& hyper) {
    if (dataset.patches.empty()) throw data_error("cannot train on an empty dataset");
    if (hyper.batch < 1) throw parameter_error("batch must be >= 1");
    if (!(hyper.lr > 0.0)) throw parameter_error("learning rate must be positive");

    const std::size_t P = param_count(model.arch);
    const std::size_t N = volume_of(dataset.patch_size);
    const int T = model.sched.steps;

    // Adam state (restarts per call)
    std::vector<double> m(P, 0.0), v(P, 0.0), grad;
    const double beta1 = 0.9, beta2 = 0.999, eps = 1e-8;

    RandomStream rng(mix_seed(hyper.seed, 0x747261696eull)); // "train" stream

    std::vector<std::vector<double>> noise(hyper.batch, std::vector<double>(N));
    std::vector<TrainSample> batch(hyper.batch);

    for (long step = 1; step <= hyper.steps; ++step) {
        for (int k = 0; k < hyper.batch; ++k) {
            const std::size_t idx = rng.below(dataset.patches.size());
            const int t = static_cast<int>(rng.between(1, T));
            rng.fill_normal(noise[k].data(), N);
            batch[k] = TrainSample{dataset.patches[idx], noise[k], t};
        }

        double loss;
        try {
            loss = loss_and_grads(model.arch, model.theta, model.sched, batch,
                                  dataset.patch_size, grad);
        } catch (const numeric_error&) {
            throw numeric_error("training diverged at step " + std::to_string(step));
        }

        const double bc1 = 1.0 - std::pow(beta1, static_cast<double>(step));
        const double bc2 = 1.0 - std::pow(beta2, static_cast<double>(step));
        for (std::size_t i = 0; i < P; ++i) {
            m[i] = beta1 * m[i] + (1.0 - beta1) * grad[i];
            v[i] = beta2 * v[i] + (1.0 - beta2) * grad[i] * grad[i];
            const double update = hyper.lr * (m[i] / bc1) / (std::sqrt(v[i] / bc2) + eps);
            // parameters live quantized to f32; arithmetic stays double
            model.theta[i] = static_cast<float>(static_cast<double>(model.theta[i]) - update);
        }

        model.meta.steps += 1;
        model.meta.loss_curve.push_back(static_cast<float>(loss));
    }
}

DenoiserModel train(const PatchDataset& dataset, const DenoiserArch& arch,
                    const NoiseSchedule& sched, const NormalizationSpec& norm,
                    const TrainHyper& hyper) {
    DenoiserModel model = make_model(arch, sched, norm.chi_scale, hyper.seed);
    train_steps(model, dataset, hyper);
    return model;
}

} // namespace qsm
