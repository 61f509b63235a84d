// qsmdiff: volumetric QSM reconstruction toolkit.
//
// Subcommands wire the library into the standard workflows: phantom
// generation, forward acquisition simulation, TKD inversion, denoiser
// training, measurement-guided diffusion inversion, and metric evaluation.
// Every run prints its fully resolved configuration; all randomness flows
// from --seed; outputs are identical for any --threads value.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>

#include "CLI11.hpp"
#include "json.hpp"
#include "qsm/dataset.hpp"
#include "qsm/errors.hpp"
#include "qsm/guidance.hpp"
#include "qsm/metrics.hpp"
#include "qsm/model.hpp"
#include "qsm/parallel.hpp"
#include "qsm/phantom.hpp"
#include "qsm/train.hpp"

namespace {

constexpr int kExitUsage = 2;
constexpr int kExitData = 3;
constexpr int kExitNumeric = 4;

std::array<double, 3> normalized_b0(std::vector<double> v) {
    if (v.size() != 3) throw qsm::parameter_error("--b0 needs three components");
    const double n = std::sqrt(v[0] * v[0] + v[1] * v[1] + v[2] * v[2]);
    if (!(n > 0.0)) throw qsm::parameter_error("--b0 must be nonzero");
    return {v[0] / n, v[1] / n, v[2] / n};
}

qsm::Dims3 to_dims(const std::vector<int>& v, const char* flag) {
    if (v.size() != 3) throw qsm::parameter_error(std::string(flag) + " needs three components");
    return {v[0], v[1], v[2]};
}

struct ConfigPrinter {
    void add(const std::string& key, const std::string& value) {
        std::printf("  %-18s = %s\n", key.c_str(), value.c_str());
    }
    void add(const std::string& key, double v) { add(key, std::to_string(v)); }
    void add(const std::string& key, long v) { add(key, std::to_string(v)); }
    void add(const std::string& key, const std::vector<int>& v) {
        add(key, std::to_string(v[0]) + "," + std::to_string(v[1]) + "," + std::to_string(v[2]));
    }
    void add(const std::string& key, const std::vector<double>& v) {
        std::string s;
        for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
        add(key, s);
    }
};

void print_header(const char* cmd) { std::printf("qsmdiff %s, resolved configuration:\n", cmd); }

// ---------------------------------------------------------------- phantom

struct PhantomOpts {
    std::string shape = "sphere";
    std::vector<int> dims{64, 64, 64};
    std::vector<double> voxel{1.0, 1.0, 1.0};
    double radius = 10.0;
    double chi = 0.1;
    std::vector<double> center;
    int count = 6;
    std::uint64_t seed = 0;
    std::string out;
};

int cmd_phantom(CLI::App& app) {
    auto* cmd = app.add_subcommand("phantom", "generate a synthetic susceptibility phantom");
    auto opt = std::make_shared<PhantomOpts>();
    cmd->add_option("--shape", opt->shape, "sphere | ellipsoids | cylinder")
        ->check(CLI::IsMember({"sphere", "ellipsoids", "cylinder"}))
        ->capture_default_str();
    cmd->add_option("--dims", opt->dims, "volume dims nx,ny,nz")->delimiter(',')->capture_default_str();
    cmd->add_option("--voxel", opt->voxel, "voxel size in mm")->delimiter(',')->capture_default_str();
    cmd->add_option("--radius", opt->radius, "sphere/cylinder radius in voxels")->capture_default_str();
    cmd->add_option("--chi", opt->chi, "susceptibility in ppm")->capture_default_str();
    cmd->add_option("--center", opt->center, "component center (default volume center)")->delimiter(',');
    cmd->add_option("--count", opt->count, "ellipsoid count for --shape ellipsoids")->capture_default_str();
    cmd->add_option("--seed", opt->seed, "seed for random mixtures")->capture_default_str();
    cmd->add_option("--out", opt->out, "output QVOL path")->required();

    cmd->callback([opt]() {
        print_header("phantom");
        ConfigPrinter cp;
        cp.add("shape", opt->shape);
        cp.add("dims", opt->dims);
        cp.add("voxel", opt->voxel);
        cp.add("radius", opt->radius);
        cp.add("chi", opt->chi);
        cp.add("count", static_cast<long>(opt->count));
        cp.add("seed", static_cast<long>(opt->seed));
        cp.add("out", opt->out);

        const qsm::Dims3 dims = to_dims(opt->dims, "--dims");
        qsm::PhantomSpec spec;
        if (opt->shape == "ellipsoids") {
            spec = qsm::random_ellipsoid_mixture(dims, opt->count, opt->seed);
        } else {
            spec.dims = dims;
            std::array<double, 3> c{dims[0] / 2.0, dims[1] / 2.0, dims[2] / 2.0};
            if (!opt->center.empty()) {
                if (opt->center.size() != 3) throw qsm::parameter_error("--center needs 3 values");
                c = {opt->center[0], opt->center[1], opt->center[2]};
            }
            if (opt->shape == "sphere")
                spec.spheres.push_back({c, opt->radius, opt->chi});
            else
                spec.cylinders.push_back({c, {0, 0, 1}, opt->radius, dims[2] / 4.0, opt->chi});
        }
        spec.voxel_size = {opt->voxel[0], opt->voxel[1], opt->voxel[2]};
        qsm::Volume v = qsm::make_phantom(spec);
        qsm::save_volume(v, opt->out);
        std::printf("wrote %s (%d x %d x %d, %zu voxels)\n", opt->out.c_str(), v.dims[0], v.dims[1],
                    v.dims[2], v.size());
    });
    return 0;
}

// ---------------------------------------------------------------- forward

struct ForwardOpts {
    std::string chi_path, out;
    std::vector<double> b0{0.0, 0.0, 1.0};
    std::vector<int> out_dims;
    double noise_sigma = 0.0;
    std::uint64_t seed = 0;
};

int cmd_forward(CLI::App& app) {
    auto* cmd = app.add_subcommand("forward", "simulate a local-field acquisition from chi");
    auto opt = std::make_shared<ForwardOpts>();
    cmd->add_option("--chi", opt->chi_path, "input susceptibility QVOL")->required();
    cmd->add_option("--b0", opt->b0, "field direction (normalized automatically)")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--out-dims", opt->out_dims, "acquisition dims (default: chi dims)")->delimiter(',');
    cmd->add_option("--noise-sigma", opt->noise_sigma, "noise std in ppm")->capture_default_str();
    cmd->add_option("--seed", opt->seed, "noise seed")->capture_default_str();
    cmd->add_option("--out", opt->out, "output field QVOL path")->required();

    cmd->callback([opt]() {
        const qsm::Volume chi = qsm::load_volume(opt->chi_path);
        const std::array<double, 3> b0 = normalized_b0(opt->b0);
        const qsm::Dims3 out_dims =
            opt->out_dims.empty() ? chi.dims : to_dims(opt->out_dims, "--out-dims");

        print_header("forward");
        ConfigPrinter cp;
        cp.add("chi", opt->chi_path);
        cp.add("b0 (unit)", std::vector<double>{b0[0], b0[1], b0[2]});
        cp.add("out-dims", std::vector<int>{out_dims[0], out_dims[1], out_dims[2]});
        cp.add("noise-sigma", opt->noise_sigma);
        cp.add("seed", static_cast<long>(opt->seed));
        cp.add("out", opt->out);

        qsm::AcquisitionResult acq =
            qsm::simulate_acquisition(chi, b0, out_dims, {opt->noise_sigma, opt->seed});
        qsm::save_volume(acq.phi, opt->out);
        std::printf("wrote %s\n", opt->out.c_str());
    });
    return 0;
}

// ---------------------------------------------------------------- tkd

struct TkdOpts {
    std::string field, out;
    double threshold = 0.1;
};

int cmd_tkd(CLI::App& app) {
    auto* cmd = app.add_subcommand("tkd", "thresholded k-space division inversion");
    auto opt = std::make_shared<TkdOpts>();
    cmd->add_option("--field", opt->field, "local field QVOL")->required();
    cmd->add_option("--threshold", opt->threshold, "inverse filter floor")->capture_default_str();
    cmd->add_option("--out", opt->out, "output QVOL path")->required();

    cmd->callback([opt]() {
        print_header("tkd");
        ConfigPrinter cp;
        cp.add("field", opt->field);
        cp.add("threshold", opt->threshold);
        cp.add("out", opt->out);

        const qsm::Volume phi = qsm::load_volume(opt->field);
        const qsm::DipoleKernel D = qsm::dipole_kernel(phi.dims, phi.voxel_size, phi.b0_dir);
        qsm::Volume chi = qsm::tkd_invert(phi, D, opt->threshold);
        qsm::save_volume(chi, opt->out);
        std::printf("wrote %s\n", opt->out.c_str());
    });
    return 0;
}

// ---------------------------------------------------------------- train

struct TrainOpts {
    std::vector<std::string> data;
    std::string out, preset;
    int patch = 48, stride = 32, width = 32, blocks = 4, time_embed = 32;
    int timesteps = 1000;
    double beta_start = 1e-4, beta_end = 0.02;
    double chi_scale = 0.2;
    double lr = 1e-4;
    int batch = 8;
    long steps = 2000;
    std::uint64_t seed = 0;
};

int cmd_train(CLI::App& app) {
    auto* cmd = app.add_subcommand("train", "train the patch diffusion denoiser");
    auto opt = std::make_shared<TrainOpts>();
    cmd->add_option("--data", opt->data, "training chi QVOL files")->required();
    cmd->add_option("--preset", opt->preset, "toy: patch 16, stride 8, width 16, blocks 2, batch 2")
        ->check(CLI::IsMember({"toy"}));
    cmd->add_option("--patch", opt->patch)->capture_default_str();
    cmd->add_option("--stride", opt->stride)->capture_default_str();
    cmd->add_option("--width", opt->width, "base channel count")->capture_default_str();
    cmd->add_option("--blocks", opt->blocks, "residual block count")->capture_default_str();
    cmd->add_option("--time-embed", opt->time_embed)->capture_default_str();
    cmd->add_option("--timesteps", opt->timesteps, "diffusion steps T")->capture_default_str();
    cmd->add_option("--beta-start", opt->beta_start)->capture_default_str();
    cmd->add_option("--beta-end", opt->beta_end)->capture_default_str();
    cmd->add_option("--chi-scale", opt->chi_scale, "ppm mapped to model value 1")->capture_default_str();
    cmd->add_option("--lr", opt->lr)->capture_default_str();
    cmd->add_option("--batch", opt->batch)->capture_default_str();
    cmd->add_option("--steps", opt->steps)->capture_default_str();
    cmd->add_option("--seed", opt->seed)->capture_default_str();
    cmd->add_option("--out", opt->out, "output QDM path")->required();

    cmd->callback([opt]() {
        if (opt->preset == "toy") {
            opt->patch = 16;
            opt->stride = 8;
            opt->width = 16;
            opt->blocks = 2;
            opt->batch = 2;
            opt->lr = 2e-4;
        }
        print_header("train");
        ConfigPrinter cp;
        for (const auto& d : opt->data) cp.add("data", d);
        cp.add("preset", opt->preset.empty() ? "(none)" : opt->preset);
        cp.add("patch", static_cast<long>(opt->patch));
        cp.add("stride", static_cast<long>(opt->stride));
        cp.add("width", static_cast<long>(opt->width));
        cp.add("blocks", static_cast<long>(opt->blocks));
        cp.add("time-embed", static_cast<long>(opt->time_embed));
        cp.add("timesteps", static_cast<long>(opt->timesteps));
        cp.add("beta-start", opt->beta_start);
        cp.add("beta-end", opt->beta_end);
        cp.add("chi-scale", opt->chi_scale);
        cp.add("lr", opt->lr);
        cp.add("batch", static_cast<long>(opt->batch));
        cp.add("steps", opt->steps);
        cp.add("seed", static_cast<long>(opt->seed));
        cp.add("out", opt->out);

        std::vector<qsm::Volume> vols;
        for (const auto& p : opt->data) vols.push_back(qsm::load_volume(p));

        const qsm::NormalizationSpec norm{opt->chi_scale};
        qsm::PatchDataset ds = qsm::build_dataset(vols, opt->patch, opt->stride, norm);
        std::printf("dataset: %zu patches of %d^3\n", ds.size(), opt->patch);

        const qsm::DenoiserArch arch{opt->width, opt->blocks, opt->time_embed};
        const qsm::NoiseSchedule sched =
            qsm::make_schedule(opt->timesteps, opt->beta_start, opt->beta_end);
        const qsm::TrainHyper hyper{opt->lr, opt->batch, opt->steps, opt->seed};
        qsm::DenoiserModel model = qsm::train(ds, arch, sched, norm, hyper);

        float first = 0.0f, last = 0.0f;
        if (!model.meta.loss_curve.empty()) {
            first = model.meta.loss_curve.front();
            last = model.meta.loss_curve.back();
        }
        std::printf("trained %ld steps, loss %.4f -> %.4f, %zu parameters\n", model.meta.steps,
                    first, last, model.theta.size());
        qsm::save_model(model, opt->out);
        std::printf("wrote %s\n", opt->out.c_str());
    });
    return 0;
}

// ---------------------------------------------------------------- invert

struct InvertOpts {
    std::string field, model_path, out, diagnostics;
    double xi1 = 10.0, xi2 = 2.5, lambda = 0.1;
    double tkd_threshold = 0.1, tv_epsilon = 1e-6;
    int ddim_steps = 200;
    double eta = 0.0;
    std::string jacobian = "frozen";
    bool normalize_grads = false;
    int patch = 48, overlap = 8;
    std::vector<double> model_voxel{1.0, 1.0, 1.0};
    std::uint64_t seed = 0;
};

int cmd_invert(CLI::App& app) {
    auto* cmd = app.add_subcommand("invert", "measurement-guided diffusion inversion");
    auto opt = std::make_shared<InvertOpts>();
    cmd->add_option("--field", opt->field, "local field QVOL")->required();
    cmd->add_option("--model", opt->model_path, "trained QDM model")->required();
    cmd->add_option("--xi1", opt->xi1, "field-consistency weight")->capture_default_str();
    cmd->add_option("--xi2", opt->xi2, "initial-estimate weight")->capture_default_str();
    cmd->add_option("--lambda", opt->lambda, "total-variation weight")->capture_default_str();
    cmd->add_option("--tkd-threshold", opt->tkd_threshold)->capture_default_str();
    cmd->add_option("--tv-epsilon", opt->tv_epsilon)->capture_default_str();
    cmd->add_option("--ddim-steps", opt->ddim_steps)->capture_default_str();
    cmd->add_option("--eta", opt->eta, "sampling stochasticity in [0,1]")->capture_default_str();
    cmd->add_option("--jacobian", opt->jacobian, "frozen | exact")
        ->check(CLI::IsMember({"frozen", "exact"}))
        ->capture_default_str();
    cmd->add_flag("--normalize-grads", opt->normalize_grads,
                  "scale measurement gradients by 1/residual norm");
    cmd->add_option("--patch", opt->patch)->capture_default_str();
    cmd->add_option("--overlap", opt->overlap)->capture_default_str();
    cmd->add_option("--model-voxel", opt->model_voxel, "model grid voxel size in mm")
        ->delimiter(',')
        ->capture_default_str();
    cmd->add_option("--seed", opt->seed)->capture_default_str();
    cmd->add_option("--diagnostics", opt->diagnostics, "per-step loss trace file");
    cmd->add_option("--out", opt->out, "output chi QVOL path")->required();

    cmd->callback([opt]() {
        print_header("invert");
        ConfigPrinter cp;
        cp.add("field", opt->field);
        cp.add("model", opt->model_path);
        cp.add("xi1", opt->xi1);
        cp.add("xi2", opt->xi2);
        cp.add("lambda", opt->lambda);
        cp.add("tkd-threshold", opt->tkd_threshold);
        cp.add("tv-epsilon", opt->tv_epsilon);
        cp.add("ddim-steps", static_cast<long>(opt->ddim_steps));
        cp.add("eta", opt->eta);
        cp.add("jacobian", opt->jacobian);
        cp.add("normalize-grads", std::string(opt->normalize_grads ? "true" : "false"));
        cp.add("patch", static_cast<long>(opt->patch));
        cp.add("overlap", static_cast<long>(opt->overlap));
        cp.add("model-voxel", opt->model_voxel);
        cp.add("seed", static_cast<long>(opt->seed));
        cp.add("out", opt->out);

        const qsm::Volume phi = qsm::load_volume(opt->field);
        const qsm::DipoleKernel D = qsm::dipole_kernel(phi.dims, phi.voxel_size, phi.b0_dir);

        qsm::GuidanceConfig cfg;
        cfg.xi1 = opt->xi1;
        cfg.xi2 = opt->xi2;
        cfg.lambda = opt->lambda;
        cfg.tkd_threshold = opt->tkd_threshold;
        cfg.tv_epsilon = opt->tv_epsilon;
        cfg.ddim_steps = opt->ddim_steps;
        cfg.eta = opt->eta;
        cfg.jacobian_mode =
            opt->jacobian == "exact" ? qsm::JacobianMode::exact : qsm::JacobianMode::frozen;
        cfg.normalize_gradients = opt->normalize_grads;

        const qsm::Dims3 core = qsm::model_grid_dims(
            phi.dims, phi.voxel_size, {opt->model_voxel[0], opt->model_voxel[1], opt->model_voxel[2]});
        qsm::Dims3 model_dims = core;
        bool padded = false;
        for (int i = 0; i < 3; ++i)
            if (model_dims[i] < opt->patch) {
                model_dims[i] = opt->patch;
                padded = true;
            }
        if (padded)
            std::printf("NOTE: model grid %d,%d,%d padded to %d,%d,%d to fit the patch size; "
                        "output is cropped back\n",
                        core[0], core[1], core[2], model_dims[0], model_dims[1], model_dims[2]);

        const qsm::Measurement meas =
            qsm::make_measurement(phi, D, opt->tkd_threshold, core, model_dims);
        const qsm::DenoiserModel model = qsm::load_model(opt->model_path);
        qsm::SampleResult res =
            qsm::sample(meas, model, cfg, {opt->patch, opt->patch, opt->patch},
                        {opt->overlap, opt->overlap, opt->overlap}, opt->seed);

        qsm::Volume out = qsm::crop_center(res.x0, core);
        out.b0_dir = phi.b0_dir;
        // carry the measurement support onto the model grid for evaluation
        if (phi.has_mask()) {
            qsm::Volume m = qsm::make_volume(phi.dims, phi.voxel_size, phi.b0_dir);
            m.mask = phi.mask;
            m.data.assign(m.size(), 0.0);
            for (std::size_t i = 0; i < m.size(); ++i) m.data[i] = phi.mask[i] ? 1.0 : 0.0;
            qsm::Volume mr = qsm::resample_trilinear(m, core);
            out.mask.resize(out.size());
            for (std::size_t i = 0; i < out.size(); ++i) out.mask[i] = mr.data[i] >= 0.5 ? 1 : 0;
        }
        qsm::save_volume(out, opt->out);
        std::printf("wrote %s\n", opt->out.c_str());

        if (!opt->diagnostics.empty()) {
            std::ofstream diag(opt->diagnostics, std::ios::trunc);
            if (!diag) throw qsm::io_error("cannot write " + opt->diagnostics);
            diag << "# t dipinv trans tv\n";
            for (const auto& d : res.trace)
                diag << d.t << " " << d.dipinv << " " << d.trans << " " << d.tv << "\n";
            std::printf("wrote %s\n", opt->diagnostics.c_str());
        }
        if (!res.trace.empty())
            std::printf("dipinv residual: first %.6g final %.6g\n", res.trace.front().dipinv,
                        res.trace.back().dipinv);
    });
    return 0;
}

// ---------------------------------------------------------------- eval

struct EvalOpts {
    std::string pred, ref, out;
    bool no_mask = false;
};

int cmd_eval(CLI::App& app) {
    auto* cmd = app.add_subcommand("eval", "PSNR / SSIM / HFEN report");
    auto opt = std::make_shared<EvalOpts>();
    cmd->add_option("--pred", opt->pred, "reconstruction QVOL")->required();
    cmd->add_option("--ref", opt->ref, "reference QVOL")->required();
    cmd->add_flag("--no-mask", opt->no_mask, "evaluate over all voxels");
    cmd->add_option("--out", opt->out, "also write the JSON report here");

    cmd->callback([opt]() {
        print_header("eval");
        ConfigPrinter cp;
        cp.add("pred", opt->pred);
        cp.add("ref", opt->ref);
        cp.add("no-mask", std::string(opt->no_mask ? "true" : "false"));
        cp.add("out", opt->out.empty() ? "(stdout only)" : opt->out);

        const qsm::Volume pred = qsm::load_volume(opt->pred);
        const qsm::Volume ref = qsm::load_volume(opt->ref);
        std::vector<std::uint8_t> mask;
        if (!opt->no_mask) {
            if (ref.has_mask())
                mask = ref.mask;
            else if (pred.has_mask())
                mask = pred.mask;
        }
        const qsm::metrics::MetricReport r = qsm::metrics::evaluate(pred, ref, mask);

        nlohmann::json j{{"psnr", r.psnr}, {"ssim", r.ssim}, {"hfen", r.hfen}, {"voxels", r.voxels}};
        const std::string text = j.dump();
        std::printf("%s\n", text.c_str());
        if (!opt->out.empty()) {
            std::ofstream f(opt->out, std::ios::trunc);
            if (!f) throw qsm::io_error("cannot write " + opt->out);
            f << text << "\n";
        }
    });
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"qsmdiff: patch-diffusion QSM reconstruction toolkit"};
    app.require_subcommand(1);
    app.set_config("--config", "", "key = value config file; command-line flags win");
    app.get_config_formatter_base()->comment('#');

    // applied the moment it is parsed, before any subcommand callback runs
    app.add_option_function<int>(
           "--threads",
           [](int n) {
               if (n > 0) qsm::par::set_threads(n);
               std::printf("  %-18s = %d\n", "threads", n);
           },
           "cap worker threads (0 = library default); results are identical for any value")
        ->trigger_on_parse();

    cmd_phantom(app);
    cmd_forward(app);
    cmd_tkd(app);
    cmd_train(app);
    cmd_invert(app);
    cmd_eval(app);
    for (auto* sub : app.get_subcommands({})) sub->fallthrough();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int rc = app.exit(e);
        return rc == 0 ? 0 : kExitUsage;
    } catch (const qsm::parameter_error& e) {
        std::fprintf(stderr, "parameter error: %s\n", e.what());
        return kExitUsage;
    } catch (const qsm::numeric_error& e) {
        std::fprintf(stderr, "numeric error: %s\n", e.what());
        return kExitNumeric;
    } catch (const qsm::capability_error& e) {
        std::fprintf(stderr, "capability error: %s\n", e.what());
        return kExitUsage;
    } catch (const qsm::data_error& e) {
        std::fprintf(stderr, "data error: %s\n", e.what());
        return kExitData;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitData;
    }
    return 0;
}
