#include "qsm/net.hpp"

#include <cmath>

#include "qsm/errors.hpp"
#include "qsm/rng.hpp"

namespace qsm {

namespace {

void check_arch(const DenoiserArch& a) {
    if (a.width <= 0 || a.blocks <= 0 || a.time_embed <= 0)
        throw parameter_error("architecture dims must be positive");
    if (a.time_embed % 2 != 0) throw parameter_error("time_embed must be even");
}

inline double sigmoid(double z) { return 1.0 / (1.0 + std::exp(-z)); }
inline double swish(double z) { return z * sigmoid(z); }
inline double swish_grad(double z) {
    const double s = sigmoid(z);
    return s * (1.0 + z * (1.0 - s));
}

void sinusoidal_embedding(int t, int dim, double* out) {
    const int half = dim / 2;
    for (int i = 0; i < half; ++i) {
        const double freq = std::exp(-std::log(10000.0) * i / half);
        out[2 * i] = std::sin(t * freq);
        out[2 * i + 1] = std::cos(t * freq);
    }
}

// dense: out[o] = b[o] + sum_i w[o*in + i] x[i]
void dense_forward(const double* w, const double* b, int n_out, int n_in, const double* x,
                   double* out) {
    for (int o = 0; o < n_out; ++o) {
        double acc = b[o];
        const double* row = w + static_cast<std::size_t>(o) * n_in;
        for (int i = 0; i < n_in; ++i) acc += row[i] * x[i];
        out[o] = acc;
    }
}

} // namespace

ParamLayout make_param_layout(const DenoiserArch& arch) {
    check_arch(arch);
    const std::size_t F = arch.width, E = arch.time_embed;
    ParamLayout L;
    std::size_t p = 0;
    L.stem_w = p, p += F * 1 * 27;
    L.stem_b = p, p += F;
    L.block.resize(arch.blocks);
    for (auto& b : L.block) {
        b.c1w = p, p += F * F * 27;
        b.c1b = p, p += F;
        b.c2w = p, p += F * F * 27;
        b.c2b = p, p += F;
    }
    L.head_w = p, p += 1 * F * 27;
    L.head_b = p, p += 1;
    L.t1w = p, p += E * E;
    L.t1b = p, p += E;
    L.t2w = p, p += F * E;
    L.t2b = p, p += F;
    L.total = p;
    return L;
}

std::size_t param_count(const DenoiserArch& arch) { return make_param_layout(arch).total; }

std::vector<float> init_params(const DenoiserArch& arch, std::uint64_t seed) {
    const ParamLayout L = make_param_layout(arch);
    std::vector<float> theta(L.total, 0.0f);
    RandomStream rng(mix_seed(seed, 0x696e6974ull));

    auto he_fill = [&](std::size_t off, std::size_t n, std::size_t fan_in) {
        const double s = std::sqrt(2.0 / static_cast<double>(fan_in));
        for (std::size_t i = 0; i < n; ++i) theta[off + i] = static_cast<float>(s * rng.normal());
    };

    const std::size_t F = arch.width, E = arch.time_embed;
    he_fill(L.stem_w, F * 27, 27);
    for (const auto& b : L.block) {
        he_fill(b.c1w, F * F * 27, F * 27);
        he_fill(b.c2w, F * F * 27, F * 27);
    }
    // head stays zero so a fresh network predicts zero noise
    he_fill(L.t1w, E * E, E);
    he_fill(L.t2w, F * E, E);
    return theta;
}

NetWeights promote_weights(const DenoiserArch& arch, std::span<const float> theta) {
    NetWeights W;
    W.arch = arch;
    W.layout = make_param_layout(arch);
    if (theta.size() != W.layout.total) throw parameter_error("theta length does not match arch");
    W.w.assign(theta.begin(), theta.end());
    return W;
}

void net_forward(const NetWeights& W, std::span<const double> x, const Dims3& dims, int t,
                 NetTape* tape, std::span<double> eps_out) {
    const int F = W.arch.width, B = W.arch.blocks, E = W.arch.time_embed;
    const std::size_t N = volume_of(dims);
    if (x.size() != N || eps_out.size() != N) throw parameter_error("net input size mismatch");
    const ParamLayout& L = W.layout;
    const double* w = W.w.data();

    // time path
    std::vector<double> emb(E), z1(E), h1(E), tbias(F);
    sinusoidal_embedding(t, E, emb.data());
    dense_forward(w + L.t1w, w + L.t1b, E, E, emb.data(), z1.data());
    for (int i = 0; i < E; ++i) h1[i] = swish(z1[i]);
    dense_forward(w + L.t2w, w + L.t2b, F, E, h1.data(), tbias.data());

    std::vector<double> h(static_cast<std::size_t>(F) * N);
    kernels::conv3_forward(x.data(), 1, dims, w + L.stem_w, w + L.stem_b, F, h.data());

    if (tape) {
        tape->dims = dims;
        tape->t = t;
        tape->x.assign(x.begin(), x.end());
        tape->h.clear();
        tape->u.clear();
        tape->s.clear();
        tape->h.push_back(h);
        tape->emb = emb;
        tape->z1 = z1;
        tape->h1 = h1;
        tape->tbias = tbias;
    }

    std::vector<double> u(h.size()), s(h.size()), v(h.size());
    for (int b = 0; b < B; ++b) {
        const auto& off = L.block[b];
        // conv bias and the time bias add at the same point; fold them
        std::vector<double> bias(F);
        for (int c = 0; c < F; ++c) bias[c] = w[off.c1b + c] + tbias[c];
        kernels::conv3_forward(h.data(), F, dims, w + off.c1w, bias.data(), F, u.data());

        const long n = static_cast<long>(u.size());
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) s[i] = swish(u[i]);

        kernels::conv3_forward(s.data(), F, dims, w + off.c2w, w + off.c2b, F, v.data());
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) h[i] += v[i];

        if (tape) {
            tape->u.push_back(u);
            tape->s.push_back(s);
            tape->h.push_back(h);
        }
    }

    kernels::conv3_forward(h.data(), F, dims, w + L.head_w, w + L.head_b, 1, eps_out.data());

    for (double e : eps_out)
        if (!std::isfinite(e)) throw numeric_error("non-finite network output");
}

void net_backward(const NetWeights& W, const NetTape& tape, std::span<const double> gout,
                  std::vector<double>* grad_theta, std::vector<double>* grad_x) {
    const int F = W.arch.width, B = W.arch.blocks, E = W.arch.time_embed;
    const Dims3 dims = tape.dims;
    const std::size_t N = volume_of(dims);
    const ParamLayout& L = W.layout;
    const double* w = W.w.data();

    if (grad_theta) grad_theta->assign(L.total, 0.0);
    double* gt = grad_theta ? grad_theta->data() : nullptr;

    // head
    if (gt)
        kernels::conv3_weight_grad(tape.h[B].data(), F, dims, gout.data(), 1, gt + L.head_w,
                                   gt + L.head_b);
    std::vector<double> wt(static_cast<std::size_t>(F) * F * 27);
    std::vector<double> gh(static_cast<std::size_t>(F) * N);
    kernels::conv3_flip_transpose(w + L.head_w, 1, F, wt.data());
    kernels::conv3_forward(gout.data(), 1, dims, wt.data(), nullptr, F, gh.data());

    std::vector<double> gtbias(F, 0.0);
    std::vector<double> gu(gh.size()), gs(gh.size()), tmp(gh.size());

    for (int b = B - 1; b >= 0; --b) {
        const auto& off = L.block[b];
        // residual: gh feeds both the skip path and conv2
        if (gt)
            kernels::conv3_weight_grad(tape.s[b].data(), F, dims, gh.data(), F, gt + off.c2w,
                                       gt + off.c2b);
        kernels::conv3_flip_transpose(w + off.c2w, F, F, wt.data());
        kernels::conv3_forward(gh.data(), F, dims, wt.data(), nullptr, F, gs.data());

        const long n = static_cast<long>(gs.size());
        const double* u = tape.u[b].data();
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) gu[i] = gs[i] * swish_grad(u[i]);

        if (gt) {
            kernels::conv3_weight_grad(tape.h[b].data(), F, dims, gu.data(), F, gt + off.c1w,
                                       gt + off.c1b);
            // the time bias enters where the conv bias does
            for (int c = 0; c < F; ++c) gtbias[c] += gt[off.c1b + c];
        } else {
            for (int c = 0; c < F; ++c) {
                const double* g = gu.data() + static_cast<std::size_t>(c) * N;
                double acc = 0.0;
                for (std::size_t i = 0; i < N; ++i) acc += g[i];
                gtbias[c] += acc;
            }
        }

        kernels::conv3_flip_transpose(w + off.c1w, F, F, wt.data());
        kernels::conv3_forward(gu.data(), F, dims, wt.data(), nullptr, F, tmp.data());
#pragma omp parallel for schedule(static)
        for (long i = 0; i < n; ++i) gh[i] += tmp[i];
    }

    // stem
    if (gt) kernels::conv3_weight_grad(tape.x.data(), 1, dims, gh.data(), F, gt + L.stem_w, gt + L.stem_b);
    if (grad_x) {
        grad_x->resize(N);
        std::vector<double> wts(static_cast<std::size_t>(F) * 27);
        kernels::conv3_flip_transpose(w + L.stem_w, F, 1, wts.data());
        kernels::conv3_forward(gh.data(), F, dims, wts.data(), nullptr, 1, grad_x->data());
    }

    // time path (tbias also shifts x_t's gradient? no: tbias depends only on t)
    if (gt) {
        for (int c = 0; c < F; ++c) {
            gt[L.t2b + c] = gtbias[c];
            for (int i = 0; i < E; ++i)
                gt[L.t2w + static_cast<std::size_t>(c) * E + i] = gtbias[c] * tape.h1[i];
        }
        std::vector<double> gh1(E, 0.0);
        for (int c = 0; c < F; ++c)
            for (int i = 0; i < E; ++i)
                gh1[i] += w[L.t2w + static_cast<std::size_t>(c) * E + i] * gtbias[c];
        for (int i = 0; i < E; ++i) {
            const double gz = gh1[i] * swish_grad(tape.z1[i]);
            gt[L.t1b + i] = gz;
            for (int j = 0; j < E; ++j)
                gt[L.t1w + static_cast<std::size_t>(i) * E + j] = gz * tape.emb[j];
        }
    }
}

double loss_and_grads(const DenoiserArch& arch, std::span<const float> theta,
                      const NoiseSchedule& sched, std::span<const TrainSample> batch,
                      const Dims3& patch_dims, std::vector<double>& grad) {
    if (batch.empty()) throw parameter_error("empty batch");
    const NetWeights W = promote_weights(arch, theta);
    const std::size_t N = volume_of(patch_dims);
    const long nb = static_cast<long>(batch.size());
    for (const TrainSample& smp : batch)
        if (smp.x0.size() != N || smp.eps.size() != N || smp.t < 1 || smp.t > sched.steps)
            throw parameter_error("sample does not match patch dims / schedule");

    std::vector<double> losses(nb, 0.0);
    std::vector<std::vector<double>> grads(nb);
    bool failed = false; // exceptions must not escape the parallel region

#pragma omp parallel for schedule(dynamic, 1)
    for (long k = 0; k < nb; ++k) {
        try {
            const TrainSample& smp = batch[k];
            std::vector<double> xt(N), eps_hat(N);
            q_sample(smp.x0, smp.eps, smp.t, sched, xt);

            NetTape tape;
            net_forward(W, xt, patch_dims, smp.t, &tape, eps_hat);

            double l = 0.0;
            std::vector<double> gout(N);
            const double scale = 2.0 / static_cast<double>(N);
            for (std::size_t i = 0; i < N; ++i) {
                const double r = eps_hat[i] - smp.eps[i];
                l += r * r;
                gout[i] = scale * r;
            }
            losses[k] = l / static_cast<double>(N);
            net_backward(W, tape, gout, &grads[k], nullptr);
        } catch (...) {
#pragma omp atomic write
            failed = true;
        }
    }
    if (failed) throw numeric_error("non-finite values during the batch pass");

    // fixed-order reduction over the batch
    grad.assign(W.layout.total, 0.0);
    double loss = 0.0;
    const double inv_b = 1.0 / static_cast<double>(nb);
    for (long k = 0; k < nb; ++k) {
        loss += losses[k];
        for (std::size_t i = 0; i < grad.size(); ++i) grad[i] += grads[k][i];
    }
    loss *= inv_b;
    for (double& g : grad) g *= inv_b;
    if (!std::isfinite(loss)) throw numeric_error("non-finite training loss");
    return loss;
}

} // namespace qsm
