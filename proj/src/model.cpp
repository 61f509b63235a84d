#include "qsm/model.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "qsm/errors.hpp"

namespace qsm {

DenoiserModel make_model(const DenoiserArch& arch, const NoiseSchedule& sched, double chi_scale,
                         std::uint64_t init_seed) {
    if (!(chi_scale > 0.0)) throw parameter_error("chi_scale must be positive");
    DenoiserModel m;
    m.arch = arch;
    m.theta = init_params(arch, init_seed);
    m.sched = sched;
    m.chi_scale = static_cast<double>(static_cast<float>(chi_scale));
    return m;
}

std::vector<double> forward_eps(const DenoiserModel& m, std::span<const double> x_t,
                                const Dims3& dims, int t) {
    if (t < 1 || t > m.sched.steps) throw parameter_error("timestep out of schedule range");
    const NetWeights W = promote_weights(m.arch, m.theta);
    std::vector<double> out(volume_of(dims));
    net_forward(W, x_t, dims, t, nullptr, out);
    return out;
}

namespace {

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_u64(std::string& s, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& s, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(s, bits);
}
void put_f64(std::string& s, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    put_u64(s, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw format_error("truncated QDM file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint64_t u64() {
        need(8);
        std::uint64_t v = 0;
        for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 8;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    double f64() {
        std::uint64_t bits = u64();
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

} // namespace

void save_model(const DenoiserModel& m, const std::string& path) {
    if (m.theta.size() != param_count(m.arch)) throw data_error("theta length does not match arch");
    for (float t : m.theta)
        if (!std::isfinite(t)) throw data_error("model parameters contain non-finite values");

    std::string out;
    out.reserve(64 + m.theta.size() * 4);
    out += "QDM1";
    put_u32(out, 1);
    put_u32(out, static_cast<std::uint32_t>(m.sched.steps));
    put_f64(out, m.sched.beta_start);
    put_f64(out, m.sched.beta_end);
    put_f32(out, static_cast<float>(m.chi_scale));
    put_u32(out, static_cast<std::uint32_t>(m.arch.width));
    put_u32(out, static_cast<std::uint32_t>(m.arch.blocks));
    put_u32(out, static_cast<std::uint32_t>(m.arch.time_embed));
    put_u64(out, m.theta.size());
    for (float t : m.theta) put_f32(out, t);

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error("write failed: " + path);
}

DenoiserModel load_model(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 4 || buf.compare(0, 4, "QDM1") != 0)
        throw format_error("bad QDM magic in " + path);
    Reader r{buf, 4};
    if (r.u32() != 1) throw format_error("unsupported QDM version");

    DenoiserModel m;
    const int T = static_cast<int>(r.u32());
    const double beta_start = r.f64();
    const double beta_end = r.f64();
    m.chi_scale = r.f32();
    m.arch.width = static_cast<int>(r.u32());
    m.arch.blocks = static_cast<int>(r.u32());
    m.arch.time_embed = static_cast<int>(r.u32());
    const std::uint64_t n = r.u64();
    if (n != param_count(m.arch)) throw format_error("QDM param count does not match arch");

    m.sched = make_schedule(T, beta_start, beta_end);
    m.theta.resize(n);
    r.need(n * 4);
    for (std::uint64_t i = 0; i < n; ++i) m.theta[i] = r.f32();
    if (r.pos != buf.size()) throw format_error("trailing bytes in QDM file");
    for (float t : m.theta)
        if (!std::isfinite(t)) throw data_error("QDM parameters contain non-finite values");
    return m;
}

NetDenoiser::NetDenoiser(const DenoiserModel& m) : weights_(promote_weights(m.arch, m.theta)) {}

void NetDenoiser::predict(std::span<const double> x, const Dims3& dims, int t,
                          std::span<double> eps_out) const {
    net_forward(weights_, x, dims, t, nullptr, eps_out);
}

void NetDenoiser::input_vjp(std::span<const double> x, const Dims3& dims, int t,
                            std::span<const double> cotangent, std::span<double> out) const {
    NetTape tape;
    std::vector<double> eps(x.size());
    net_forward(weights_, x, dims, t, &tape, eps);
    std::vector<double> gx;
    net_backward(weights_, tape, cotangent, nullptr, &gx);
    std::copy(gx.begin(), gx.end(), out.begin());
}

} // namespace qsm
