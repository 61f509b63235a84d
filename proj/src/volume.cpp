#include "qsm/volume.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>

#include "qsm/errors.hpp"

namespace qsm {

Volume make_volume(const Dims3& dims, const std::array<double, 3>& voxel_size,
                   const std::array<double, 3>& b0_dir, double fill) {
    for (int i = 0; i < 3; ++i) {
        if (dims[i] <= 0) throw parameter_error("volume dims must be positive");
        if (!(voxel_size[i] > 0.0)) throw parameter_error("voxel size must be positive");
    }
    Volume v;
    v.dims = dims;
    v.voxel_size = voxel_size;
    v.b0_dir = b0_dir;
    v.data.assign(volume_of(dims), fill);
    return v;
}

void validate(const Volume& v) {
    for (int i = 0; i < 3; ++i)
        if (v.dims[i] <= 0) throw parameter_error("volume dims must be positive");
    const double n = std::sqrt(v.b0_dir[0] * v.b0_dir[0] + v.b0_dir[1] * v.b0_dir[1] +
                               v.b0_dir[2] * v.b0_dir[2]);
    if (std::abs(n - 1.0) > 1e-6) throw parameter_error("b0_dir must be a unit vector");
    if (v.data.size() != volume_of(v.dims)) throw data_error("payload length does not match dims");
    for (double x : v.data)
        if (!std::isfinite(x)) throw data_error("volume contains non-finite values");
    if (v.has_mask() && v.mask.size() != v.data.size())
        throw data_error("mask length does not match dims");
}

namespace {

void put_u32(std::string& s, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) s.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f32(std::string& s, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(s, bits);
}

struct Reader {
    const std::string& buf;
    std::size_t pos = 0;
    explicit Reader(const std::string& b) : buf(b) {}
    void need(std::size_t n) const {
        if (pos + n > buf.size()) throw format_error("truncated QVOL file");
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[pos + i])) << (8 * i);
        pos += 4;
        return v;
    }
    float f32() {
        std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return static_cast<std::uint8_t>(buf[pos++]);
    }
};

} // namespace

void save_volume(const Volume& v, const std::string& path) {
    validate(v);

    std::string out;
    out.reserve(28 + v.size() * 4 + (v.has_mask() ? v.size() : 0));
    out += "QVL1";
    put_u32(out, 1);
    for (int i = 0; i < 3; ++i) put_u32(out, static_cast<std::uint32_t>(v.dims[i]));
    for (int i = 0; i < 3; ++i) put_f32(out, static_cast<float>(v.voxel_size[i]));
    for (int i = 0; i < 3; ++i) put_f32(out, static_cast<float>(v.b0_dir[i]));
    out.push_back(v.has_mask() ? 1 : 0);
    for (double x : v.data) put_f32(out, static_cast<float>(x));
    if (v.has_mask())
        for (std::uint8_t m : v.mask) out.push_back(static_cast<char>(m ? 1 : 0));

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw io_error("cannot open for writing: " + path);
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
    if (!f) throw io_error("write failed: " + path);
}

Volume load_volume(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw io_error("cannot open: " + path);
    std::string buf((std::istreambuf_iterator<char>(f)), std::istreambuf_iterator<char>());

    if (buf.size() < 4 || buf.compare(0, 4, "QVL1") != 0)
        throw format_error("bad QVOL magic in " + path);
    Reader r(buf);
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != 1) throw format_error("unsupported QVOL version");

    Volume v;
    for (int i = 0; i < 3; ++i) {
        const std::uint32_t d = r.u32();
        if (d == 0 || d > (1u << 24)) throw format_error("bad QVOL dims");
        v.dims[i] = static_cast<int>(d);
    }
    for (int i = 0; i < 3; ++i) v.voxel_size[i] = r.f32();
    for (int i = 0; i < 3; ++i) v.b0_dir[i] = r.f32();
    const bool has_mask = r.u8() != 0;

    const std::size_t n = volume_of(v.dims);
    v.data.resize(n);
    r.need(n * 4);
    for (std::size_t i = 0; i < n; ++i) v.data[i] = r.f32();
    if (has_mask) {
        v.mask.resize(n);
        r.need(n);
        for (std::size_t i = 0; i < n; ++i) v.mask[i] = r.u8() ? 1 : 0;
    }
    if (r.pos != buf.size()) throw format_error("trailing bytes in QVOL file");

    for (double x : v.data)
        if (!std::isfinite(x)) throw data_error("QVOL payload contains non-finite values");
    validate(v);
    return v;
}

Volume normalize(const Volume& v, const NormalizationSpec& spec, long* clipped) {
    if (!(spec.chi_scale > 0.0)) throw parameter_error("chi_scale must be positive");
    Volume out = v;
    long nclip = 0;
    const double inv = 1.0 / spec.chi_scale;
    for (double& x : out.data) {
        double u = x * inv;
        if (u > 1.0) {
            u = 1.0;
            ++nclip;
        } else if (u < -1.0) {
            u = -1.0;
            ++nclip;
        }
        x = u;
    }
    if (clipped) *clipped = nclip;
    return out;
}

Volume denormalize(const Volume& v, const NormalizationSpec& spec) {
    if (!(spec.chi_scale > 0.0)) throw parameter_error("chi_scale must be positive");
    for (double x : v.data)
        if (!(x >= -1.0 && x <= 1.0))
            throw parameter_error("denormalize input outside [-1, 1]");
    return scaled(v, spec.chi_scale);
}

Volume scaled(const Volume& v, double factor) {
    Volume out = v;
    for (double& x : out.data) x *= factor;
    return out;
}

Volume pad_center(const Volume& v, const Dims3& target) {
    for (int i = 0; i < 3; ++i)
        if (target[i] < v.dims[i]) throw parameter_error("pad target smaller than volume");
    if (target == v.dims) return v;

    Volume out = make_volume(target, v.voxel_size, v.b0_dir, 0.0);
    if (v.has_mask()) out.mask.assign(out.size(), 0);
    const int ox = (target[0] - v.dims[0]) / 2;
    const int oy = (target[1] - v.dims[1]) / 2;
    const int oz = (target[2] - v.dims[2]) / 2;
    for (int z = 0; z < v.dims[2]; ++z)
        for (int y = 0; y < v.dims[1]; ++y) {
            const std::size_t src = v.index(0, y, z);
            const std::size_t dst = out.index(ox, y + oy, z + oz);
            std::copy_n(v.data.begin() + src, v.dims[0], out.data.begin() + dst);
            if (v.has_mask()) std::copy_n(v.mask.begin() + src, v.dims[0], out.mask.begin() + dst);
        }
    return out;
}

Volume crop_center(const Volume& v, const Dims3& target) {
    for (int i = 0; i < 3; ++i)
        if (target[i] > v.dims[i]) throw parameter_error("crop target larger than volume");
    if (target == v.dims) return v;

    Volume out = make_volume(target, v.voxel_size, v.b0_dir, 0.0);
    if (v.has_mask()) out.mask.assign(out.size(), 0);
    const int ox = (v.dims[0] - target[0]) / 2;
    const int oy = (v.dims[1] - target[1]) / 2;
    const int oz = (v.dims[2] - target[2]) / 2;
    for (int z = 0; z < target[2]; ++z)
        for (int y = 0; y < target[1]; ++y) {
            const std::size_t src = v.index(ox, y + oy, z + oz);
            const std::size_t dst = out.index(0, y, z);
            std::copy_n(v.data.begin() + src, target[0], out.data.begin() + dst);
            if (v.has_mask()) std::copy_n(v.mask.begin() + src, target[0], out.mask.begin() + dst);
        }
    return out;
}

} // namespace qsm
