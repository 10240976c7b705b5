#include "regseg/io.hpp"

#include <algorithm>
#include <bit>
#include <cstring>
#include <fstream>
#include <vector>

static_assert(std::endian::native == std::endian::little,
              "file formats are little-endian; big-endian hosts are not supported");

namespace regseg {

namespace {

std::vector<char> read_all(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError(IoCode::io_failure, "cannot open " + path);
    f.seekg(0, std::ios::end);
    const std::streamoff len = f.tellg();
    f.seekg(0);
    std::vector<char> buf(static_cast<std::size_t>(len));
    if (len > 0) f.read(buf.data(), len);
    if (!f) throw IoError(IoCode::io_failure, "read failed for " + path);
    return buf;
}

void write_all(const std::string& path, const std::vector<char>& buf) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError(IoCode::io_failure, "cannot open " + path + " for writing");
    f.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!f) throw IoError(IoCode::io_failure, "write failed for " + path);
}

class Reader {
public:
    Reader(const std::vector<char>& buf, const std::string& path) : buf_(buf), path_(path) {}

    void expect_magic(const char magic[4], const char* format) {
        char m[4];
        bytes(m, 4);
        if (std::memcmp(m, magic, 4) != 0)
            throw IoError(IoCode::bad_magic,
                          path_ + ": bad magic, not a " + std::string(format) + " file");
    }
    template <typename T>
    T scalar() {
        T v;
        bytes(reinterpret_cast<char*>(&v), sizeof(T));
        return v;
    }
    template <typename T>
    void array(T* out, std::size_t count) {
        bytes(reinterpret_cast<char*>(out), count * sizeof(T));
    }
    void seek(std::size_t pos) {
        if (pos > buf_.size())
            throw IoError(IoCode::truncated, path_ + ": truncated payload");
        pos_ = pos;
    }
    std::size_t remaining() const { return buf_.size() - pos_; }

private:
    void bytes(char* out, std::size_t count) {
        if (pos_ + count > buf_.size())
            throw IoError(IoCode::truncated, path_ + ": truncated payload");
        std::memcpy(out, buf_.data() + pos_, count);
        pos_ += count;
    }
    const std::vector<char>& buf_;
    std::string path_;
    std::size_t pos_ = 0;
};

class Writer {
public:
    void magic(const char m[4]) { raw(m, 4); }
    template <typename T>
    void scalar(T v) {
        raw(reinterpret_cast<const char*>(&v), sizeof(T));
    }
    template <typename T>
    void array(const T* v, std::size_t count) {
        raw(reinterpret_cast<const char*>(v), count * sizeof(T));
    }
    std::vector<char> take() { return std::move(buf_); }

private:
    void raw(const char* p, std::size_t count) { buf_.insert(buf_.end(), p, p + count); }
    std::vector<char> buf_;
};

void write_v3d_header(Writer& w, std::uint8_t dtype, Dims d, Spacing s) {
    w.magic("V3D1");
    w.scalar<std::uint8_t>(dtype);
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(d.nx));
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(d.ny));
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(d.nz));
    w.scalar<float>(static_cast<float>(s.sx));
    w.scalar<float>(static_cast<float>(s.sy));
    w.scalar<float>(static_cast<float>(s.sz));
}

struct V3dHeader {
    std::uint8_t dtype;
    Dims dims;
    Spacing spacing;
};

V3dHeader read_v3d_header(Reader& r) {
    r.expect_magic("V3D1", "V3D");
    V3dHeader h;
    h.dtype = r.scalar<std::uint8_t>();
    h.dims.nx = static_cast<int>(r.scalar<std::uint32_t>());
    h.dims.ny = static_cast<int>(r.scalar<std::uint32_t>());
    h.dims.nz = static_cast<int>(r.scalar<std::uint32_t>());
    h.spacing.sx = r.scalar<float>();
    h.spacing.sy = r.scalar<float>();
    h.spacing.sz = r.scalar<float>();
    if (h.dims.nx <= 0 || h.dims.ny <= 0 || h.dims.nz <= 0 || h.spacing.sx <= 0 ||
        h.spacing.sy <= 0 || h.spacing.sz <= 0)
        throw IoError(IoCode::bad_header, "V3D header has non-positive dims or spacing");
    return h;
}

} // namespace

void write_v3d(const std::string& path, const Volume& v) {
    Writer w;
    write_v3d_header(w, 0, v.dims, v.spacing);
    std::vector<float> payload(v.data.size());
    for (std::size_t i = 0; i < v.data.size(); ++i) payload[i] = static_cast<float>(v.data[i]);
    w.array(payload.data(), payload.size());
    write_all(path, w.take());
}

void write_v3d(const std::string& path, const LabelVolume& v) {
    const std::int32_t maxlab =
        v.data.empty() ? 0 : *std::max_element(v.data.begin(), v.data.end());
    Writer w;
    if (maxlab <= 255) {
        write_v3d_header(w, 1, v.dims, v.spacing);
        std::vector<std::uint8_t> payload(v.data.size());
        for (std::size_t i = 0; i < v.data.size(); ++i)
            payload[i] = static_cast<std::uint8_t>(v.data[i]);
        w.array(payload.data(), payload.size());
    } else {
        write_v3d_header(w, 2, v.dims, v.spacing);
        w.array(v.data.data(), v.data.size());
    }
    write_all(path, w.take());
}

Volume read_v3d_volume(const std::string& path) {
    const auto buf = read_all(path);
    Reader r(buf, path);
    const V3dHeader h = read_v3d_header(r);
    Volume v(h.dims, 0.0, h.spacing);
    const std::size_t n = h.dims.voxel_count();
    if (h.dtype == 0) {
        std::vector<float> payload(n);
        r.array(payload.data(), n);
        for (std::size_t i = 0; i < n; ++i) v.data[i] = payload[i];
    } else if (h.dtype == 1) {
        std::vector<std::uint8_t> payload(n);
        r.array(payload.data(), n);
        for (std::size_t i = 0; i < n; ++i) v.data[i] = payload[i];
    } else if (h.dtype == 2) {
        std::vector<std::int32_t> payload(n);
        r.array(payload.data(), n);
        for (std::size_t i = 0; i < n; ++i) v.data[i] = payload[i];
    } else {
        throw IoError(IoCode::unsupported_dtype,
                      path + ": unsupported V3D dtype " + std::to_string(h.dtype));
    }
    return v;
}

LabelVolume read_v3d_labels(const std::string& path) {
    const auto buf = read_all(path);
    Reader r(buf, path);
    const V3dHeader h = read_v3d_header(r);
    const std::size_t n = h.dims.voxel_count();
    LabelVolume v(h.dims, 2, h.spacing);
    if (h.dtype == 1) {
        std::vector<std::uint8_t> payload(n);
        r.array(payload.data(), n);
        for (std::size_t i = 0; i < n; ++i) v.data[i] = payload[i];
    } else if (h.dtype == 2) {
        r.array(v.data.data(), n);
        for (std::int32_t lab : v.data)
            if (lab < 0) throw IoError(IoCode::bad_header, path + ": negative label");
    } else {
        throw IoError(IoCode::unsupported_dtype,
                      path + ": V3D dtype " + std::to_string(h.dtype) + " is not a label volume");
    }
    const std::int32_t maxlab =
        v.data.empty() ? 0 : *std::max_element(v.data.begin(), v.data.end());
    v.num_classes = std::max(2, maxlab + 1);
    return v;
}

void write_d3f(const std::string& path, const DisplacementField& f) {
    Writer w;
    w.magic("D3F1");
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(f.dims.nx));
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(f.dims.ny));
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(f.dims.nz));
    w.scalar<float>(static_cast<float>(f.spacing.sx));
    w.scalar<float>(static_cast<float>(f.spacing.sy));
    w.scalar<float>(static_cast<float>(f.spacing.sz));
    std::vector<float> payload(f.data.size());
    for (std::size_t i = 0; i < f.data.size(); ++i) payload[i] = static_cast<float>(f.data[i]);
    w.array(payload.data(), payload.size());
    write_all(path, w.take());
}

DisplacementField read_d3f(const std::string& path) {
    const auto buf = read_all(path);
    Reader r(buf, path);
    r.expect_magic("D3F1", "D3F");
    Dims d;
    d.nx = static_cast<int>(r.scalar<std::uint32_t>());
    d.ny = static_cast<int>(r.scalar<std::uint32_t>());
    d.nz = static_cast<int>(r.scalar<std::uint32_t>());
    Spacing s;
    s.sx = r.scalar<float>();
    s.sy = r.scalar<float>();
    s.sz = r.scalar<float>();
    if (d.nx <= 0 || d.ny <= 0 || d.nz <= 0)
        throw IoError(IoCode::bad_header, path + ": non-positive dims");
    DisplacementField f(d, s);
    std::vector<float> payload(f.data.size());
    r.array(payload.data(), payload.size());
    for (std::size_t i = 0; i < payload.size(); ++i) f.data[i] = payload[i];
    return f;
}

void write_net1(const std::string& path, const VoxelNet& net) {
    Writer w;
    w.magic("NET1");
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(net.num_classes));
    w.scalar<std::uint32_t>(static_cast<std::uint32_t>(net.hidden));
    auto put = [&w](const std::vector<double>& v) {
        std::vector<float> payload(v.size());
        for (std::size_t i = 0; i < v.size(); ++i) payload[i] = static_cast<float>(v[i]);
        w.array(payload.data(), payload.size());
    };
    put(net.w1);
    put(net.b1);
    put(net.w2);
    put(net.b2);
    write_all(path, w.take());
}

VoxelNet read_net1(const std::string& path) {
    const auto buf = read_all(path);
    Reader r(buf, path);
    r.expect_magic("NET1", "NET1");
    const std::uint32_t k = r.scalar<std::uint32_t>();
    const std::uint32_t h = r.scalar<std::uint32_t>();
    if (k < 2 || h < 1 || k > 4096 || h > 65536)
        throw IoError(IoCode::bad_header, path + ": implausible NET1 sizes");
    VoxelNet net;
    net.num_classes = static_cast<int>(k);
    net.hidden = static_cast<int>(h);
    auto get = [&r](std::vector<double>& v, std::size_t count) {
        std::vector<float> payload(count);
        r.array(payload.data(), count);
        v.resize(count);
        for (std::size_t i = 0; i < count; ++i) v[i] = payload[i];
    };
    get(net.w1, static_cast<std::size_t>(h) * kFeatureDim);
    get(net.b1, h);
    get(net.w2, static_cast<std::size_t>(k) * h);
    get(net.b2, k);
    return net;
}

Volume read_nifti(const std::string& path) {
    const auto buf = read_all(path);
    if (buf.size() < 348) throw IoError(IoCode::truncated, path + ": shorter than a NIfTI-1 header");

    auto rd_i32 = [&](std::size_t off) {
        std::int32_t v;
        std::memcpy(&v, buf.data() + off, 4);
        return v;
    };
    auto rd_i16 = [&](std::size_t off) {
        std::int16_t v;
        std::memcpy(&v, buf.data() + off, 2);
        return v;
    };
    auto rd_f32 = [&](std::size_t off) {
        float v;
        std::memcpy(&v, buf.data() + off, 4);
        return v;
    };

    if (rd_i32(0) != 348)
        throw IoError(IoCode::bad_header,
                      path + ": sizeof_hdr != 348 (byte-swapped or not a NIfTI-1 file)");
    char magic[4];
    std::memcpy(magic, buf.data() + 344, 4);
    if (std::memcmp(magic, "n+1", 3) != 0) {
        if (std::memcmp(magic, "ni1", 3) == 0)
            throw IoError(IoCode::bad_header, path + ": two-file NIfTI (ni1) is not supported");
        throw IoError(IoCode::bad_magic, path + ": missing NIfTI-1 magic");
    }

    const std::int16_t ndim = rd_i16(40);
    if (ndim < 1 || ndim > 7)
        throw IoError(IoCode::bad_header, path + ": invalid dim[0]");
    std::int16_t dim[8] = {0};
    for (int i = 0; i <= ndim; ++i) dim[i] = rd_i16(40 + 2 * static_cast<std::size_t>(i));
    for (int i = 4; i <= ndim; ++i)
        if (dim[i] > 1)
            throw IoError(IoCode::bad_header, path + ": only 3D volumes are supported");
    Dims d{dim[1] > 0 ? dim[1] : 1, ndim >= 2 && dim[2] > 0 ? dim[2] : 1,
           ndim >= 3 && dim[3] > 0 ? dim[3] : 1};

    const std::int16_t datatype = rd_i16(70);
    if (datatype != 2 && datatype != 4 && datatype != 16)
        throw IoError(IoCode::unsupported_dtype,
                      path + ": unsupported datatype " + std::to_string(datatype) +
                          " (supported: 2 uint8, 4 int16, 16 float32)");

    Spacing sp;
    const float px = rd_f32(76 + 4), py = rd_f32(76 + 8), pz = rd_f32(76 + 12);
    sp.sx = px > 0 ? px : 1.0;
    sp.sy = py > 0 ? py : 1.0;
    sp.sz = pz > 0 ? pz : 1.0;

    const float vox_offset = rd_f32(108);
    const float scl_slope = rd_f32(112);
    const float scl_inter = rd_f32(116);
    const std::size_t off = static_cast<std::size_t>(vox_offset);
    if (vox_offset < 348)
        throw IoError(IoCode::bad_header, path + ": vox_offset points inside the header");

    const std::size_t n = d.voxel_count();
    const std::size_t elem = datatype == 2 ? 1 : (datatype == 4 ? 2 : 4);
    if (off + n * elem > buf.size())
        throw IoError(IoCode::truncated, path + ": truncated payload");

    Volume v(d, 0.0, sp);
    for (std::size_t i = 0; i < n; ++i) {
        double raw;
        if (datatype == 2) {
            raw = static_cast<std::uint8_t>(buf[off + i]);
        } else if (datatype == 4) {
            std::int16_t t;
            std::memcpy(&t, buf.data() + off + 2 * i, 2);
            raw = t;
        } else {
            float t;
            std::memcpy(&t, buf.data() + off + 4 * i, 4);
            raw = t;
        }
        v.data[i] = scl_slope != 0.0f ? scl_slope * raw + scl_inter : raw;
    }
    return v;
}

} // namespace regseg
