#include "umc/params.hpp"

#include <cmath>
#include <cstring>
#include <fstream>

#include "umc/errors.hpp"

namespace umc {
namespace {

constexpr char kMagic[4] = {'U', 'M', 'C', 'P'};
constexpr std::uint32_t kVersion = 1;

void put_bytes(std::vector<std::uint8_t>& out, const void* p, std::size_t n) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    out.insert(out.end(), b, b + n);
}

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
}

void put_f64(std::vector<std::uint8_t>& out, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    for (int i = 0; i < 8; ++i) {
        out.push_back(static_cast<std::uint8_t>((bits >> (8 * i)) & 0xff));
    }
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw DecodeError(DecodeError::Kind::Truncated,
                              "parameter file ends mid-record");
        }
    }
    std::uint16_t u16() {
        need(2);
        std::uint16_t v = static_cast<std::uint16_t>(buf[pos] | (buf[pos + 1] << 8));
        pos += 2;
        return v;
    }
    std::uint32_t u32() {
        need(4);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf[pos + i]) << (8 * i);
        pos += 4;
        return v;
    }
    std::uint8_t u8() {
        need(1);
        return buf[pos++];
    }
    double f64() {
        need(8);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) bits |= static_cast<std::uint64_t>(buf[pos + i]) << (8 * i);
        pos += 8;
        double v;
        std::memcpy(&v, &bits, 8);
        return v;
    }
};

}  // namespace

double Tensor::scalar() const {
    if (count() != 1) {
        throw ParamError("tensor is not a scalar");
    }
    return data[0];
}

void ParamSet::add(const std::string& name, Tensor t) {
    if (name.empty()) {
        throw ParamError("parameter name must be non-empty");
    }
    if (t.data.size() != t.count()) {
        throw ParamError("parameter '" + name + "' payload does not match its dims");
    }
    if (entries_.count(name)) {
        throw ParamError("duplicate parameter name '" + name + "'");
    }
    order_.push_back(name);
    entries_.emplace(name, std::move(t));
}

bool ParamSet::has(const std::string& name) const { return entries_.count(name) != 0; }

const Tensor& ParamSet::get(const std::string& name) const {
    auto it = entries_.find(name);
    if (it == entries_.end()) {
        throw ParamError("missing parameter '" + name + "'");
    }
    return it->second;
}

tensor::ConvWeights ParamSet::conv(const std::string& prefix) const {
    const Tensor& w = get(prefix + ".w");
    if (w.dims.size() != 4) {
        throw ParamError("parameter '" + prefix + ".w' must be rank 4");
    }
    tensor::ConvWeights cw;
    cw.out_channels = static_cast<int>(w.dims[0]);
    cw.in_channels = static_cast<int>(w.dims[1]);
    cw.kh = static_cast<int>(w.dims[2]);
    cw.kw = static_cast<int>(w.dims[3]);
    cw.w = w.data;
    if (has(prefix + ".b")) {
        const Tensor& b = get(prefix + ".b");
        if (b.dims.size() != 1 || b.dims[0] != w.dims[0]) {
            throw ParamError("parameter '" + prefix + ".b' must be rank 1 [out_channels]");
        }
        cw.bias = b.data;
    }
    return cw;
}

std::vector<std::uint8_t> ParamSet::to_bytes() const {
    std::vector<std::uint8_t> out;
    put_bytes(out, kMagic, 4);
    put_u32(out, kVersion);
    put_u32(out, static_cast<std::uint32_t>(order_.size()));
    for (const std::string& name : order_) {
        const Tensor& t = entries_.at(name);
        if (name.size() > 0xffff) {
            throw ParamError("parameter name too long: " + name);
        }
        put_u16(out, static_cast<std::uint16_t>(name.size()));
        put_bytes(out, name.data(), name.size());
        out.push_back(static_cast<std::uint8_t>(t.dims.size()));
        for (std::uint32_t d : t.dims) put_u32(out, d);
        for (double v : t.data) put_f64(out, v);
    }
    return out;
}

ParamSet ParamSet::from_bytes(const std::vector<std::uint8_t>& bytes) {
    Reader r{bytes};
    r.need(4);
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw DecodeError(DecodeError::Kind::BadMagic, "not a parameter file");
    }
    r.pos = 4;
    const std::uint32_t version = r.u32();
    if (version != kVersion) {
        throw DecodeError(DecodeError::Kind::BadVersion,
                          "unsupported parameter file version " + std::to_string(version));
    }
    const std::uint32_t n = r.u32();
    ParamSet ps;
    for (std::uint32_t i = 0; i < n; ++i) {
        const std::uint16_t name_len = r.u16();
        r.need(name_len);
        std::string name(reinterpret_cast<const char*>(bytes.data() + r.pos), name_len);
        r.pos += name_len;
        if (name.empty()) {
            throw DecodeError(DecodeError::Kind::BadName, "empty parameter name");
        }
        const std::uint8_t rank = r.u8();
        if (rank > 4) {
            throw DecodeError(DecodeError::Kind::BadName,
                              "parameter '" + name + "' has rank " + std::to_string(rank));
        }
        Tensor t;
        std::size_t count = 1;
        for (int d = 0; d < rank; ++d) {
            const std::uint32_t dim = r.u32();
            if (dim == 0) {
                throw DecodeError(DecodeError::Kind::BadCount,
                                  "parameter '" + name + "' has a zero dim");
            }
            t.dims.push_back(dim);
            count *= dim;
        }
        t.data.resize(count);
        for (std::size_t k = 0; k < count; ++k) {
            t.data[k] = r.f64();
        }
        if (ps.has(name)) {
            throw DecodeError(DecodeError::Kind::BadName,
                              "duplicate parameter '" + name + "' in file");
        }
        ps.add(name, std::move(t));
    }
    if (r.pos != bytes.size()) {
        throw DecodeError(DecodeError::Kind::TrailingBytes,
                          "parameter file has trailing bytes");
    }
    return ps;
}

void ParamSet::save(const std::string& path) const {
    const std::vector<std::uint8_t> bytes = to_bytes();
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) {
        throw ConfigError("cannot open '" + path + "' for writing");
    }
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) {
        throw ConfigError("short write to '" + path + "'");
    }
}

ParamSet ParamSet::load(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot open parameter file '" + path + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return from_bytes(bytes);
}

std::uint64_t fingerprint(const ParamSet& params) {
    const std::vector<std::uint8_t> bytes = params.to_bytes();
    std::uint64_t h = 1469598103934665603ull;
    for (std::uint8_t b : bytes) {
        h ^= b;
        h *= 1099511628211ull;
    }
    return h;
}

}  // namespace umc
