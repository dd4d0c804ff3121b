#include "umc/wire.hpp"

#include <cmath>
#include <cstring>
#include <fstream>
#include <sstream>

#include "umc/errors.hpp"

namespace umc::wire {
namespace {

constexpr char kMagic[4] = {'U', 'M', 'C', 'W'};

void put_u16(std::vector<std::uint8_t>& out, std::uint16_t v) {
    out.push_back(static_cast<std::uint8_t>(v & 0xff));
    out.push_back(static_cast<std::uint8_t>(v >> 8));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        out.push_back(static_cast<std::uint8_t>((v >> (8 * i)) & 0xff));
    }
}

void put_f32(std::vector<std::uint8_t>& out, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    put_u32(out, bits);
}

struct Reader {
    const std::vector<std::uint8_t>& buf;
    std::size_t pos = 0;

    void need(std::size_t n) const {
        if (pos + n > buf.size()) {
            throw DecodeError(DecodeError::Kind::Truncated, "packet ends mid-field");
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
    float f32() {
        const std::uint32_t bits = u32();
        float v;
        std::memcpy(&v, &bits, 4);
        return v;
    }
};

void validate(const SparsePacket& p, bool decoding) {
    auto fail = [&](DecodeError::Kind kind, const std::string& msg) -> void {
        if (decoding) throw DecodeError(kind, msg);
        throw EncodeError(msg);
    };
    long prev = -1;
    for (const PacketEntry& e : p.entries) {
        if (e.row >= p.height || e.col >= p.width) {
            fail(DecodeError::Kind::OutOfRange, "packet cell outside grid bounds");
        }
        if (e.values.size() != p.channels) {
            fail(DecodeError::Kind::BadCount, "packet entry channel count mismatch");
        }
        const long key = static_cast<long>(e.row) * p.width + e.col;
        if (key == prev) {
            fail(DecodeError::Kind::DuplicateCell, "duplicate packet cell");
        }
        if (key < prev) {
            fail(DecodeError::Kind::UnsortedEntries, "packet cells not row-major");
        }
        prev = key;
        for (float v : e.values) {
            if (!std::isfinite(v)) {
                fail(DecodeError::Kind::NonFinite, "packet payload is not finite");
            }
        }
    }
}

}  // namespace

std::size_t packet_size_bytes(const SparsePacket& p) {
    return kPacketHeaderBytes +
           p.entries.size() * (4 + 4 * static_cast<std::size_t>(p.channels));
}

SparsePacket gather(const FeatureGrid& f, const entropy::SelectionMask& mask,
                    const PacketMeta& meta) {
    if (mask.height != f.height || mask.width != f.width) {
        throw ShapeError("gather: mask and grid dims differ");
    }
    if (f.height > 0xffff || f.width > 0xffff || f.channels > 0xffff) {
        throw EncodeError("gather: grid too large for the wire format");
    }
    SparsePacket p;
    p.meta = meta;
    p.height = static_cast<std::uint16_t>(f.height);
    p.width = static_cast<std::uint16_t>(f.width);
    p.channels = static_cast<std::uint16_t>(f.channels);
    p.entries.reserve(mask.count);
    const std::size_t hw = f.plane();
    for (int y = 0; y < f.height; ++y) {
        for (int x = 0; x < f.width; ++x) {
            if (!mask.test(y, x)) continue;
            PacketEntry e;
            e.row = static_cast<std::uint16_t>(y);
            e.col = static_cast<std::uint16_t>(x);
            e.values.resize(f.channels);
            const std::size_t p0 = static_cast<std::size_t>(y) * f.width + x;
            for (int c = 0; c < f.channels; ++c) {
                e.values[c] = static_cast<float>(f.data[c * hw + p0]);
            }
            p.entries.push_back(std::move(e));
        }
    }
    return p;
}

std::vector<std::uint8_t> encode(const SparsePacket& p) {
    validate(p, false);
    std::vector<std::uint8_t> out;
    out.reserve(packet_size_bytes(p));
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kPacketVersion);
    put_u16(out, p.meta.sender);
    put_u16(out, p.meta.receiver);
    put_u32(out, p.meta.timestep);
    put_u16(out, p.meta.level);
    put_u16(out, p.height);
    put_u16(out, p.width);
    put_u16(out, p.channels);
    put_u32(out, static_cast<std::uint32_t>(p.entries.size()));
    for (const PacketEntry& e : p.entries) {
        put_u16(out, e.row);
        put_u16(out, e.col);
        for (float v : e.values) put_f32(out, v);
    }
    return out;
}

SparsePacket decode(const std::vector<std::uint8_t>& bytes) {
    if (bytes.size() < 4 || std::memcmp(bytes.data(), kMagic, 4) != 0) {
        throw DecodeError(DecodeError::Kind::BadMagic, "not a packet");
    }
    Reader r{bytes, 4};
    const std::uint16_t version = r.u16();
    if (version != kPacketVersion) {
        throw DecodeError(DecodeError::Kind::BadVersion,
                          "unsupported packet version " + std::to_string(version));
    }
    SparsePacket p;
    p.meta.sender = r.u16();
    p.meta.receiver = r.u16();
    p.meta.timestep = r.u32();
    p.meta.level = r.u16();
    p.height = r.u16();
    p.width = r.u16();
    p.channels = r.u16();
    const std::uint32_t count = r.u32();
    if (static_cast<std::uint64_t>(count) >
        static_cast<std::uint64_t>(p.height) * p.width) {
        throw DecodeError(DecodeError::Kind::BadCount,
                          "packet claims more cells than the grid holds");
    }
    p.entries.resize(count);
    for (std::uint32_t i = 0; i < count; ++i) {
        PacketEntry& e = p.entries[i];
        e.row = r.u16();
        e.col = r.u16();
        e.values.resize(p.channels);
        for (int c = 0; c < p.channels; ++c) {
            e.values[c] = r.f32();
        }
    }
    if (r.pos != bytes.size()) {
        throw DecodeError(DecodeError::Kind::TrailingBytes, "packet has trailing bytes");
    }
    validate(p, true);
    return p;
}

void save_packet(const SparsePacket& p, const std::string& path) {
    const std::vector<std::uint8_t> bytes = encode(p);
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

SparsePacket load_packet(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) {
        throw ConfigError("cannot open packet file '" + path + "'");
    }
    std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                    std::istreambuf_iterator<char>());
    return decode(bytes);
}

void record_transfer(CommLedger& ledger, int sender, int receiver, int timestep,
                     const SparsePacket& packet, std::uint64_t query_scalars) {
    if (packet.meta.sender != sender || packet.meta.receiver != receiver ||
        packet.meta.timestep != static_cast<std::uint32_t>(timestep)) {
        throw EncodeError("record_transfer: packet header disagrees with transfer");
    }
    CommLedger::Cell& cell = ledger.cells[{sender, timestep}];
    cell.f_scalars += packet.scalar_count();
    cell.q_scalars += query_scalars;
}

double communication_volume(const CommLedger& ledger, double log_base) {
    if (ledger.empty()) {
        throw EmptyLedgerError("communication volume of an empty ledger");
    }
    std::map<int, std::uint64_t> totals;
    for (const auto& [key, cell] : ledger.cells) {
        totals[key.first] += cell.f_scalars + cell.q_scalars;
    }
    double sum = 0.0;
    for (const auto& [agent, total] : totals) {
        if (total == 0) {
            throw EmptyLedgerError("agent " + std::to_string(agent) +
                                   " transmitted zero scalars");
        }
        double v = std::log(static_cast<double>(total));
        if (log_base > 0.0) {
            v /= std::log(log_base);
        }
        sum += v;
    }
    return sum / static_cast<double>(totals.size());
}

std::string ledger_csv(const CommLedger& ledger) {
    std::ostringstream out;
    out << "agent,timestep,f_scalars,q_scalars\n";
    for (const auto& [key, cell] : ledger.cells) {
        out << key.first << ',' << key.second << ',' << cell.f_scalars << ','
            << cell.q_scalars << '\n';
    }
    return out.str();
}

}  // namespace umc::wire
