#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "umc/entropy_cs.hpp"
#include "umc/tensor.hpp"

namespace umc::wire {

// One selected cell: grid position plus the per-channel payload. Values travel
// as f32; precision is dropped exactly once, at gather time.
struct PacketEntry {
    std::uint16_t row = 0;
    std::uint16_t col = 0;
    std::vector<float> values;
};

struct PacketMeta {
    std::uint16_t sender = 0;
    std::uint16_t receiver = 0;
    std::uint32_t timestep = 0;
    std::uint16_t level = 0;
};

// Sparse feature message. Entries are sorted row-major and unique.
//
// Byte layout (all little-endian):
//   "UMCW"  u16 version  u16 sender  u16 receiver  u32 timestep  u16 level
//   u16 height  u16 width  u16 channels  u32 count
//   then count entries of { u16 row, u16 col, f32 value[channels] }.
// Total size = 26 + count * (4 + 4*channels) bytes, nothing else.
struct SparsePacket {
    PacketMeta meta;
    std::uint16_t height = 0;
    std::uint16_t width = 0;
    std::uint16_t channels = 0;
    std::vector<PacketEntry> entries;

    std::size_t scalar_count() const {
        return entries.size() * static_cast<std::size_t>(channels);
    }
};

constexpr std::size_t kPacketHeaderBytes = 26;
constexpr std::uint16_t kPacketVersion = 1;

std::size_t packet_size_bytes(const SparsePacket& p);

// Pull the masked cells out of a grid in row-major order.
SparsePacket gather(const FeatureGrid& f, const entropy::SelectionMask& mask,
                    const PacketMeta& meta);

std::vector<std::uint8_t> encode(const SparsePacket& p);
SparsePacket decode(const std::vector<std::uint8_t>& bytes);

void save_packet(const SparsePacket& p, const std::string& path);
SparsePacket load_packet(const std::string& path);

// Per-(agent, timestep) counters of transmitted feature and query scalars.
struct CommLedger {
    struct Cell {
        std::uint64_t f_scalars = 0;
        std::uint64_t q_scalars = 0;
    };
    std::map<std::pair<int, int>, Cell> cells;  // (agent, timestep) -> counts

    bool empty() const { return cells.empty(); }
};

// Accounts one directed message: the packet's scalars plus any query scalars
// that rode along, attributed to the sender at the given timestep.
void record_transfer(CommLedger& ledger, int sender, int receiver, int timestep,
                     const SparsePacket& packet, std::uint64_t query_scalars);

// Mean over agents of log(total scalars sent by that agent across the run).
// Natural log by default; other bases divide by log(base).
double communication_volume(const CommLedger& ledger, double log_base = 0.0);

std::string ledger_csv(const CommLedger& ledger);

}  // namespace umc::wire
