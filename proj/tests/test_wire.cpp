#include <cmath>
#include <cstring>
#include <filesystem>
#include <set>
#include <vector>

#include "doctest.h"
#include "oracles.hpp"
#include "umc/errors.hpp"
#include "umc/wire.hpp"

using namespace umc;
using namespace umc::wire;
using oracle::TestRng;

namespace {

SparsePacket random_packet(TestRng& rng) {
    SparsePacket p;
    p.meta.sender = static_cast<std::uint16_t>(rng.below(16));
    p.meta.receiver = static_cast<std::uint16_t>(rng.below(16));
    p.meta.timestep = static_cast<std::uint32_t>(rng.below(1000));
    p.meta.level = static_cast<std::uint16_t>(rng.below(4));
    p.height = static_cast<std::uint16_t>(1 + rng.below(20));
    p.width = static_cast<std::uint16_t>(1 + rng.below(20));
    p.channels = static_cast<std::uint16_t>(1 + rng.below(8));
    std::set<int> cells;
    const int total = p.height * p.width;
    const int want = rng.below(total + 1);
    while (static_cast<int>(cells.size()) < want) cells.insert(rng.below(total));
    for (int cell : cells) {
        PacketEntry e;
        e.row = static_cast<std::uint16_t>(cell / p.width);
        e.col = static_cast<std::uint16_t>(cell % p.width);
        e.values.resize(p.channels);
        for (float& v : e.values) v = static_cast<float>(rng.uniform(-3.0, 3.0));
        p.entries.push_back(std::move(e));
    }
    return p;
}

bool packets_equal(const SparsePacket& a, const SparsePacket& b) {
    if (a.meta.sender != b.meta.sender || a.meta.receiver != b.meta.receiver ||
        a.meta.timestep != b.meta.timestep || a.meta.level != b.meta.level ||
        a.height != b.height || a.width != b.width || a.channels != b.channels ||
        a.entries.size() != b.entries.size()) {
        return false;
    }
    for (std::size_t i = 0; i < a.entries.size(); ++i) {
        if (a.entries[i].row != b.entries[i].row || a.entries[i].col != b.entries[i].col) {
            return false;
        }
        if (std::memcmp(a.entries[i].values.data(), b.entries[i].values.data(),
                        a.channels * sizeof(float)) != 0) {
            return false;
        }
    }
    return true;
}

}  // namespace

TEST_CASE("gather pulls masked cells row-major and drops to f32 once") {
    FeatureGrid f(2, 3, 3);
    f.at(0, 0, 2) = 0.1;
    f.at(1, 0, 2) = -7.5;
    f.at(0, 2, 1) = 1e-9;
    f.at(1, 2, 1) = 4.0;
    entropy::SelectionMask mask(3, 3);
    mask.set(2, 1);
    mask.set(0, 2);
    const PacketMeta meta{3, 1, 7, 0};
    const SparsePacket p = gather(f, mask, meta);
    REQUIRE(p.entries.size() == 2);
    CHECK(p.height == 3);
    CHECK(p.width == 3);
    CHECK(p.channels == 2);
    CHECK(p.meta.sender == 3);
    CHECK(p.entries[0].row == 0);
    CHECK(p.entries[0].col == 2);
    CHECK(p.entries[1].row == 2);
    CHECK(p.entries[1].col == 1);
    CHECK(p.entries[0].values[0] == static_cast<float>(0.1));
    CHECK(p.entries[0].values[1] == -7.5f);
    CHECK(p.entries[1].values[0] == 1e-9f);
    CHECK(p.scalar_count() == 4);
}

TEST_CASE("encode size is exactly 26 + count * (4 + 4 * channels)") {
    TestRng rng(71);
    for (int it = 0; it < 20; ++it) {
        const SparsePacket p = random_packet(rng);
        const std::vector<std::uint8_t> bytes = encode(p);
        const std::size_t want =
            kPacketHeaderBytes + p.entries.size() * (4 + 4 * static_cast<std::size_t>(p.channels));
        CHECK(bytes.size() == want);
        CHECK(packet_size_bytes(p) == want);
    }
}

TEST_CASE("encode/decode round trip over randomized packets") {
    TestRng rng(72);
    for (int it = 0; it < 200; ++it) {
        const SparsePacket p = random_packet(rng);
        const SparsePacket back = decode(encode(p));
        CHECK(packets_equal(p, back));
    }
}

TEST_CASE("an empty packet survives the round trip") {
    SparsePacket p;
    p.meta = {2, 5, 9, 1};
    p.height = 8;
    p.width = 8;
    p.channels = 64;
    const SparsePacket back = decode(encode(p));
    CHECK(packets_equal(p, back));
    CHECK(back.scalar_count() == 0);
    CHECK(encode(p).size() == kPacketHeaderBytes);
}

TEST_CASE("packets differing only in timestep differ only in the timestep field") {
    TestRng rng(73);
    SparsePacket a = random_packet(rng);
    SparsePacket b = a;
    b.meta.timestep = a.meta.timestep + 1;
    const std::vector<std::uint8_t> ba = encode(a);
    const std::vector<std::uint8_t> bb = encode(b);
    REQUIRE(ba.size() == bb.size());
    for (std::size_t i = 0; i < ba.size(); ++i) {
        if (i >= 10 && i < 14) continue;  // u32 timestep field
        CHECK(ba[i] == bb[i]);
    }
    bool differs = false;
    for (std::size_t i = 10; i < 14; ++i) differs = differs || ba[i] != bb[i];
    CHECK(differs);
}

TEST_CASE("decode rejects malformed packet bytes with typed errors") {
    TestRng rng(74);
    SparsePacket p = random_packet(rng);
    while (p.entries.size() < 2) p = random_packet(rng);
    const std::vector<std::uint8_t> bytes = encode(p);

    auto kind_of = [](std::vector<std::uint8_t> b) {
        try {
            decode(b);
        } catch (const DecodeError& e) {
            return e.kind;
        }
        throw std::runtime_error("expected DecodeError");
    };

    std::vector<std::uint8_t> magic = bytes;
    magic[1] = 'Z';
    CHECK(kind_of(magic) == DecodeError::Kind::BadMagic);

    std::vector<std::uint8_t> version = bytes;
    version[4] = 0xee;
    CHECK(kind_of(version) == DecodeError::Kind::BadVersion);

    std::vector<std::uint8_t> cut(bytes.begin(), bytes.end() - 3);
    CHECK(kind_of(cut) == DecodeError::Kind::Truncated);

    std::vector<std::uint8_t> extra = bytes;
    extra.push_back(0xab);
    CHECK(kind_of(extra) == DecodeError::Kind::TrailingBytes);

    std::vector<std::uint8_t> short_header(bytes.begin(), bytes.begin() + 12);
    CHECK(kind_of(short_header) == DecodeError::Kind::Truncated);

    // Out-of-grid cell: rewrite the first entry's row past the height.
    std::vector<std::uint8_t> oob = bytes;
    const std::uint16_t bad_row = static_cast<std::uint16_t>(p.height + 1);
    oob[kPacketHeaderBytes] = static_cast<std::uint8_t>(bad_row & 0xff);
    oob[kPacketHeaderBytes + 1] = static_cast<std::uint8_t>(bad_row >> 8);
    CHECK(kind_of(oob) == DecodeError::Kind::OutOfRange);

    // The encoder refuses to build malformed packets, so ordering, duplicate,
    // and finiteness violations are patched into the bytes directly.
    const std::size_t stride = 4 + 4 * static_cast<std::size_t>(p.channels);
    std::vector<std::uint8_t> unsorted = bytes;
    for (std::size_t i = 0; i < stride; ++i) {
        std::swap(unsorted[kPacketHeaderBytes + i], unsorted[kPacketHeaderBytes + stride + i]);
    }
    CHECK(kind_of(unsorted) == DecodeError::Kind::UnsortedEntries);

    std::vector<std::uint8_t> dup = bytes;
    for (std::size_t i = 0; i < 4; ++i) {
        dup[kPacketHeaderBytes + stride + i] = dup[kPacketHeaderBytes + i];
    }
    CHECK(kind_of(dup) == DecodeError::Kind::DuplicateCell);

    std::vector<std::uint8_t> nan = bytes;
    nan[kPacketHeaderBytes + 4] = 0x00;
    nan[kPacketHeaderBytes + 5] = 0x00;
    nan[kPacketHeaderBytes + 6] = 0xc0;
    nan[kPacketHeaderBytes + 7] = 0x7f;
    CHECK(kind_of(nan) == DecodeError::Kind::NonFinite);
}

TEST_CASE("encode refuses malformed packets outright") {
    TestRng rng(77);
    SparsePacket p = random_packet(rng);
    while (p.entries.size() < 2) p = random_packet(rng);
    SparsePacket swapped = p;
    std::swap(swapped.entries[0], swapped.entries[1]);
    CHECK_THROWS_AS(encode(swapped), EncodeError);
    SparsePacket wrong_ch = p;
    wrong_ch.entries[0].values.push_back(0.0f);
    CHECK_THROWS_AS(encode(wrong_ch), EncodeError);
}

TEST_CASE("random single-byte corruption decodes cleanly or throws a DecodeError") {
    TestRng rng(75);
    for (int it = 0; it < 1000; ++it) {
        const SparsePacket p = random_packet(rng);
        std::vector<std::uint8_t> bytes = encode(p);
        if (bytes.empty()) continue;
        const std::size_t at = static_cast<std::size_t>(rng.below(static_cast<int>(bytes.size())));
        bytes[at] ^= static_cast<std::uint8_t>(1 + rng.below(255));
        try {
            decode(bytes);
        } catch (const DecodeError&) {
            // typed failure is the contract; anything else escapes and fails
        }
    }
    CHECK(true);
}

TEST_CASE("packet file round trip") {
    TestRng rng(76);
    const SparsePacket p = random_packet(rng);
    namespace fs = std::filesystem;
    const fs::path path = fs::temp_directory_path() / "umc_packet_test.umcw";
    save_packet(p, path.string());
    const SparsePacket back = load_packet(path.string());
    CHECK(packets_equal(p, back));
    fs::remove(path);
    CHECK_THROWS_AS(load_packet("/nonexistent/file.umcw"), ConfigError);
}

TEST_CASE("record_transfer accumulates per (agent, timestep) and validates the header") {
    SparsePacket p;
    p.meta = {1, 2, 5, 0};
    p.height = 4;
    p.width = 4;
    p.channels = 8;
    PacketEntry e;
    e.row = 0;
    e.col = 0;
    e.values.assign(8, 1.0f);
    p.entries = {e, e};
    p.entries[1].col = 1;

    CommLedger ledger;
    record_transfer(ledger, 1, 2, 5, p, 16);
    record_transfer(ledger, 1, 2, 5, p, 0);
    REQUIRE(ledger.cells.size() == 1);
    const CommLedger::Cell& cell = ledger.cells.at({1, 5});
    CHECK(cell.f_scalars == 32);
    CHECK(cell.q_scalars == 16);

    CHECK_THROWS_AS(record_transfer(ledger, 3, 2, 5, p, 0), EncodeError);
    CHECK_THROWS_AS(record_transfer(ledger, 1, 2, 6, p, 0), EncodeError);
}

TEST_CASE("communication_volume is the mean log of per-agent totals") {
    SUBCASE("one agent with 128 scalars gives ln 128") {
        CommLedger ledger;
        ledger.cells[{0, 0}].f_scalars = 100;
        ledger.cells[{0, 3}].f_scalars = 20;
        ledger.cells[{0, 3}].q_scalars = 8;
        CHECK(std::abs(communication_volume(ledger) - std::log(128.0)) <= 1e-12);
    }
    SUBCASE("equal agents give the shared log") {
        CommLedger ledger;
        ledger.cells[{0, 0}].f_scalars = 640;
        ledger.cells[{1, 0}].f_scalars = 640;
        CHECK(std::abs(communication_volume(ledger) - std::log(640.0)) <= 1e-12);
    }
    SUBCASE("scaling every count by a constant adds its log") {
        CommLedger small, big;
        small.cells[{0, 0}].f_scalars = 17;
        small.cells[{1, 2}].f_scalars = 305;
        big.cells[{0, 0}].f_scalars = 17 * 128;
        big.cells[{1, 2}].f_scalars = 305 * 128;
        CHECK(std::abs(communication_volume(big) - communication_volume(small) -
                       std::log(128.0)) <= 1e-12);
    }
    SUBCASE("an explicit base rescales the logarithm") {
        CommLedger ledger;
        ledger.cells[{0, 0}].f_scalars = 1024;
        CHECK(communication_volume(ledger, 2.0) == doctest::Approx(10.0).epsilon(1e-12));
    }
    SUBCASE("empty or silent ledgers are errors") {
        CommLedger empty;
        CHECK_THROWS_AS(communication_volume(empty), EmptyLedgerError);
        CommLedger silent;
        silent.cells[{0, 0}];  // zero counts
        CHECK_THROWS_AS(communication_volume(silent), EmptyLedgerError);
    }
}

TEST_CASE("ledger_csv lists counters in key order") {
    CommLedger ledger;
    ledger.cells[{1, 0}].f_scalars = 5;
    ledger.cells[{0, 2}].q_scalars = 7;
    const std::string csv = ledger_csv(ledger);
    CHECK(csv ==
          "agent,timestep,f_scalars,q_scalars\n"
          "0,2,0,7\n"
          "1,0,5,0\n");
}
