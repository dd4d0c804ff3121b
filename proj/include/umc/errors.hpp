#pragma once

#include <stdexcept>
#include <string>

namespace umc {

// Base class for everything this library throws on purpose.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

// Tensor/grid dimension mismatches and layout violations.
struct ShapeError : Error {
    explicit ShapeError(const std::string& msg) : Error(msg) {}
};

// Missing or malformed named parameters.
struct ParamError : Error {
    explicit ParamError(const std::string& msg) : Error(msg) {}
};

// Invalid scenario / run configuration values.
struct ConfigError : Error {
    explicit ConfigError(const std::string& msg) : Error(msg) {}
};

// Packet construction from inconsistent inputs.
struct EncodeError : Error {
    explicit EncodeError(const std::string& msg) : Error(msg) {}
};

// Packet or parameter file bytes that do not parse. `kind` lets tests and
// tools react to the failure class without string matching.
struct DecodeError : Error {
    enum class Kind {
        BadMagic,
        BadVersion,
        Truncated,
        TrailingBytes,
        BadCount,
        OutOfRange,
        UnsortedEntries,
        DuplicateCell,
        NonFinite,
        BadName,
    };
    Kind kind;
    DecodeError(Kind k, const std::string& msg) : Error(msg), kind(k) {}
};

// Selection produced too few cells to be worth a transmission.
struct SkipSignal : Error {
    explicit SkipSignal(const std::string& msg) : Error(msg) {}
};

// Recurrent state is older than one step; extrapolation is not supported.
struct StaleStateError : Error {
    explicit StaleStateError(const std::string& msg) : Error(msg) {}
};

// Volume statistics requested from a ledger with no recorded transfers.
struct EmptyLedgerError : Error {
    explicit EmptyLedgerError(const std::string& msg) : Error(msg) {}
};

}  // namespace umc
