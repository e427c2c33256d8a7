#pragma once

#include <cstddef>
#include <stdexcept>
#include <string>

namespace plate {

// Caller broke a documented precondition (shape, range, ordering).
class ContractError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

// Malformed or truncated input file.
class FormatError : public std::runtime_error {
public:
    FormatError(const std::string& what, std::size_t byte_offset = 0)
        : std::runtime_error(what), offset_(byte_offset) {}
    std::size_t byte_offset() const noexcept { return offset_; }

private:
    std::size_t offset_;
};

class NumericalError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

class RankDeficiencyError : public NumericalError {
public:
    RankDeficiencyError(const std::string& what, std::size_t numerical_rank)
        : NumericalError(what), rank_(numerical_rank) {}
    std::size_t numerical_rank() const noexcept { return rank_; }

private:
    std::size_t rank_;
};

// Problem too large for an explicit representation.
class ResourceError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

#define PLATE_REQUIRE(cond, msg)                                  \
    do {                                                          \
        if (!(cond)) throw ::plate::ContractError(std::string(msg)); \
    } while (false)

}  // namespace plate
