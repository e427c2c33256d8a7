#pragma once

#include <cstddef>
#include <string>
#include <variant>
#include <vector>

#include "plate/numerics/matrix.hpp"

namespace plate {

/// Class indices or real-valued targets (n x d_out).
using Targets = std::variant<std::vector<int>, Matrix>;

enum class Split { Train, Test };

struct Dataset {
    Matrix inputs;  // n x d
    Targets targets;
    std::size_t num_classes = 0;  // 0 for regression
    Split split = Split::Train;

    std::size_t size() const noexcept { return inputs.rows(); }
    bool is_classification() const noexcept { return std::holds_alternative<std::vector<int>>(targets); }
};

/// Rows `idx` of inputs and targets.
Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx);

/// Throws ContractError if shapes or labels are inconsistent.
void validate(const Dataset& d);

}  // namespace plate
