#include "plate/dataset.hpp"

#include <string>

#include "plate/error.hpp"

namespace plate {

Dataset subset(const Dataset& d, const std::vector<std::size_t>& idx) {
    Dataset out;
    out.inputs = select_rows(d.inputs, idx);
    out.num_classes = d.num_classes;
    out.split = d.split;
    if (d.is_classification()) {
        const auto& y = std::get<std::vector<int>>(d.targets);
        std::vector<int> sel;
        sel.reserve(idx.size());
        for (std::size_t i : idx) sel.push_back(y[i]);
        out.targets = std::move(sel);
    } else {
        out.targets = select_rows(std::get<Matrix>(d.targets), idx);
    }
    return out;
}

void validate(const Dataset& d) {
    PLATE_REQUIRE(d.inputs.rows() >= 1, "dataset is empty");
    PLATE_REQUIRE(d.inputs.all_finite(), "dataset has non-finite inputs");
    if (d.is_classification()) {
        const auto& y = std::get<std::vector<int>>(d.targets);
        PLATE_REQUIRE(y.size() == d.inputs.rows(), "dataset label count does not match inputs");
        for (int v : y)
            PLATE_REQUIRE(v >= 0 && static_cast<std::size_t>(v) < d.num_classes,
                          "dataset label " + std::to_string(v) + " outside [0, num_classes)");
    } else {
        const auto& y = std::get<Matrix>(d.targets);
        PLATE_REQUIRE(y.rows() == d.inputs.rows(), "dataset target rows do not match inputs");
        PLATE_REQUIRE(y.all_finite(), "dataset has non-finite targets");
    }
}

}  // namespace plate
