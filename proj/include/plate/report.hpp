#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "plate/protocol.hpp"

namespace plate {

/// Shortest round-trip decimal form; "nan"/"inf" for non-finite values.
std::string format_double(double v);

/// RFC 4180 field: quoted when it holds a comma, quote, CR or LF.
std::string csv_field(const std::string& s);

/// One row per successful run. Columns: method, r, tau, k, seed,
/// trainable_params, acc1_base, acc2, acc1_after, forgetting, epsilon, lambda,
/// wall_seconds, then name, loss1_base, loss2, loss1_after. Accuracy columns
/// are empty for regression runs, epsilon/lambda when not computed.
std::string results_csv(const std::vector<RunResult>& runs);

std::string aggregates_csv(const std::vector<Aggregate>& aggs);

/// Full report: runs with curves, aggregates and a failures array.
std::string results_json(const SweepOutput& out);

/// results.csv, aggregates.csv and results.json under `dir`, each atomically.
void write_results(const SweepOutput& out, const std::filesystem::path& dir);

}  // namespace plate
