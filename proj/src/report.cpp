#include "plate/report.hpp"

#include <charconv>
#include <cmath>
#include <sstream>

#include <json.hpp>

#include "plate/tensor_io.hpp"

namespace plate {

namespace {

using json = nlohmann::ordered_json;

json number_or_null(double v) { return std::isfinite(v) ? json(v) : json(nullptr); }

json optional_number(const std::optional<double>& v) { return v ? number_or_null(*v) : json(nullptr); }

std::string opt_field(const std::optional<double>& v) { return v ? format_double(*v) : std::string(); }

}  // namespace

std::string format_double(double v) {
    if (std::isnan(v)) return "nan";
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

std::string csv_field(const std::string& s) {
    if (s.find_first_of(",\"\r\n") == std::string::npos) return s;
    std::string out = "\"";
    for (char c : s) {
        if (c == '"') out += '"';
        out += c;
    }
    return out + "\"";
}

std::string results_csv(const std::vector<RunResult>& runs) {
    std::ostringstream os;
    os << "method,r,tau,k,seed,trainable_params,acc1_base,acc2,acc1_after,forgetting,epsilon,lambda,wall_seconds,"
          "name,loss1_base,loss2,loss1_after\r\n";
    for (const auto& r : runs) {
        if (r.failed) continue;
        auto acc = [&](double v) { return r.classification ? format_double(v) : std::string(); };
        os << csv_field(r.method) << ',' << r.r << ',' << format_double(r.tau) << ',' << r.k << ',' << r.seed << ','
           << r.trainable_params << ',' << acc(r.acc1_base) << ',' << acc(r.acc2) << ',' << acc(r.acc1_after) << ','
           << format_double(r.forgetting) << ',' << opt_field(r.epsilon) << ',' << opt_field(r.lambda) << ','
           << format_double(r.wall_seconds) << ',' << csv_field(r.name) << ',' << format_double(r.loss1_base) << ','
           << format_double(r.loss2) << ',' << format_double(r.loss1_after) << "\r\n";
    }
    return os.str();
}

std::string aggregates_csv(const std::vector<Aggregate>& aggs) {
    std::ostringstream os;
    os << "cell,name,method,r,tau,runs,forgetting_mean,forgetting_std,acc2_mean,acc2_std,loss2_mean,loss2_std\r\n";
    for (const auto& a : aggs)
        os << a.grid_index << ',' << csv_field(a.name) << ',' << csv_field(a.method) << ',' << a.r << ','
           << format_double(a.tau) << ',' << a.runs << ',' << format_double(a.forgetting_mean) << ','
           << format_double(a.forgetting_std) << ',' << format_double(a.acc2_mean) << ','
           << format_double(a.acc2_std) << ',' << format_double(a.loss2_mean) << ','
           << format_double(a.loss2_std) << "\r\n";
    return os.str();
}

std::string results_json(const SweepOutput& out) {
    json runs = json::array();
    json failures = json::array();
    for (const auto& r : out.runs) {
        if (r.failed) {
            failures.push_back(
                {{"name", r.name}, {"cell", r.grid_index}, {"method", r.method}, {"seed", r.seed}, {"error", r.error}});
            continue;
        }
        json curves = {{"stage1_loss", json::array()}, {"stage2_loss", json::array()}};
        for (double v : r.stage1_curve) curves["stage1_loss"].push_back(number_or_null(v));
        for (double v : r.stage2_curve) curves["stage2_loss"].push_back(number_or_null(v));
        runs.push_back({{"name", r.name},
                        {"cell", r.grid_index},
                        {"method", r.method},
                        {"r", r.r},
                        {"tau", r.tau},
                        {"k", r.k},
                        {"layer_k", r.layer_k},
                        {"seed", r.seed},
                        {"trainable_params", r.trainable_params},
                        {"trainable_total", r.trainable_total},
                        {"task", r.classification ? "classification" : "regression"},
                        {"acc1_base", number_or_null(r.acc1_base)},
                        {"acc2", number_or_null(r.acc2)},
                        {"acc1_after", number_or_null(r.acc1_after)},
                        {"loss1_base", number_or_null(r.loss1_base)},
                        {"loss2", number_or_null(r.loss2)},
                        {"loss1_after", number_or_null(r.loss1_after)},
                        {"forgetting", number_or_null(r.forgetting)},
                        {"epsilon", optional_number(r.epsilon)},
                        {"lambda", optional_number(r.lambda)},
                        {"wall_seconds", r.wall_seconds},
                        {"curves", std::move(curves)}});
    }
    json aggs = json::array();
    for (const auto& a : out.aggregates)
        aggs.push_back({{"cell", a.grid_index},
                        {"name", a.name},
                        {"method", a.method},
                        {"r", a.r},
                        {"tau", a.tau},
                        {"runs", a.runs},
                        {"forgetting_mean", number_or_null(a.forgetting_mean)},
                        {"forgetting_std", number_or_null(a.forgetting_std)},
                        {"acc2_mean", number_or_null(a.acc2_mean)},
                        {"acc2_std", number_or_null(a.acc2_std)},
                        {"loss2_mean", number_or_null(a.loss2_mean)},
                        {"loss2_std", number_or_null(a.loss2_std)}});
    const json root = {{"runs", std::move(runs)}, {"aggregates", std::move(aggs)}, {"failures", std::move(failures)}};
    return root.dump(2) + "\n";
}

void write_results(const SweepOutput& out, const std::filesystem::path& dir) {
    std::filesystem::create_directories(dir);
    write_file_atomic(dir / "results.csv", results_csv(out.runs));
    write_file_atomic(dir / "aggregates.csv", aggregates_csv(out.aggregates));
    write_file_atomic(dir / "results.json", results_json(out));
}

}  // namespace plate
