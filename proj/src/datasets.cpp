#include "plate/datasets.hpp"

#include <cmath>
#include <numbers>
#include <string>

#include "plate/error.hpp"
#include "plate/numerics/linalg.hpp"
#include "plate/numerics/rng.hpp"

namespace plate {

Dataset gen_two_moons(std::size_t n, double noise_sigma, double rotation_deg, std::array<double, 2> translation,
                      std::uint64_t seed) {
    PLATE_REQUIRE(n >= 2 && n % 2 == 0, "gen_two_moons: n must be even and at least 2");
    PLATE_REQUIRE(noise_sigma >= 0.0, "gen_two_moons: noise must be non-negative");
    SeededRng rng(derive_seed(seed, "moons"));
    const double th = rotation_deg * std::numbers::pi / 180.0;
    const double c = std::cos(th);
    const double s = std::sin(th);
    Dataset d;
    d.inputs = Matrix(n, 2);
    std::vector<int> labels(n);
    d.num_classes = 2;
    for (std::size_t i = 0; i < n; ++i) {
        const int label = i < n / 2 ? 0 : 1;
        const double t = std::numbers::pi * rng.uniform();
        double x = label == 0 ? std::cos(t) : 1.0 - std::cos(t);
        double y = label == 0 ? std::sin(t) : 0.5 - std::sin(t);
        x += noise_sigma * rng.normal();
        y += noise_sigma * rng.normal();
        const double dx = x - kMoonsCentre[0];
        const double dy = y - kMoonsCentre[1];
        d.inputs(i, 0) = kMoonsCentre[0] + c * dx - s * dy + translation[0];
        d.inputs(i, 1) = kMoonsCentre[1] + s * dx + c * dy + translation[1];
        labels[i] = label;
    }
    d.targets = std::move(labels);
    return d;
}

std::vector<double> rotated_direction(std::size_t d, double alpha) {
    PLATE_REQUIRE(d >= 2, "rotated_direction: need d >= 2");
    std::vector<double> w(d, 0.0);
    w[0] = std::cos(alpha);
    w[1] = std::sin(alpha);
    return w;
}

std::pair<Dataset, Dataset> gen_rotated_regression(std::size_t d, double alpha, std::size_t n, std::uint64_t seed) {
    PLATE_REQUIRE(d >= 2, "gen_rotated_regression: need d >= 2");
    PLATE_REQUIRE(n >= 1, "gen_rotated_regression: need n >= 1");
    PLATE_REQUIRE(alpha >= 0.0 && alpha <= std::numbers::pi + 1e-12, "gen_rotated_regression: alpha must lie in [0, pi]");
    auto make = [&](const std::vector<double>& w, std::string_view tag) {
        SeededRng rng(derive_seed(seed, tag));
        Dataset ds;
        ds.inputs = gaussian_matrix(n, d, rng);
        Matrix y(n, 1);
        for (std::size_t i = 0; i < n; ++i) y(i, 0) = std::tanh(dot(ds.inputs.row(i), w));
        ds.targets = std::move(y);
        return ds;
    };
    return {make(rotated_direction(d, 0.0), "task1"), make(rotated_direction(d, alpha), "task2")};
}

Estimate task_dissimilarity(double alpha, std::size_t n_mc, std::uint64_t seed) {
    PLATE_REQUIRE(n_mc >= 1000, "task_dissimilarity: need at least 1000 Monte Carlo samples");
    SeededRng rng(derive_seed(seed, "dissimilarity"));
    const double c = std::cos(alpha);
    const double s = std::sin(alpha);
    double sum = 0.0;
    double sum_sq = 0.0;
    for (std::size_t i = 0; i < n_mc; ++i) {
        const double z1 = rng.normal();
        const double z2 = rng.normal();
        const double diff = std::tanh(z1) - std::tanh(c * z1 + s * z2);
        const double v = diff * diff;
        sum += v;
        sum_sq += v * v;
    }
    const double n = static_cast<double>(n_mc);
    const double mean = sum / n;
    const double var = std::max(0.0, (sum_sq - n * mean * mean) / (n - 1.0));
    return {mean, std::sqrt(var / n)};
}

Dataset gen_blobs(const BlobSpec& spec, std::size_t first_class, std::size_t count, std::size_t n,
                  std::uint64_t sample_seed) {
    PLATE_REQUIRE(spec.latent_dim >= 1 && spec.latent_dim <= spec.dim, "gen_blobs: latent_dim must lie in [1, dim]");
    PLATE_REQUIRE(count >= 1 && first_class + count <= spec.classes, "gen_blobs: class range outside [0, classes)");
    PLATE_REQUIRE(n >= 1, "gen_blobs: need n >= 1");
    SeededRng layout(derive_seed(spec.seed, "blob-layout"));
    SeededRng basis_rng = layout.split("basis");
    SeededRng centre_rng = layout.split("centres");
    const Matrix basis = qr_orthonormalize(gaussian_matrix(spec.dim, spec.latent_dim, basis_rng));
    Matrix centres = gaussian_matrix(spec.classes, spec.latent_dim, centre_rng);
    for (double& v : centres.values()) v *= spec.centre_scale;

    SeededRng rng(derive_seed(sample_seed, "blob-samples"));
    Dataset d;
    d.num_classes = count;
    d.inputs = Matrix(n, spec.dim);
    std::vector<int> labels(n);
    std::vector<double> z(spec.latent_dim);
    for (std::size_t i = 0; i < n; ++i) {
        const auto cls = static_cast<std::size_t>(rng.below(count));
        labels[i] = static_cast<int>(cls);
        for (std::size_t t = 0; t < spec.latent_dim; ++t)
            z[t] = centres(first_class + cls, t) + spec.within_scale * rng.normal();
        auto row = d.inputs.row(i);
        for (std::size_t j = 0; j < spec.dim; ++j) {
            double acc = spec.ambient_noise * rng.normal();
            for (std::size_t t = 0; t < spec.latent_dim; ++t) acc += basis(j, t) * z[t];
            row[j] = acc;
        }
    }
    d.targets = std::move(labels);
    return d;
}

Dataset filter_classes(const Dataset& d, int first, int count) {
    PLATE_REQUIRE(d.is_classification(), "filter_classes: dataset has no class labels");
    PLATE_REQUIRE(count >= 1, "filter_classes: count must be positive");
    const auto& y = std::get<std::vector<int>>(d.targets);
    std::vector<std::size_t> keep;
    for (std::size_t i = 0; i < y.size(); ++i)
        if (y[i] >= first && y[i] < first + count) keep.push_back(i);
    Dataset out = subset(d, keep);
    for (int& v : std::get<std::vector<int>>(out.targets)) v -= first;
    out.num_classes = static_cast<std::size_t>(count);
    return out;
}

}  // namespace plate
