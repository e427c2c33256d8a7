#pragma once

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <string>
#include <utility>

#include "plate/dataset.hpp"

namespace plate {

/// Two interleaved unit half-circles (class 0 upper, class 1 lower and
/// shifted), n/2 points each with angle drawn uniformly; the cloud is then
/// rotated about the analytic centre (0.5, 0.25) and translated.
Dataset gen_two_moons(std::size_t n, double noise_sigma, double rotation_deg, std::array<double, 2> translation,
                      std::uint64_t seed);

/// Centre of the noise-free two-moons cloud.
inline constexpr std::array<double, 2> kMoonsCentre{0.5, 0.25};

/// Unit vector of task 2: cos(alpha) e1 + sin(alpha) e2 (task 1 uses e1).
std::vector<double> rotated_direction(std::size_t d, double alpha);

/// x ~ N(0, I_d), targets tanh(w^T x) as n x 1 matrices. Task 1 and task 2
/// inputs come from independent streams.
std::pair<Dataset, Dataset> gen_rotated_regression(std::size_t d, double alpha, std::size_t n, std::uint64_t seed);

struct Estimate {
    double mean = 0.0;
    double std_error = 0.0;
};

/// D^2(alpha) = E[(tanh(w1.x) - tanh(w2.x))^2] by Monte Carlo.
Estimate task_dissimilarity(double alpha, std::size_t n_mc, std::uint64_t seed);

/// Gaussian class blobs in a random low-dimensional subspace of R^dim,
/// a stand-in for small digit images.
struct BlobSpec {
    std::size_t dim = 64;
    std::size_t latent_dim = 12;
    std::size_t classes = 10;
    double centre_scale = 1.0;    // class centres ~ N(0, centre_scale^2) in latent space
    double within_scale = 0.45;   // within-class spread in latent space
    double ambient_noise = 0.02;  // isotropic noise in the full space
    std::uint64_t seed = 0;       // fixes the subspace and the centres
};

/// n samples with labels uniform over [first_class, first_class + count),
/// remapped to [0, count).
Dataset gen_blobs(const BlobSpec& spec, std::size_t first_class, std::size_t count, std::size_t n,
                  std::uint64_t sample_seed);

/// IDX image/label pair; pixels scaled to [0, 1].
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

/// Labels [first, first + count) remapped to [0, count).
Dataset filter_classes(const Dataset& d, int first, int count);

}  // namespace plate
