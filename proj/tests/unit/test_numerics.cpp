#include <doctest.h>

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numbers>

#include "helpers.hpp"
#include "plate/error.hpp"
#include "plate/numerics/lanczos.hpp"
#include "plate/numerics/linalg.hpp"

using namespace plate;

TEST_CASE("sym_eig: identity and diagonal") {
    const auto id = sym_eig(Matrix::identity(3));
    for (double v : id.values) CHECK(v == doctest::Approx(1.0));
    CHECK(orthonormality_error(id.vectors) < 1e-12);

    const auto d = sym_eig(Matrix{{4, 0, 0}, {0, 1, 0}, {0, 0, 9}});
    CHECK(d.values[0] == doctest::Approx(1.0));
    CHECK(d.values[1] == doctest::Approx(4.0));
    CHECK(d.values[2] == doctest::Approx(9.0));
    CHECK(std::abs(d.vectors(1, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(d.vectors(0, 1)) == doctest::Approx(1.0));
    CHECK(std::abs(d.vectors(2, 2)) == doctest::Approx(1.0));
}

TEST_CASE("sym_eig: planted spectra on random symmetric matrices") {
    for (std::uint64_t seed = 1; seed <= 5; ++seed) {
        const std::size_t n = 8 * seed;
        const Matrix q = testing::random_orthonormal(n, n, seed);
        std::vector<double> planted(n);
        for (std::size_t i = 0; i < n; ++i) planted[i] = -3.0 + 0.37 * static_cast<double>(i * i % 17) + 0.01 * i;
        Matrix qd = q;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) qd(i, j) *= planted[j];
        Matrix g = matmul_nt(qd, q);
        g = 0.5 * (g + transpose(g));
        const auto ours = sym_eig(g);
        std::sort(planted.begin(), planted.end());
        for (std::size_t i = 0; i < n; ++i) CHECK(std::abs(ours.values[i] - planted[i]) < 1e-10);
        CHECK(orthonormality_error(ours.vectors) < 1e-10);

        const Matrix r = testing::random_symmetric(n, seed + 50);
        const auto e = sym_eig(r);
        Matrix lam(n, n);
        for (std::size_t i = 0; i < n; ++i) lam(i, i) = e.values[i];
        const Matrix rec = matmul_nt(matmul(e.vectors, lam), e.vectors);
        CHECK(frobenius_norm(r - rec) / frobenius_norm(r) < 1e-12);
        CHECK(std::is_sorted(e.values.begin(), e.values.end()));
    }
}

TEST_CASE("sym_eig: rejects non-square and asymmetric input") {
    CHECK_THROWS_AS(sym_eig(Matrix(2, 3)), ContractError);
    CHECK_THROWS_AS(sym_eig(Matrix{{1, 2}, {0, 1}}), ContractError);
}

TEST_CASE("fwht: impulse, constant and involution") {
    const auto a = fwht(std::vector<double>{1, 0, 0, 0});
    CHECK(a == std::vector<double>{1, 1, 1, 1});
    const auto b = fwht(std::vector<double>{1, 1, 1, 1});
    CHECK(b == std::vector<double>{4, 0, 0, 0});

    SeededRng rng(3);
    std::vector<double> v(16);
    for (double& x : v) x = rng.normal();
    const auto twice = fwht(fwht(v));
    for (std::size_t i = 0; i < v.size(); ++i) CHECK(std::abs(twice[i] - 16.0 * v[i]) < 1e-12);
    CHECK_THROWS_AS(fwht(std::vector<double>{1, 2, 3}), ContractError);
}

TEST_CASE("qr_orthonormalize") {
    const Matrix q0 = testing::random_orthonormal(6, 3, 4);
    const Matrix q = qr_orthonormalize(q0);
    for (double a : principal_angles(q, q0)) CHECK(a < 1e-10);

    const Matrix axis = qr_orthonormalize(Matrix{{2, 0}, {0, 0}, {0, 3}});
    CHECK(std::abs(axis(0, 0)) == doctest::Approx(1.0));
    CHECK(std::abs(axis(2, 1)) == doctest::Approx(1.0));
    CHECK(orthonormality_error(axis) < 1e-12);

    const Matrix v = testing::random_matrix(10, 4, 5);
    const Matrix qv = qr_orthonormalize(v);
    CHECK(orthonormality_error(qv) < 1e-10);
    // Oracle: Eigen's Householder QR of the same matrix.
    Eigen::MatrixXd e(10, 4);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 4; ++j) e(i, j) = v(i, j);
    const Eigen::MatrixXd thin = Eigen::HouseholderQR<Eigen::MatrixXd>(e).householderQ() * Eigen::MatrixXd::Identity(10, 4);
    Matrix ref(10, 4);
    for (std::size_t i = 0; i < 10; ++i)
        for (std::size_t j = 0; j < 4; ++j) ref(i, j) = thin(i, j);
    for (double a : principal_angles(qv, ref)) CHECK(a < 1e-10);

    try {
        qr_orthonormalize(Matrix{{1, 2}, {1, 2}, {1, 2}});
        FAIL("expected rank deficiency");
    } catch (const RankDeficiencyError& e) {
        CHECK(e.numerical_rank() == 1);
    }
}

TEST_CASE("complement_basis") {
    const Matrix c = complement_basis(Matrix{{1}, {0}, {0}});
    REQUIRE(c.cols() == 2);
    CHECK(orthonormality_error(c) < 1e-12);
    CHECK(std::abs(c(0, 0)) < 1e-12);
    CHECK(std::abs(c(0, 1)) < 1e-12);
    const Matrix all = complement_basis(Matrix(4, 0));
    CHECK(all.cols() == 4);
    CHECK(orthonormality_error(all) < 1e-12);
}

TEST_CASE("principal_angles") {
    const Matrix e1{{1}, {0}, {0}};
    const Matrix e2{{0}, {1}, {0}};
    const Matrix diag{{1 / std::sqrt(2.0)}, {1 / std::sqrt(2.0)}, {0}};
    CHECK(principal_angles(e1, e1)[0] == doctest::Approx(0.0));
    CHECK(principal_angles(e1, e2)[0] == doctest::Approx(std::numbers::pi / 2));
    CHECK(principal_angles(e1, diag)[0] == doctest::Approx(std::numbers::pi / 4));
    CHECK_THROWS_AS(principal_angles(Matrix{{2}, {0}, {0}}, e1), ContractError);
}

TEST_CASE("gaussian_matrix: determinism and moments") {
    SeededRng a(42), b(42);
    CHECK(gaussian_matrix(5, 7, a) == gaussian_matrix(5, 7, b));
    SeededRng rng(7);
    const Matrix g = gaussian_matrix(1000, 1, rng);
    double mean = 0, var = 0;
    for (double v : g.values()) mean += v;
    mean /= 1000;
    for (double v : g.values()) var += (v - mean) * (v - mean);
    var /= 999;
    CHECK(std::abs(mean) < 0.15);
    CHECK(var > 0.8);
    CHECK(var < 1.2);
}

TEST_CASE("rng: split streams are independent of call order") {
    SeededRng parent(9);
    SeededRng c1 = parent.split("x");
    parent.next_u64();
    SeededRng c2 = parent.split("x");
    CHECK(c1.next_u64() == c2.next_u64());
    CHECK(derive_seed(1, "a") != derive_seed(1, "b"));
}

TEST_CASE("lanczos_top finds the largest eigenvalue") {
    const Matrix g = testing::random_symmetric(30, 11);
    const auto ref = sym_eig(g);
    SymmetricOperator op = [&](std::span<const double> x, std::span<double> y) {
        for (std::size_t i = 0; i < 30; ++i) y[i] = dot(g.row(i), x);
    };
    std::vector<double> start(30, 1.0);
    const auto top = lanczos_top(op, start, 30, 1e-12);
    CHECK(top.value == doctest::Approx(ref.values.back()).epsilon(1e-9));
    CHECK(norm2(top.vector) == doctest::Approx(1.0));
}
