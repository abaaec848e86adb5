#include "catch_amalgamated.hpp"

#include "oracles.hpp"
#include "tvcn/stability.hpp"

using Catch::Approx;
using tvcn::Matrix;

namespace {

Matrix column(std::initializer_list<double> v) {
    Matrix m(v.size(), 1);
    std::size_t r = 0;
    for (double a : v) m(r++, 0) = a;
    return m;
}

}  // namespace

TEST_CASE("one user on one congested link") {
    const Matrix a = column({1.0});
    const std::vector<double> x{2.0}, D{3.0}, t{0.5}, u{0.7};
    CHECK(tvcn::jacobian_x(a, x, D)(0, 0) == Approx(0.0).margin(1e-15));
    CHECK(tvcn::jacobian_q(a, x, D)(0, 0) == Approx(0.5));
    CHECK(tvcn::jacobian_f(a, x, D, t, u)(0, 0) == Approx((0.5 + 0.7) / (9.0 * 2.0)));
}

TEST_CASE("no congested links") {
    const Matrix a(2, 0);
    const std::vector<double> x{1.0, 2.0}, D{4.0, 5.0};
    const Matrix jx = tvcn::jacobian_x(a, x, D);
    CHECK(jx(0, 0) == 0.25);
    CHECK(jx(1, 1) == 0.2);
    CHECK(jx(0, 1) == 0.0);
    const Matrix jq = tvcn::jacobian_q(a, x, D);
    CHECK(jq.rows() == 0);
    CHECK(jq.cols() == 2);
    const Matrix jf = tvcn::jacobian_f(a, x, D, std::vector<double>{1, 1}, std::vector<double>{1, 1});
    CHECK(jf.max_abs() == 0.0);
    CHECK(tvcn::window_identity_residual(a, x, D, jx, jq) < 1e-15);
}

TEST_CASE("zero prefactor gives a zero J_f") {
    Matrix a(2, 1);
    a(0, 0) = a(1, 0) = 1.0;
    const std::vector<double> zero{0.0, 0.0};
    const auto jf = tvcn::jacobian_f(a, std::vector<double>{1, 2}, std::vector<double>{3, 4}, zero, zero);
    CHECK(jf.max_abs() == 0.0);
}

TEST_CASE("singular congested combination is named") {
    Matrix a(2, 2);
    a(0, 0) = a(0, 1) = a(1, 0) = a(1, 1) = 1.0;
    const std::vector<std::size_t> ids{4, 7};
    try {
        tvcn::jacobian_x(a, std::vector<double>{1, 1}, std::vector<double>{1, 1}, ids);
        FAIL("expected SingularMatrix");
    } catch (const tvcn::SingularMatrix& e) {
        const std::string msg = e.what();
        CHECK(msg.find("{4,7}") != std::string::npos);
        CHECK(msg.find("link 7") != std::string::npos);
    }
}

TEST_CASE("Q on the six-node worked example") {
    const std::vector<double> t{9.2593, 4.6296, 9.2593};
    const std::vector<double> u{0.6329, 0.3759, 0.6329};
    const std::vector<double> x{1.08, 2.16, 1.08};
    const std::vector<double> D{42.0744, 14.6398, 43.1729};
    const Matrix q = tvcn::q_matrix(t, u, D, x);
    CHECK(q(0, 0) == Approx(0.0011).margin(5e-5));
    CHECK(q(1, 1) == Approx(0.0034).margin(5e-5));
    CHECK(q(2, 2) == Approx(0.0011).margin(5e-5));
    CHECK(tvcn::is_diagonal(q));
    const auto pd = tvcn::is_positive_definite(q);
    CHECK(pd.positive_definite);
    CHECK(pd.eigenvalues.size() == 3);
}

TEST_CASE("Q from unit inputs") {
    const std::vector<double> one{1.0, 1.0};
    const Matrix q = tvcn::q_matrix(one, one, one, one);
    CHECK(q(0, 0) == 2.0);
    CHECK(q(1, 1) == 2.0);
    CHECK(q(0, 1) == 0.0);
    CHECK_THROWS_AS(tvcn::q_matrix(one, one, one, std::vector<double>{1.0, 0.0}), tvcn::SingularRate);
    CHECK_THROWS_AS(tvcn::q_matrix(one, one, one, std::vector<double>{1.0}), tvcn::ShapeError);
}

TEST_CASE("positive definiteness") {
    CHECK_FALSE(tvcn::is_positive_definite(Matrix(2, 2)).positive_definite);
    Matrix d(2, 2);
    d(0, 0) = -1.0;
    d(1, 1) = 1.0;
    CHECK_FALSE(tvcn::is_positive_definite(d).positive_definite);
    Matrix s(2, 2);
    s(0, 0) = s(1, 1) = 2.0;
    s(0, 1) = s(1, 0) = 1.0;
    const auto r = tvcn::is_positive_definite(s);
    CHECK(r.positive_definite);
    auto ev = r.eigenvalues;
    std::sort(ev.begin(), ev.end());
    CHECK(ev[0] == Approx(1.0));
    CHECK(ev[1] == Approx(3.0));
    CHECK_THROWS_AS(tvcn::is_positive_definite(Matrix(2, 3)), tvcn::ShapeError);
}

TEST_CASE("finite-difference Jacobian") {
    const std::vector<double> w{1.0, -2.0, 5.0};
    const auto lin = tvcn::fd_jacobian(
        [](std::span<const double> v) {
            std::vector<double> out(v.begin(), v.end());
            for (double& a : out) a *= 2.0;
            return out;
        },
        w);
    for (std::size_t r = 0; r < 3; ++r)
        for (std::size_t c = 0; c < 3; ++c) CHECK(lin(r, c) == Approx(r == c ? 2.0 : 0.0).margin(1e-12));

    const auto sq = tvcn::fd_jacobian(
        [](std::span<const double> v) { return std::vector<double>{v[0] * v[0]}; }, std::vector<double>{3.0},
        1e-4);
    CHECK(sq(0, 0) == Approx(6.0).margin(1e-6));

    auto sign = [](std::span<const double> v) { return std::vector<std::size_t>{v[0] > 0.0 ? 1u : 0u}; };
    auto ident = [](std::span<const double> v) { return std::vector<double>(v.begin(), v.end()); };
    CHECK_THROWS_AS(tvcn::fd_jacobian(ident, sign, std::vector<double>{0.0}), tvcn::BoundaryCrossing);
    CHECK_NOTHROW(tvcn::fd_jacobian(ident, sign, std::vector<double>{1.0}));
}

TEST_CASE("closed-form Jacobians match finite differences on interior points") {
    tvcn::Rng rng(21);
    int checked = 0;
    for (int attempt = 0; attempt < 200 && checked < 20; ++attempt) {
        const auto inst = oracle::frozen_instance(rng, 3, 5);
        const auto& p = inst.problem;
        const auto s = tvcn::solve_fluid(p, inst.w, inst.options);
        const auto congested = tvcn::bottleneck_set(p, s);
        if (congested.empty()) continue;
        const Matrix a = tvcn::congested_submatrix(p, congested);
        std::vector<double> u(3);
        for (double& v : u) v = rng.uniform(0.1, 1.0);

        Matrix fd_x, fd_f;
        try {
            auto regime = [&](std::span<const double> w) {
                return tvcn::bottleneck_set(p, tvcn::solve_fluid(p, w, inst.options));
            };
            fd_x = tvcn::fd_jacobian(
                [&](std::span<const double> w) { return tvcn::solve_fluid(p, w, inst.options).x; }, regime,
                inst.w);
            fd_f = tvcn::fd_jacobian([&](std::span<const double> w) { return oracle::frozen_f(inst, u, w); },
                                     regime, inst.w);
        } catch (const tvcn::BoundaryCrossing&) {
            continue;
        }
        const Matrix jx = tvcn::jacobian_x(a, s.x, s.D, congested);
        const Matrix jq = tvcn::jacobian_q(a, s.x, s.D, congested);
        const Matrix jf = tvcn::jacobian_f(a, s.x, s.D, inst.d_trans, u, congested);
        // J_x vanishes when every user is pinned; floor at the uncongested scale.
        const double floor = 1e-3 / *std::min_element(s.D.begin(), s.D.end());
        REQUIRE(tvcn::relative_error(jx, fd_x, floor) < 1e-4);
        REQUIRE(tvcn::relative_error(jf, fd_f, floor) < 1e-4);
        REQUIRE(tvcn::window_identity_residual(a, s.x, s.D, jx, jq) < 1e-10);
        // Rates on congested links do not move with the windows.
        REQUIRE((a.transpose() * jx).max_abs() < 1e-10 * jx.max_abs());
        ++checked;
    }
    CHECK(checked == 20);
}

TEST_CASE("stability report at a fluid equilibrium") {
    tvcn::Rng rng(22);
    const auto inst = oracle::frozen_instance(rng, 3, 4);
    const std::vector<tvcn::UtilityParams> utilities(3);
    tvcn::FluidOptions opt;
    const auto fluid = tvcn::solve_fluid(inst.problem, inst.w, opt);
    const auto r = tvcn::build_stability_report(inst.problem, fluid, inst.w, utilities);
    CHECK(r.V >= 0.0);
    CHECK(r.J_x.rows() == 3);
    CHECK(r.J_x.cols() == 3);
    CHECK(r.J_q.rows() == r.congested.size());
    CHECK(r.Q.rows() == 3);
    CHECK(r.positive_definite);
    CHECK(r.dVdt_q_form <= 0.0);
    CHECK(r.window_identity_residual < 1e-10);
    if (!r.boundary_flag) {
        REQUIRE(r.fd_max_rel_error.has_value());
        CHECK(*r.fd_max_rel_error < 1e-4);
    }

    const auto j = tvcn::stability_to_json(r, true);
    CHECK(j.at("Q").size() == 3);
    CHECK(j.at("eigenvalues").size() == 3);
    CHECK_FALSE(tvcn::stability_to_json(r, false).contains("J_x"));
}
