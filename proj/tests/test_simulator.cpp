#include <catch2/catch_amalgamated.hpp>

#include "oracles.hpp"
#include "qnli/simulator.hpp"

using namespace qnli;

TEST_CASE("trivial circuits", "[simulator]") {
    Circuit empty;
    empty.n_qubits = 1;
    empty.outputs = {0};
    auto out = simulate(empty);
    REQUIRE(out.amps.size() == 2);
    REQUIRE(std::abs(out.amps[0] - cplx(1, 0)) < 1e-15);
    REQUIRE(std::abs(out.amps[1]) < 1e-15);
    REQUIRE(out.p_post == Catch::Approx(1.0));

    Circuit had = empty;
    had.gates = {{GateKind::H, 0, -1, -1, 0.0}};
    auto h = simulate(had);
    const double r = 1.0 / std::sqrt(2.0);
    REQUIRE(std::abs(h.amps[0] - cplx(r, 0)) < 1e-15);
    REQUIRE(std::abs(h.amps[1] - cplx(r, 0)) < 1e-15);
}

TEST_CASE("qubit cap and unbound slots are rejected", "[simulator]") {
    Circuit c;
    c.n_qubits = 17;
    REQUIRE_THROWS_AS(simulate(c), malformed_input);
    c.n_qubits = 1;
    c.outputs = {0};
    c.gates = {{GateKind::RX, 0, -1, 5, 0.0}};
    REQUIRE_THROWS_AS(simulate(c), error);
}

TEST_CASE("agrees with the explicit-matrix oracle", "[simulator]") {
    Rng rng(2024);
    for (int trial = 0; trial < 120; ++trial) {
        int q = 1 + int(rng.below(5));
        Circuit c = oracle::random_circuit(rng, q, 30);
        auto fast = simulate(c);
        auto slow = oracle::matrix_simulate(c);
        REQUIRE(fast.amps.size() == slow.amps.size());
        for (std::size_t i = 0; i < fast.amps.size(); ++i)
            REQUIRE(std::abs(fast.amps[i] - slow.amps[i]) <= 1e-10);
        REQUIRE(std::abs(fast.p_post - slow.p_post) <= 1e-10);
    }
}

TEST_CASE("norm is preserved gate by gate", "[simulator]") {
    Rng rng(7);
    for (int trial = 0; trial < 60; ++trial) {
        int q = 1 + int(rng.below(8));
        Circuit c = oracle::random_circuit(rng, q, 60);
        std::vector<cplx> state(std::size_t(1) << q, 0.0);
        state[0] = 1.0;
        for (const Gate& g : c.gates) {
            apply_gate(state, g);
            double norm = 0.0;
            for (const cplx& a : state) norm += std::norm(a);
            REQUIRE(std::abs(norm - 1.0) <= 1e-12);
        }
    }
}

TEST_CASE("postselection probability stays within bounds", "[simulator]") {
    Rng rng(99);
    for (int trial = 0; trial < 50; ++trial) {
        Circuit c = oracle::random_circuit(rng, 1 + int(rng.below(6)), 40);
        auto out = simulate(c);
        REQUIRE(out.p_post >= 0.0);
        REQUIRE(out.p_post <= 1.0 + 1e-12);
    }
}

TEST_CASE("distribution normalizes amplitudes", "[simulator]") {
    PostselectedOutput out;
    out.amps = {cplx(1, 0), cplx(0, 0)};
    out.p_post = 1.0;
    REQUIRE(distribution(out) == std::vector<double>{1.0, 0.0});

    PostselectedOutput two;
    two.amps = {cplx(0.6, 0), cplx(0, 0.8)};
    two.p_post = 1.0;
    auto p = distribution(two);
    REQUIRE(p[0] == Catch::Approx(0.36));
    REQUIRE(p[1] == Catch::Approx(0.64));
    REQUIRE(p[0] + p[1] == Catch::Approx(1.0).margin(1e-10));

    PostselectedOutput dead;
    dead.amps = {cplx(0, 0), cplx(0, 0)};
    dead.p_post = 0.0;
    REQUIRE_THROWS_AS(distribution(dead), numeric_failure);
}

TEST_CASE("finite differences recover analytic gradients", "[simulator]") {
    auto constant = [](const std::vector<double>&) { return 3.5; };
    auto g0 = finite_difference_gradient(constant, {0.1, 0.2, 0.3});
    for (double g : g0) REQUIRE(g == 0.0);

    auto sine = [](const std::vector<double>& t) { return std::sin(t[0]); };
    auto g1 = finite_difference_gradient(sine, {0.0});
    REQUIRE(std::abs(g1[0] - 1.0) <= 1e-6);

    auto bad = [](const std::vector<double>& t) {
        return t[0] > 0.0 ? std::numeric_limits<double>::quiet_NaN() : 0.0;
    };
    REQUIRE_THROWS_AS(finite_difference_gradient(bad, {0.0}), numeric_failure);
    REQUIRE_THROWS_AS(finite_difference_gradient(sine, {0.0}, 0.0), malformed_input);
}

TEST_CASE("parallel gradient evaluation matches serial", "[simulator]") {
    auto loss = [](const std::vector<double>& t) {
        double s = 0.0;
        for (std::size_t i = 0; i < t.size(); ++i)
            s += std::sin(t[i] * double(i + 1));
        return s;
    };
    std::vector<double> theta;
    Rng rng(5);
    for (int i = 0; i < 12; ++i) theta.push_back(rng.uniform(0.0, 6.28));
    auto serial = finite_difference_gradient(loss, theta, 1e-3, 1);
    auto parallel = finite_difference_gradient(loss, theta, 1e-3, 4);
    REQUIRE(serial == parallel);

    auto bad = [](const std::vector<double>&) {
        return std::numeric_limits<double>::infinity();
    };
    REQUIRE_THROWS_AS(finite_difference_gradient(bad, theta, 1e-3, 4),
                      numeric_failure);
}
