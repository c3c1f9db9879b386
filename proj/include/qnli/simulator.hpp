#pragma once

#include <cmath>
#include <complex>
#include <functional>
#include <thread>
#include <vector>

#include "qnli/circuit.hpp"
#include "qnli/common.hpp"

namespace qnli {

using cplx = std::complex<double>;

// Gate conventions (pinned so golden files stay bit-stable):
//   RX(t) = exp(-i t X / 2), RZ(t) = diag(e^{-it/2}, e^{+it/2}),
//   CRZ(t) = diag(1, 1, e^{-it/2}, e^{+it/2}) on (control, target),
//   H = [[1,1],[1,-1]]/sqrt(2). Qubit 0 is the least significant bit.

inline void apply_gate(std::vector<cplx>& state, const Gate& g) {
    const std::size_t n = state.size();
    const std::size_t m0 = std::size_t(1) << g.q0;
    switch (g.kind) {
        case GateKind::H: {
            const double r = 1.0 / std::sqrt(2.0);
            for (std::size_t i = 0; i < n; ++i) {
                if (i & m0) continue;
                cplx a = state[i], b = state[i | m0];
                state[i] = r * (a + b);
                state[i | m0] = r * (a - b);
            }
            break;
        }
        case GateKind::RX: {
            const double c = std::cos(g.angle / 2.0);
            const cplx is(0.0, -std::sin(g.angle / 2.0));
            for (std::size_t i = 0; i < n; ++i) {
                if (i & m0) continue;
                cplx a = state[i], b = state[i | m0];
                state[i] = c * a + is * b;
                state[i | m0] = is * a + c * b;
            }
            break;
        }
        case GateKind::RZ: {
            const cplx e0 = std::exp(cplx(0.0, -g.angle / 2.0));
            const cplx e1 = std::exp(cplx(0.0, g.angle / 2.0));
            for (std::size_t i = 0; i < n; ++i) state[i] *= (i & m0) ? e1 : e0;
            break;
        }
        case GateKind::CRZ: {
            const std::size_t m1 = std::size_t(1) << g.q1;
            const cplx e0 = std::exp(cplx(0.0, -g.angle / 2.0));
            const cplx e1 = std::exp(cplx(0.0, g.angle / 2.0));
            for (std::size_t i = 0; i < n; ++i)
                if (i & m0) state[i] *= (i & m1) ? e1 : e0;
            break;
        }
        case GateKind::CNOT: {
            const std::size_t m1 = std::size_t(1) << g.q1;
            for (std::size_t i = 0; i < n; ++i)
                if ((i & m0) && !(i & m1)) std::swap(state[i], state[i | m1]);
            break;
        }
    }
}

// Unnormalized amplitudes on the output qubits after projecting every
// postselected qubit onto |0>, plus the postselection probability.
struct PostselectedOutput {
    std::vector<cplx> amps;  // 2^m, little-endian over Circuit::outputs order
    double p_post = 0.0;
};

inline PostselectedOutput simulate(const Circuit& c, int qubit_cap = 16) {
    if (c.n_qubits > qubit_cap)
        throw malformed_input("circuit needs " + std::to_string(c.n_qubits) +
                              " qubits, cap is " + std::to_string(qubit_cap));
    for (const Gate& g : c.gates)
        if (g.slot >= 0) throw error("simulate requires a bound circuit");

    std::vector<cplx> state(std::size_t(1) << c.n_qubits, cplx(0.0, 0.0));
    state[0] = 1.0;
    for (const Gate& g : c.gates) apply_gate(state, g);

    double norm = 0.0;
    for (const cplx& a : state) norm += std::norm(a);
    if (std::abs(norm - 1.0) > 1e-9)
        throw numeric_failure("state norm drifted: " + std::to_string(norm));

    PostselectedOutput out;
    const std::size_t m = c.outputs.size();
    out.amps.resize(std::size_t(1) << m);
    for (std::size_t j = 0; j < out.amps.size(); ++j) {
        std::size_t full = 0;
        for (std::size_t k = 0; k < m; ++k)
            if (j & (std::size_t(1) << k))
                full |= std::size_t(1) << c.outputs[k];
        out.amps[j] = state[full];
        out.p_post += std::norm(state[full]);
    }
    if (out.p_post > 1.0 + 1e-12)
        throw numeric_failure("postselection probability above 1");
    return out;
}

// Anything below this is treated as a failed postselection. The trainer's
// retry policy jitters the offending parameters; outside training it is an
// error.
inline constexpr double kMinPostselection = 1e-30;

/// Normalized bitstring distribution P(i) = |amps_i|^2 / p_post.
inline std::vector<double> distribution(const PostselectedOutput& out) {
    if (out.p_post < kMinPostselection)
        throw numeric_failure("postselection norm is zero");
    std::vector<double> p(out.amps.size());
    for (std::size_t i = 0; i < p.size(); ++i)
        p[i] = std::norm(out.amps[i]) / out.p_post;
    return p;
}

namespace detail {

template <typename Fn>
void parallel_for(std::size_t n, int threads, Fn&& fn) {
    if (threads <= 1 || n < 2) {
        for (std::size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    const std::size_t nt = std::min<std::size_t>(std::size_t(threads), n);
    std::vector<std::thread> pool;
    std::vector<std::exception_ptr> errs(nt);
    for (std::size_t t = 0; t < nt; ++t) {
        pool.emplace_back([&, t] {
            try {
                for (std::size_t i = t; i < n; i += nt) fn(i);
            } catch (...) {
                errs[t] = std::current_exception();
            }
        });
    }
    for (auto& th : pool) th.join();
    for (auto& e : errs)
        if (e) std::rethrow_exception(e);
}

}  // namespace detail

/// Central finite differences, coordinate by coordinate. Each probe writes
/// only its own gradient entry, so parallel evaluation is deterministic.
inline std::vector<double> finite_difference_gradient(
    const std::function<double(const std::vector<double>&)>& loss,
    const std::vector<double>& theta, double h = 1e-3, int threads = 1) {
    if (!(h > 0.0)) throw malformed_input("finite-difference step must be > 0");
    std::vector<double> grad(theta.size(), 0.0);
    detail::parallel_for(theta.size(), threads, [&](std::size_t i) {
        std::vector<double> probe = theta;
        probe[i] = theta[i] + h;
        double up = loss(probe);
        probe[i] = theta[i] - h;
        double down = loss(probe);
        if (!std::isfinite(up) || !std::isfinite(down))
            throw numeric_failure("non-finite loss at gradient probe");
        grad[i] = (up - down) / (2.0 * h);
    });
    return grad;
}

}  // namespace qnli
