#pragma once

#include <cmath>
#include <cstddef>
#include <stdexcept>
#include <vector>

#include "aoi/solver.hpp"

namespace aoi {

namespace detail {

/// Gaussian elimination with partial pivoting on an n x n system with k
/// right-hand sides. A and B are overwritten; the solution lands in B.
inline void solve_dense(std::vector<double>& A, std::vector<double>& B, std::size_t n, std::size_t k) {
    for (std::size_t col = 0; col < n; ++col) {
        std::size_t piv = col;
        for (std::size_t r = col + 1; r < n; ++r)
            if (std::abs(A[r * n + col]) > std::abs(A[piv * n + col])) piv = r;
        if (std::abs(A[piv * n + col]) < 1e-14)
            throw std::runtime_error("oracle: singular chain system");
        if (piv != col) {
            for (std::size_t c = 0; c < n; ++c) std::swap(A[piv * n + c], A[col * n + c]);
            for (std::size_t c = 0; c < k; ++c) std::swap(B[piv * k + c], B[col * k + c]);
        }
        for (std::size_t r = col + 1; r < n; ++r) {
            const double f = A[r * n + col] / A[col * n + col];
            if (f == 0.0) continue;
            for (std::size_t c = col; c < n; ++c) A[r * n + c] -= f * A[col * n + c];
            for (std::size_t c = 0; c < k; ++c) B[r * k + c] -= f * B[col * k + c];
        }
    }
    for (std::size_t col = n; col-- > 0;) {
        for (std::size_t c = 0; c < k; ++c) {
            double v = B[col * k + c];
            for (std::size_t j = col + 1; j < n; ++j) v -= A[col * n + j] * B[j * k + c];
            B[col * k + c] = v / A[col * n + col];
        }
    }
}

}  // namespace detail

/// Exact long-run average cost of one stationary deterministic policy,
/// starting from the reference state.
///
/// The induced chain is analyzed structurally: states reachable from o are
/// found by search, recurrent classes are the closed strongly connected
/// components, each class cost comes from its stationary distribution
/// (dense linear solve), and when o is transient the class costs are mixed
/// by the exact absorption probabilities from o. This path shares nothing
/// with the value-iteration recursion it is used to check.
inline double chain_average_cost(const StateSpace& space, std::span<const std::size_t> action_index,
                                 double beta) {
    const std::size_t n = space.size();
    if (action_index.size() != n) throw std::invalid_argument("chain_average_cost: policy size mismatch");
    const std::size_t ny = space.dist().support_size();
    const double td = space.dist().tick().to_double();

    auto succ = [&](std::size_t s, std::size_t yi) { return space.successor(s, action_index[s], yi); };
    auto cost = [&](std::size_t s) {
        const double z = static_cast<double>(space.grid().value(action_index[s])) * td;
        return stage_cost(space.sum_age_time(s), z, beta, space.dist(), space.sources());
    };

    // Reachable set from o.
    const std::size_t o = space.reference();
    std::vector<std::size_t> order;            // reachable states, discovery order
    std::vector<std::size_t> local(n, StateSpace::npos);
    order.push_back(o);
    local[o] = 0;
    for (std::size_t q = 0; q < order.size(); ++q)
        for (std::size_t yi = 0; yi < ny; ++yi) {
            const std::size_t t = succ(order[q], yi);
            if (local[t] == StateSpace::npos) {
                local[t] = order.size();
                order.push_back(t);
            }
        }
    const std::size_t r = order.size();

    // Tarjan SCC over the reachable subgraph (iterative).
    std::vector<std::size_t> comp(r, StateSpace::npos), low(r), idx(r, StateSpace::npos), stack;
    std::vector<char> on_stack(r, 0);
    std::size_t counter = 0, ncomp = 0;
    for (std::size_t root = 0; root < r; ++root) {
        if (idx[root] != StateSpace::npos) continue;
        std::vector<std::pair<std::size_t, std::size_t>> call;  // (node, next edge)
        call.emplace_back(root, 0);
        idx[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = 1;
        while (!call.empty()) {
            auto& [v, ei] = call.back();
            if (ei < ny) {
                const std::size_t w = local[succ(order[v], ei)];
                ++ei;
                if (idx[w] == StateSpace::npos) {
                    idx[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = 1;
                    call.emplace_back(w, 0);
                } else if (on_stack[w]) {
                    low[v] = std::min(low[v], idx[w]);
                }
            } else {
                if (low[v] == idx[v]) {
                    while (true) {
                        const std::size_t w = stack.back();
                        stack.pop_back();
                        on_stack[w] = 0;
                        comp[w] = ncomp;
                        if (w == v) break;
                    }
                    ++ncomp;
                }
                const std::size_t done = v;
                call.pop_back();
                if (!call.empty()) low[call.back().first] = std::min(low[call.back().first], low[done]);
            }
        }
    }

    // A component is recurrent iff no edge leaves it.
    std::vector<char> closed(ncomp, 1);
    for (std::size_t v = 0; v < r; ++v)
        for (std::size_t yi = 0; yi < ny; ++yi)
            if (comp[local[succ(order[v], yi)]] != comp[v]) closed[comp[v]] = 0;

    std::vector<std::size_t> class_of(ncomp, StateSpace::npos);
    std::vector<std::vector<std::size_t>> classes;  // members in local indices
    for (std::size_t v = 0; v < r; ++v)
        if (closed[comp[v]]) {
            if (class_of[comp[v]] == StateSpace::npos) {
                class_of[comp[v]] = classes.size();
                classes.emplace_back();
            }
            classes[class_of[comp[v]]].push_back(v);
        }

    // Stationary distribution and cost of each recurrent class.
    std::vector<double> class_cost(classes.size(), 0.0);
    for (std::size_t j = 0; j < classes.size(); ++j) {
        const auto& members = classes[j];
        const std::size_t nc = members.size();
        std::vector<std::size_t> pos(r, StateSpace::npos);
        for (std::size_t i = 0; i < nc; ++i) pos[members[i]] = i;
        // (P^T - I) pi = 0 with the last row replaced by the normalization.
        std::vector<double> A(nc * nc, 0.0), B(nc, 0.0);
        for (std::size_t i = 0; i < nc; ++i) {
            for (std::size_t yi = 0; yi < ny; ++yi) {
                const std::size_t t = pos[local[succ(order[members[i]], yi)]];
                A[t * nc + i] += space.dist().prob(yi);
            }
            A[i * nc + i] -= 1.0;
        }
        for (std::size_t i = 0; i < nc; ++i) A[(nc - 1) * nc + i] = 1.0;
        B[nc - 1] = 1.0;
        detail::solve_dense(A, B, nc, 1);
        for (std::size_t i = 0; i < nc; ++i) class_cost[j] += B[i] * cost(order[members[i]]);
    }

    if (closed[comp[0]]) return class_cost[class_of[comp[0]]];

    // o is transient: absorption probabilities into each class.
    std::vector<std::size_t> transient;
    std::vector<std::size_t> trow(r, StateSpace::npos);
    for (std::size_t v = 0; v < r; ++v)
        if (!closed[comp[v]]) {
            trow[v] = transient.size();
            transient.push_back(v);
        }
    const std::size_t nt = transient.size();
    const std::size_t k = classes.size();
    std::vector<double> A(nt * nt, 0.0), B(nt * k, 0.0);
    for (std::size_t i = 0; i < nt; ++i) {
        A[i * nt + i] = 1.0;
        for (std::size_t yi = 0; yi < ny; ++yi) {
            const std::size_t w = local[succ(order[transient[i]], yi)];
            const double p = space.dist().prob(yi);
            if (closed[comp[w]])
                B[i * k + class_of[comp[w]]] += p;
            else
                A[i * nt + trow[w]] -= p;
        }
    }
    detail::solve_dense(A, B, nt, k);
    double total = 0.0;
    for (std::size_t j = 0; j < k; ++j) total += B[trow[0] * k + j] * class_cost[j];
    return total;
}

struct OracleResult {
    double optimal_cost = 0.0;
    std::vector<Tick> best_wait;        // ticks, per state
    std::size_t policies_evaluated = 0;
};

/// Enumerates every stationary deterministic policy and evaluates each with
/// chain_average_cost, refusing when |Z|^|S| exceeds the cap. Ties keep the
/// first (smallest-wait lexicographic) policy.
inline OracleResult exhaustive_oracle(const StateSpace& space, double beta,
                                      double max_policies = 1e6) {
    const std::size_t n = space.size();
    const std::size_t nz = space.grid().size();
    double projected = 1.0;
    for (std::size_t s = 0; s < n; ++s) {
        projected *= static_cast<double>(nz);
        if (projected > max_policies)
            throw std::invalid_argument("exhaustive_oracle: |Z|^|S| exceeds the cap");
    }

    std::vector<std::size_t> action(n, 0);
    OracleResult result;
    result.optimal_cost = std::numeric_limits<double>::infinity();
    while (true) {
        const double cost = chain_average_cost(space, action, beta);
        ++result.policies_evaluated;
        if (cost < result.optimal_cost) {
            result.optimal_cost = cost;
            result.best_wait.resize(n);
            for (std::size_t s = 0; s < n; ++s) result.best_wait[s] = space.grid().value(action[s]);
        }
        std::size_t s = n;
        while (s-- > 0) {
            if (++action[s] < nz) break;
            action[s] = 0;
            if (s == 0) return result;
        }
        if (s == static_cast<std::size_t>(-1)) return result;
    }
}

}  // namespace aoi
