#pragma once

#include <algorithm>
#include <cstdint>
#include <span>
#include <stdexcept>
#include <vector>

#include "aoi/model.hpp"

namespace aoi {

/// Enumerated recurrent class of the delivery-epoch age process under the
/// max-age-first scheduler, with a dense transition table.
///
/// Every recurrent state is generated by the last m service times and m-1
/// waits: a_[m] = y0 and, walking backward, a_[l] = a_[l+1] + z + y. The
/// enumeration therefore runs over |Y|^m * |Z|^(m-1) compositions, is
/// deduplicated, and the result is verified to be closed under evolve_state.
class StateSpace {
  public:
    static constexpr std::size_t npos = static_cast<std::size_t>(-1);

    StateSpace(ServiceDistribution dist, WaitGrid grid, int m, std::size_t max_states = 2'000'000)
        : dist_(std::move(dist)), grid_(std::move(grid)), m_(m) {
        if (m_ < 1) throw std::invalid_argument("StateSpace: m must be >= 1");
        if (!(dist_.tick() == grid_.tick()))
            throw std::invalid_argument("StateSpace: distribution and grid tick sizes differ");

        const std::size_t ny = dist_.support_size();
        const std::size_t nz = grid_.size();
        std::size_t projected = ny;
        for (int r = 1; r < m_; ++r) {
            projected *= ny * nz;
            if (projected > max_states)
                throw std::length_error("StateSpace: projected state count exceeds cap");
        }

        std::vector<std::vector<Tick>> frontier;
        for (Tick y0 : dist_.values()) frontier.push_back({y0});
        for (int r = 1; r < m_; ++r) {
            std::vector<std::vector<Tick>> next;
            next.reserve(frontier.size() * ny * nz);
            for (const auto& tail : frontier)
                for (Tick z : grid_.values())
                    for (Tick y : dist_.values()) {
                        std::vector<Tick> v;
                        v.reserve(tail.size() + 1);
                        v.push_back(tail.front() + z + y);
                        v.insert(v.end(), tail.begin(), tail.end());
                        next.push_back(std::move(v));
                    }
            frontier = std::move(next);
        }
        std::sort(frontier.begin(), frontier.end());
        frontier.erase(std::unique(frontier.begin(), frontier.end()), frontier.end());

        states_.reserve(frontier.size());
        for (auto& v : frontier) states_.emplace_back(std::move(v));

        // Dense successor table doubles as the closure check.
        succ_.resize(states_.size() * nz * ny);
        for (std::size_t i = 0; i < states_.size(); ++i)
            for (std::size_t zi = 0; zi < nz; ++zi)
                for (std::size_t yi = 0; yi < ny; ++yi) {
                    const auto next = evolve_state(states_[i], grid_.value(zi), dist_.value(yi));
                    const std::size_t j = index_of(next);
                    if (j == npos)
                        throw std::logic_error("StateSpace: recurrent class not closed under evolve_state");
                    succ_[(i * nz + zi) * ny + yi] = static_cast<std::uint32_t>(j);
                }
    }

    const ServiceDistribution& dist() const { return dist_; }
    const WaitGrid& grid() const { return grid_; }
    int sources() const { return m_; }
    std::size_t size() const { return states_.size(); }
    const SortedAgeState& state(std::size_t i) const { return states_[i]; }
    std::span<const SortedAgeState> states() const { return states_; }

    /// Reference state o: the lexicographically smallest state.
    std::size_t reference() const { return 0; }

    /// Ordinal of a state, or npos when it is not a member.
    std::size_t index_of(const SortedAgeState& s) const {
        auto it = std::lower_bound(states_.begin(), states_.end(), s);
        if (it == states_.end() || !(*it == s)) return npos;
        return static_cast<std::size_t>(it - states_.begin());
    }

    /// Successor ordinal for (state ordinal, wait index, support index).
    std::size_t successor(std::size_t i, std::size_t z_index, std::size_t y_index) const {
        return succ_[(i * grid_.size() + z_index) * dist_.support_size() + y_index];
    }

    /// A_s in time units.
    double sum_age_time(std::size_t i) const {
        return static_cast<double>(states_[i].sum()) * dist_.tick().to_double();
    }

  private:
    ServiceDistribution dist_;
    WaitGrid grid_;
    int m_;
    std::vector<SortedAgeState> states_;
    std::vector<std::uint32_t> succ_;
};

inline StateSpace build_state_space(const ServiceDistribution& dist, const WaitGrid& grid, int m,
                                    std::size_t max_states = 2'000'000) {
    return StateSpace(dist, grid, m, max_states);
}

}  // namespace aoi
