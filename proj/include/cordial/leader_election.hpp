#pragma once

#include <map>
#include <optional>
#include <set>
#include <string>

#include "cordial/crypto.hpp"
#include "cordial/types.hpp"

namespace cordial {

enum class Model { EventualSynchrony, Asynchrony };

inline const char* to_string(Model m) {
    return m == Model::EventualSynchrony ? "eventual-synchrony" : "asynchrony";
}

inline Model parse_model(const std::string& s) {
    if (s == "eventual-synchrony" || s == "es") return Model::EventualSynchrony;
    if (s == "asynchrony" || s == "async") return Model::Asynchrony;
    throw Error("unknown model '" + s + "'");
}

/// Round offsets of the finality rule.  alpha: approving round, beta:
/// acknowledging round, stride: spacing of leader rounds.
struct WaveParams {
    Round alpha = 1;
    Round beta = 2;
    Round leader_stride = 2;
    Model model = Model::EventualSynchrony;

    static constexpr WaveParams eventual_synchrony() { return {1, 2, 2, Model::EventualSynchrony}; }
    static constexpr WaveParams asynchrony() { return {2, 5, 6, Model::Asynchrony}; }
    static constexpr WaveParams for_model(Model m) {
        return m == Model::EventualSynchrony ? eventual_synchrony() : asynchrony();
    }

    /// Rounds from a leader round to its finality, both inclusive.
    constexpr Round wave_length() const { return beta + 1; }
    constexpr bool is_leader_round(Round d) const { return d != 0 && d % leader_stride == 0; }
};

struct LeaderSchedule {
    enum class Mode { Deterministic, Coin };

    Mode mode = Mode::Deterministic;
    std::uint32_t n = 4;
    Round stride = 2;
    std::uint64_t seed = 0;
};

/// Round-robin over leader rounds: (d / stride) mod n.
inline std::optional<MinerId> deterministic_leader(const LeaderSchedule& s, Round d) {
    if (d == 0 || s.stride == 0 || d % s.stride != 0) return std::nullopt;
    return MinerId((d / s.stride) % s.n);
}

/// The value a fair coin assigns to round r, PRF(seed, r) mod n.  Only the
/// oracle and offline tooling call this directly.
inline MinerId coin_value(std::uint64_t seed, std::uint32_t n, Round r) {
    return MinerId(static_cast<std::uint32_t>(prf64("cordial-coin", seed, r) % n));
}

/// Simulated shared random coin.  A round's value is revealed once f+1
/// distinct miners have requested it; every caller then sees the same value.
class CoinOracle {
public:
    CoinOracle(std::uint32_t n, std::uint32_t f, Round stride, std::uint64_t seed)
        : n_(n), f_(f), stride_(stride), seed_(seed) {}

    std::optional<MinerId> request(MinerId p, Round r) {
        if (r == 0 || r % stride_ != 0) throw Error("coin requested for non-leader round " + std::to_string(r));
        if (auto it = revealed_.find(r); it != revealed_.end()) {
            callers_[r].insert(p.value);
            return it->second;
        }
        auto& who = callers_[r];
        who.insert(p.value);
        if (who.size() >= f_ + 1) {
            MinerId v = coin_value(seed_, n_, r);
            revealed_.emplace(r, v);
            return v;
        }
        return std::nullopt;
    }

    bool is_revealed(Round r) const { return revealed_.contains(r); }

    /// Value of a revealed round; never exposes unrevealed rounds.
    std::optional<MinerId> revealed(Round r) const {
        if (auto it = revealed_.find(r); it != revealed_.end()) return it->second;
        return std::nullopt;
    }

    const std::map<Round, MinerId>& revealed_rounds() const { return revealed_; }
    std::size_t caller_count(Round r) const {
        auto it = callers_.find(r);
        return it == callers_.end() ? 0 : it->second.size();
    }

    std::uint32_t n() const { return n_; }
    Round stride() const { return stride_; }

private:
    std::uint32_t n_;
    std::uint32_t f_;
    Round stride_;
    std::uint64_t seed_;
    std::map<Round, std::set<std::uint32_t>> callers_;
    std::map<Round, MinerId> revealed_;
};

/// The only way adversary code may learn about round r's coin.
inline bool adversary_peek_guard(const CoinOracle& oracle, Round r) { return oracle.is_revealed(r); }

inline LeaderFn deterministic_leader_fn(std::uint32_t n, Round stride) {
    LeaderSchedule s{LeaderSchedule::Mode::Deterministic, n, stride, 0};
    return [s](Round d) { return deterministic_leader(s, d); };
}

/// Leader function that sees every coin value; for offline analysis of a
/// finished run or generated blocklaces.
inline LeaderFn revealed_coin_leader_fn(std::uint32_t n, Round stride, std::uint64_t seed) {
    return [=](Round d) -> std::optional<MinerId> {
        if (d == 0 || d % stride != 0) return std::nullopt;
        return coin_value(seed, n, d);
    };
}

inline LeaderFn oracle_leader_fn(const CoinOracle& oracle) {
    return [&oracle](Round d) { return oracle.revealed(d); };
}

}  // namespace cordial
