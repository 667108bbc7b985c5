#pragma once

#include <compare>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace drivepoison {

/// One action token from a DecisionSet, stored in its canonical spelling.
struct Decision {
    std::string token;

    auto operator<=>(const Decision&) const = default;
};

/// The vocabulary of legal decisions for a dataset. Tokens are stored in
/// canonical spelling; lookup() resolves case-insensitively.
class DecisionSet {
public:
    DecisionSet() = default;
    explicit DecisionSet(std::vector<std::string> tokens);

    /// {LANE_LEFT, IDLE, LANE_RIGHT, FASTER, SLOWER}
    static DecisionSet highway();
    /// {Accelerate, Decelerate, Idle, TurnLeft, TurnRight, Stop}
    static DecisionSet urban();

    bool contains(const Decision& d) const;
    std::optional<Decision> lookup(std::string_view token) const;

    const std::vector<std::string>& tokens() const noexcept { return tokens_; }
    bool empty() const noexcept { return tokens_.empty(); }

    bool operator==(const DecisionSet&) const = default;

private:
    std::vector<std::string> tokens_;
};

}  // namespace drivepoison
