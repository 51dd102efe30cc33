#pragma once

#include <array>
#include <optional>
#include <string>

namespace evqa {

// The five event relation categories; integer codes are stable file order.
enum class RelationType : int {
    causal = 0,
    conditional = 1,
    counterfactual = 2,
    subevent = 3,
    coreference = 4,
};

inline constexpr int kNumRelationTypes = 5;

inline constexpr std::array<const char*, kNumRelationTypes> kRelationNames = {
    "Causal", "Conditional", "Counterfactual", "Sub-event", "Co-reference"};

inline const char* relation_name(RelationType t) {
    return kRelationNames[static_cast<int>(t)];
}

// Lowercase single-word form used as the input prefix token.
inline const char* relation_prefix(RelationType t) {
    static constexpr std::array<const char*, kNumRelationTypes> kPrefix = {
        "causal", "conditional", "counterfactual", "subevent", "coreference"};
    return kPrefix[static_cast<int>(t)];
}

// Case-, hyphen- and space-insensitive.
inline std::optional<RelationType> parse_relation(const std::string& raw) {
    std::string key;
    for (char ch : raw) {
        if (ch == '-' || ch == '_' || ch == ' ') continue;
        key += char(std::tolower(static_cast<unsigned char>(ch)));
    }
    if (key == "causal") return RelationType::causal;
    if (key == "conditional") return RelationType::conditional;
    if (key == "counterfactual") return RelationType::counterfactual;
    if (key == "subevent") return RelationType::subevent;
    if (key == "coreference") return RelationType::coreference;
    return std::nullopt;
}

}  // namespace evqa
