#pragma once

#include <optional>
#include <string>

namespace evqa {

enum class Setting { generative, extractive };
enum class Tagging { io, bio };

// Tag label codes for the extractive head.
inline constexpr int kTagO = 0;
inline constexpr int kTagI = 1;
inline constexpr int kTagB = 2;

inline const char* setting_name(Setting s) {
    return s == Setting::generative ? "generative" : "extractive";
}

inline const char* tagging_name(Tagging t) { return t == Tagging::io ? "io" : "bio"; }

inline std::optional<Setting> parse_setting(const std::string& s) {
    if (s == "generative") return Setting::generative;
    if (s == "extractive") return Setting::extractive;
    return std::nullopt;
}

inline std::optional<Tagging> parse_tagging(const std::string& s) {
    if (s == "io") return Tagging::io;
    if (s == "bio") return Tagging::bio;
    return std::nullopt;
}

}  // namespace evqa
