#pragma once

#include <charconv>
#include <cstdint>
#include <string>
#include <vector>

#include "ildnet/errors.hpp"
#include "ildnet/model.hpp"

namespace ildnet {

inline std::vector<std::string> split_list(const std::string& text, char sep) {
    std::vector<std::string> out;
    std::size_t pos = 0;
    while (pos <= text.size()) {
        const std::size_t next = text.find(sep, pos);
        out.push_back(text.substr(pos, next == std::string::npos ? next : next - pos));
        if (next == std::string::npos) break;
        pos = next + 1;
    }
    return out;
}

inline std::uint64_t parse_u64(const std::string& text, const std::string& what) {
    std::uint64_t v = 0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw ConfigError(what + ": '" + text + "' is not a non-negative integer");
    return v;
}

inline double parse_double(const std::string& text, const std::string& what) {
    double v = 0.0;
    const auto [end, ec] = std::from_chars(text.data(), text.data() + text.size(), v);
    if (ec != std::errc() || end != text.data() + text.size())
        throw ConfigError(what + ": '" + text + "' is not a number");
    return v;
}

inline bool parse_bool(const std::string& text, const std::string& what) {
    if (text == "true" || text == "1") return true;
    if (text == "false" || text == "0") return false;
    throw ConfigError(what + ": '" + text + "' is not true/false");
}

// Shortest decimal form that parses back to the same double.
inline std::string format_double(double v) {
    char buf[64];
    const auto [end, ec] = std::to_chars(buf, buf + sizeof buf, v);
    if (ec != std::errc()) throw NumericError("cannot format number");
    return std::string(buf, end);
}

inline std::vector<std::size_t> parse_size_list(const std::string& text, const std::string& what) {
    std::vector<std::size_t> out;
    for (const std::string& part : split_list(text, ','))
        out.push_back(static_cast<std::size_t>(parse_u64(part, what)));
    return out;
}

inline std::vector<double> parse_double_list(const std::string& text, const std::string& what) {
    std::vector<double> out;
    for (const std::string& part : split_list(text, ','))
        out.push_back(parse_double(part, what));
    return out;
}

// "32:7,64:5" -> conv block list (filters:kernel pairs).
inline std::vector<ConvBlockSpec> parse_blocks(const std::string& text, const std::string& what) {
    std::vector<ConvBlockSpec> out;
    for (const std::string& part : split_list(text, ',')) {
        const std::size_t colon = part.find(':');
        if (colon == std::string::npos)
            throw ConfigError(what + ": block '" + part + "' is not filters:kernel");
        out.push_back({static_cast<std::size_t>(parse_u64(part.substr(0, colon), what)),
                       static_cast<std::size_t>(parse_u64(part.substr(colon + 1), what))});
    }
    return out;
}

inline std::string format_blocks(const std::vector<ConvBlockSpec>& blocks) {
    std::string out;
    for (std::size_t i = 0; i < blocks.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(blocks[i].filters) + ":" + std::to_string(blocks[i].kernel);
    }
    return out;
}

inline std::string format_size_list(const std::vector<std::size_t>& sizes) {
    std::string out;
    for (std::size_t i = 0; i < sizes.size(); ++i) {
        if (i) out += ',';
        out += std::to_string(sizes[i]);
    }
    return out;
}

inline std::string format_double_list(const std::vector<double>& values) {
    std::string out;
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ',';
        out += format_double(values[i]);
    }
    return out;
}

}  // namespace ildnet
