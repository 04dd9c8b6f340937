#pragma once

#include <functional>
#include <iostream>
#include <string_view>

namespace nglge {

using WarningHandler = std::function<void(std::string_view)>;

/// Process-wide warning sink. Replace before starting any worker threads.
inline WarningHandler &warning_handler() {
    static WarningHandler handler = [](std::string_view message) {
        std::clog << "nglge: warning: " << message << '\n';
    };
    return handler;
}

inline void warn(std::string_view message) {
    if (auto &handler = warning_handler())
        handler(message);
}

} // namespace nglge
