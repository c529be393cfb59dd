#pragma once

// Locates an SMT solver for tests: $QMASK_SOLVER, else z3 on PATH.

#include <cstdlib>
#include <filesystem>
#include <optional>
#include <sstream>
#include <string>

namespace testsolver {

inline std::optional<std::string> find() {
    if (const char* env = std::getenv("QMASK_SOLVER"); env && *env) return std::string(env);
    const char* path = std::getenv("PATH");
    if (!path) return std::nullopt;
    std::stringstream ss(path);
    std::string dir;
    while (std::getline(ss, dir, ':')) {
        const auto candidate = std::filesystem::path(dir) / "z3";
        if (std::filesystem::exists(candidate)) return candidate.string();
    }
    return std::nullopt;
}

} // namespace testsolver
