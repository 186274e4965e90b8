#pragma once

#include <cmath>
#include <cstdint>
#include <random>
#include <sstream>
#include <stdexcept>
#include <string>

namespace codeq {

// All exported failures funnel through this type so callers can catch one thing.
class Error : public std::runtime_error {
public:
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

namespace detail {

inline void str_append(std::ostringstream&) {}

template <typename T, typename... Rest>
void str_append(std::ostringstream& oss, T&& head, Rest&&... rest) {
    oss << std::forward<T>(head);
    str_append(oss, std::forward<Rest>(rest)...);
}

template <typename... Args>
std::string str(Args&&... args) {
    std::ostringstream oss;
    str_append(oss, std::forward<Args>(args)...);
    return oss.str();
}

} // namespace detail

template <typename... Args>
[[noreturn]] void fail(Args&&... args) {
    throw Error(detail::str(std::forward<Args>(args)...));
}

#define CODEQ_REQUIRE(cond, ...)             \
    do {                                     \
        if (!(cond)) {                       \
            ::codeq::fail(__VA_ARGS__);      \
        }                                    \
    } while (0)

// Single RNG type everywhere; seeds are explicit so runs replay exactly.
using Rng = std::mt19937_64;

inline bool is_finite(float v) {
    return std::isfinite(v);
}

inline bool is_finite(double v) {
    return std::isfinite(v);
}

} // namespace codeq
