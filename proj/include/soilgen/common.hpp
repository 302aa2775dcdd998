#pragma once

#include <sstream>
#include <stdexcept>
#include <string>

namespace soilgen {

struct error : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct shape_error : error {
    using error::error;
};

struct value_error : error {
    using error::error;
};

struct precondition_error : error {
    using error::error;
};

struct io_error : error {
    using error::error;
};

namespace detail {

template <typename... Args>
std::string cat(Args&&... args) {
    std::ostringstream os;
    (os << ... << args);
    return os.str();
}

}  // namespace detail

}  // namespace soilgen

#define SG_CHECK(cond, extype, ...)                                         \
    do {                                                                    \
        if (!(cond)) throw extype(::soilgen::detail::cat(__VA_ARGS__));     \
    } while (0)
