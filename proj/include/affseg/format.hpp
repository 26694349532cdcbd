#pragma once

#include <charconv>
#include <string>

namespace affseg {

// Shortest decimal form that parses back to the same double.
inline std::string shortest(double v)
{
    char buf[32];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

}  // namespace affseg
