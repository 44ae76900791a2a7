#pragma once

#include <stdexcept>
#include <string>

namespace vmonarch {

// Shape/precondition violations. Kept as thin wrappers so call sites read
// like assertions.
inline void check_dim(bool ok, const std::string& msg) {
    if (!ok) throw std::invalid_argument("dimension error: " + msg);
}

inline void check_domain(bool ok, const std::string& msg) {
    if (!ok) throw std::domain_error("domain error: " + msg);
}

inline void check_state(bool ok, const std::string& msg) {
    if (!ok) throw std::logic_error("state error: " + msg);
}

}  // namespace vmonarch
