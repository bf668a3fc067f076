#include "dsdtex/random.hpp"

#include <sstream>
#include <stdexcept>

namespace dsdtex {

std::string serialize_rng(const Rng& rng) {
    std::ostringstream os;
    os << rng;
    return os.str();
}

Rng deserialize_rng(const std::string& state) {
    Rng rng;
    std::istringstream is(state);
    is >> rng;
    if (!is) throw std::runtime_error("corrupt RNG state");
    return rng;
}

}  // namespace dsdtex
