#include "glim/rng.hpp"

#include <sstream>

namespace glim::rng {

std::string save_state(const Engine& g) {
    std::ostringstream os;
    os << g;
    return os.str();
}

Engine load_state(const std::string& text) {
    Engine g;
    std::istringstream is(text);
    is >> g;
    if (is.fail()) throw IoError("invalid rng state string");
    return g;
}

}  // namespace glim::rng
