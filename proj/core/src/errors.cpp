#include "wmlock/errors.hpp"

#include <utility>

namespace wmlock {

Error::Error(std::string kind, const std::string& what)
    : std::runtime_error(what), kind_(std::move(kind)) {}

}  // namespace wmlock
