#include "cmdkit/parallel.hpp"

#include <charconv>
#include <cstdlib>
#include <cstring>

namespace cmdkit {

unsigned resolve_threads(unsigned requested) {
  if (requested > 0) return requested;
  if (const char* env = std::getenv("CMDKIT_THREADS")) {
    unsigned value = 0;
    const char* end = env + std::strlen(env);
    auto [ptr, ec] = std::from_chars(env, end, value);
    if (ec == std::errc{} && ptr == end && value > 0) return value;
  }
  return 1;
}

}  // namespace cmdkit
