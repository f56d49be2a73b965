#include "turnrl/parallel.hpp"

#include <cstdlib>
#include <string>

namespace turnrl {

int max_threads() {
  int cap = 1;
#ifdef _OPENMP
  cap = omp_get_max_threads();
#endif
  if (const char* env = std::getenv("TURNRL_THREADS")) {
    try {
      const int requested = std::stoi(env);
      if (requested > 0) cap = requested;
    } catch (const std::exception&) {
      // ignore malformed values
    }
  }
  return cap < 1 ? 1 : cap;
}

}  // namespace turnrl
