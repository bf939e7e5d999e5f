#include "maevi/parallel.hpp"

#include <cstdlib>
#include <string>

#ifdef _OPENMP
#include <omp.h>
#endif

namespace maevi {

int configure_threads() {
#ifdef _OPENMP
  if (const char* env = std::getenv("MAEVI_THREADS")) {
    try {
      const int n = std::stoi(env);
      if (n > 0) omp_set_num_threads(n);
    } catch (const std::exception&) {
      // Unparseable values leave the runtime default in place.
    }
  }
#endif
  return max_threads();
}

int max_threads() {
#ifdef _OPENMP
  return omp_get_max_threads();
#else
  return 1;
#endif
}

}  // namespace maevi
