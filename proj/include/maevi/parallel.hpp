#pragma once

namespace maevi {

/// Applies the MAEVI_THREADS cap (if set) to the OpenMP runtime and
/// returns the resulting worker count.
int configure_threads();

/// Current OpenMP worker count (1 when built without OpenMP).
int max_threads();

}  // namespace maevi
