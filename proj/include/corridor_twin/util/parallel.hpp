#pragma once

namespace ctwin {

/// Parallel paths use OpenMP; the serial path is the reference they are tested against.
enum class Execution { serial, parallel };

int max_threads();
/// Applies to every later parallel region in the process.
void set_threads(int threads);

}  // namespace ctwin
