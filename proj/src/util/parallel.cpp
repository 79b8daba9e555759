#include "corridor_twin/util/parallel.hpp"

#include "corridor_twin/errors.hpp"

#include <omp.h>

#include <string>

namespace ctwin {

int max_threads() { return omp_get_max_threads(); }

void set_threads(int threads)
{
    if (threads < 1)
        throw ContractError("thread count must be at least 1, got " + std::to_string(threads));
    omp_set_num_threads(threads);
}

}  // namespace ctwin
