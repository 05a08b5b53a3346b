#pragma once

#include <cstddef>
#include <functional>

namespace mfr {

// 0 means "use the hardware count".
unsigned resolve_threads(unsigned requested);

// Runs body(begin, end) over a static block partition of [0, n).
// Each block must write only its own output slots; the partition does not
// depend on scheduling, so results are identical for any thread count.
void parallel_for(std::size_t n, unsigned threads,
                  const std::function<void(std::size_t, std::size_t)>& body);

} // namespace mfr
