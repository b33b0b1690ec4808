#pragma once

namespace pdistill {

// Keeps large tensor buffers in the heap instead of mapping and unmapping
// them on every step, which otherwise dominates system time. Idempotent.
void tune_allocator();

}  // namespace pdistill
