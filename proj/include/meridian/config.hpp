#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meridian/format.hpp"
#include "meridian/mac.hpp"

namespace meridian {

// One design point of the accelerator template.
struct AcceleratorConfig {
    int rows = 16;
    int cols = 16;
    int64_t input_buffer_bytes = 32 * 1024;   // L1 input, double-buffered
    int64_t weight_buffer_bytes = 32 * 1024;  // L1 weight, double-buffered
    int64_t accum_buffer_bytes = 32 * 1024;   // accumulation buffer
    int64_t bandwidth_bytes_per_cycle = 32;   // main memory
    numerics::MacSpec mac = numerics::MacSpec::make(
        numerics::ScalarFormat::int8(), numerics::ScalarFormat::int8(),
        numerics::ScalarFormat::int32());
    numerics::ScalarFormat accum_float = numerics::ScalarFormat::bf16();
    int vector_width = 16;          // N lanes of the vector unit
    bool double_buffered_accum = false;
    int dwc_mac_trees = 0;          // 0 = no DWC unit
    std::vector<numerics::ScalarFormat> supported_formats;  // multi-precision tuple
    int64_t main_memory_bytes = int64_t{1} << 31;

    bool valid() const {
        return rows >= 1 && cols >= 1 && input_buffer_bytes > 0 && weight_buffer_bytes > 0 &&
               accum_buffer_bytes > 0 && bandwidth_bytes_per_cycle > 0 && vector_width >= 1;
    }
    bool supports(const numerics::ScalarFormat& f) const;

    // Buffer sizing convention used across the preset design points:
    // input = rows * 2 KiB, weight = accum = cols * 2 KiB, N = cols.
    static AcceleratorConfig preset(int rows, int cols);
};

}  // namespace meridian
