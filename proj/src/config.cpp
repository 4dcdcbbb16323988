#include "meridian/config.hpp"

namespace meridian {

bool AcceleratorConfig::supports(const numerics::ScalarFormat& f) const {
    if (supported_formats.empty()) return true;  // single-precision design: no gating
    for (const auto& s : supported_formats)
        if (s == f) return true;
    return false;
}

AcceleratorConfig AcceleratorConfig::preset(int rows, int cols) {
    AcceleratorConfig c;
    c.rows = rows;
    c.cols = cols;
    c.input_buffer_bytes = (int64_t)rows * 2048;
    c.weight_buffer_bytes = (int64_t)cols * 2048;
    c.accum_buffer_bytes = (int64_t)cols * 2048;
    c.vector_width = cols;
    c.dwc_mac_trees = 0;
    return c;
}

}  // namespace meridian
