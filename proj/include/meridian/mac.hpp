#pragma once

#include <vector>

#include "meridian/value.hpp"

namespace meridian::numerics {

enum class RoundingMode : uint8_t { RNE };

// Multiply-accumulate contract for one PE lane configuration.
struct MacSpec {
    ScalarFormat input_format;
    ScalarFormat weight_format;
    ScalarFormat psum_format;
    RoundingMode rounding = RoundingMode::RNE;
    int vector_width = 1;

    static MacSpec make(ScalarFormat in, ScalarFormat w, ScalarFormat psum,
                        int vector_width = 1);
};

// psum' = input * weight + psum with format-specific semantics:
//   Int:   exact widening multiply-add, wraparound in psum_format
//   Float: fused multiply-add, single RNE rounding into psum_format
//   Posit: decode -> exact FMA -> encode (saturating, NaR propagates)
//   NF4:   codebook lookup then the float path
// Operand formats must match the spec; mismatches throw.
ScalarValue mac(const ScalarValue& input, const ScalarValue& weight, const ScalarValue& psum,
                const MacSpec& spec);

// Elementwise MAC over vector lanes (vector_width > 1).
std::vector<ScalarValue> mac_lanes(const std::vector<ScalarValue>& inputs,
                                   const std::vector<ScalarValue>& weights,
                                   const std::vector<ScalarValue>& psums, const MacSpec& spec);

// Fast path used by the simulator for integer formats: raw two's complement
// MAC with wraparound at `width` bits.
int64_t int_mac_raw(int64_t input, int64_t weight, int64_t psum, int width);

}  // namespace meridian::numerics
