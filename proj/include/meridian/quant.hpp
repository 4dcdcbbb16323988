#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "meridian/mac.hpp"
#include "meridian/value.hpp"

namespace meridian::quant {

using numerics::Dyadic;
using numerics::ScalarFormat;
using numerics::ScalarValue;

enum class Granularity : uint8_t { PerTensor, PerChannel, Block };

struct QuantScheme {
    Granularity granularity = Granularity::PerTensor;
    int64_t block_size = 32;        // Block only, along the reduction dim
    ScalarFormat scale_format = ScalarFormat::bf16();
    ScalarFormat target_format = ScalarFormat::int8();
    bool symmetric = true;
    bool pow2_scale = false;  // forced on when scale_format is E8M0

    bool uses_pow2() const {
        return pow2_scale || scale_format.kind == numerics::FormatKind::ScaleE8M0;
    }
};

// Mirrors the quantizer API strings: "int8,qs=per_tensor",
// "int8,qs=block32,scale=e8m0", "int8,qs=per_channel,scale=bf16".
QuantScheme parse_quant_spec(const std::string& spec);
std::string quant_spec_to_string(const QuantScheme& q);

// Absolute-maximum calibration statistics, one slot per scale group.
struct CalibrationStats {
    std::vector<Dyadic> absmax;
    int64_t count = 0;

    void observe(const std::vector<double>& values, size_t groups,
                 const std::vector<size_t>& group_of);
    void observe_per_tensor(const std::vector<double>& values);
};

struct QuantizedTensor {
    std::vector<ScalarValue> elements;  // target_format
    std::vector<ScalarValue> scales;    // scale_format
    QuantScheme scheme;
    std::vector<int64_t> shape;
    int axis = -1;  // channel axis (PerChannel) or reduction axis (Block)
};

// scale_i = absmax_i / max_representable(target); power-of-two mode rounds
// the scale UP to the next power of two so no value clips below absmax.
// absmax == 0 yields the smallest positive representable scale.
std::vector<ScalarValue> compute_scale(const CalibrationStats& stats, const QuantScheme& scheme);

// e_i = encode(x_i / scale(group(i)), target_format). NaN inputs are
// rejected. `axis` selects the channel (PerChannel) or reduction (Block)
// dimension; negative axis counts from the end.
QuantizedTensor quantize(const std::vector<double>& x, const std::vector<int64_t>& shape,
                         const QuantScheme& scheme, const std::vector<ScalarValue>& scales,
                         int axis = -1);

// x_i = decode(e_i) * decode(scale(group(i))), rounded once into out_format.
// A NaN scale (E8M0 pattern 255) raises an error.
std::vector<ScalarValue> dequantize(const QuantizedTensor& q,
                                    ScalarFormat out_format = ScalarFormat::bf16());

// prev + decode(psum_int) * decode(in_scale) * decode(w_scale), rounded once
// into prev's (accumulation) format. Heart of the microscaling datapath.
ScalarValue mx_dequant_psum(const ScalarValue& psum_int, const ScalarValue& in_scale,
                            const ScalarValue& w_scale, const ScalarValue& prev);

// Number of scale groups for a tensor of `shape` under `scheme` along `axis`.
size_t scale_group_count(const std::vector<int64_t>& shape, const QuantScheme& scheme, int axis);

// Group index of flat element `i` (row-major) for the scheme.
size_t scale_group_of(const std::vector<int64_t>& shape, const QuantScheme& scheme, int axis,
                      size_t flat_index);

}  // namespace meridian::quant
