#pragma once

#include <cstdint>
#include <string>

namespace meridian::numerics {

// Bit-exact scalar format descriptor. Widths are capped at 32 bits so that
// all arithmetic fits comfortably in 64/128-bit host integers.
enum class FormatKind : uint8_t {
    Int,           // two's complement or unsigned integer
    Float,         // IEEE-754 style: 1 + exponent_bits + mantissa_bits
    Posit,         // 2022 posit standard, configurable es
    NormalFloat4,  // 4-bit codebook type, 16 fixed entries
    ScaleE8M0,     // 8-bit power-of-two scale, value = 2^(e-127)
};

struct ScalarFormat {
    FormatKind kind = FormatKind::Int;
    int width = 8;
    bool is_signed = true;  // Int only
    int mantissa_bits = 0;  // Float only
    int exponent_bits = 0;  // Float only
    int es_bits = 0;        // Posit only

    bool operator==(const ScalarFormat&) const = default;

    static ScalarFormat integer(int width, bool is_signed = true);
    static ScalarFormat floating(int exponent_bits, int mantissa_bits);
    static ScalarFormat posit(int width, int es_bits = 2);
    static ScalarFormat nf4();
    static ScalarFormat e8m0();

    static ScalarFormat int8() { return integer(8, true); }
    static ScalarFormat int32() { return integer(32, true); }
    static ScalarFormat bf16() { return floating(8, 7); }
    static ScalarFormat fp32() { return floating(8, 23); }
    static ScalarFormat e4m3() { return floating(4, 3); }

    int bias() const { return (1 << (exponent_bits - 1)) - 1; }
    int storage_bytes() const { return (width + 7) / 8; }
    bool valid() const;
};

// Spec string grammar: "int8", "uint4", "fp<E>e<M>m" (e.g. "fp4e3m" = E4M3),
// "bf16", "fp32", "posit<W>es<ES>", "nf4", "e8m0".
ScalarFormat parse_format(const std::string& spec);
std::string format_to_string(const ScalarFormat& fmt);

}  // namespace meridian::numerics
