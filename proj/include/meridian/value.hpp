#pragma once

#include <array>
#include <cstdint>

#include "meridian/format.hpp"
#include "meridian/real.hpp"

namespace meridian::numerics {

// A bit pattern interpreted under a ScalarFormat. Patterns are stored in the
// low `width` bits of `bits`.
struct ScalarValue {
    ScalarFormat format;
    uint64_t bits = 0;

    bool operator==(const ScalarValue&) const = default;
};

ScalarValue make_value(const ScalarFormat& fmt, uint64_t bits);

// Exact real value of a bit pattern. NaN patterns (float NaNs, posit NaR,
// E8M0 pattern 255) decode to the NaN marker.
Real decode(const ScalarValue& v);

// Nearest representable value under round-to-nearest-even. Out-of-range
// values saturate to max-magnitude finite for Int/Posit/NF4 and overflow to
// infinity for Float (IEEE semantics). E8M0 encodes the nearest power of two.
ScalarValue encode(const Real& x, const ScalarFormat& fmt);
ScalarValue encode(double x, const ScalarFormat& fmt);

// Rounds an exact wide value (sign tracked inside) into `fmt` with RNE.
ScalarValue encode_wide(const WideReal& x, const ScalarFormat& fmt);

// Largest finite magnitude of the format, as an exact dyadic.
Dyadic max_representable(const ScalarFormat& fmt);
// Smallest positive representable magnitude (subnormal min for floats).
Dyadic min_positive(const ScalarFormat& fmt);

// The sixteen NormalFloat4 codebook entries, already rounded to bf16.
const std::array<Dyadic, 16>& nf4_codebook();

// Unit in the last place of `fmt` at the magnitude of `at` (float formats).
Dyadic float_ulp(const ScalarFormat& fmt, const Dyadic& at);

}  // namespace meridian::numerics
