#include "meridian/value.hpp"

#include <cassert>
#include <cmath>
#include <stdexcept>

namespace meridian::numerics {

namespace {

uint64_t width_mask(int width) {
    return width >= 64 ? ~uint64_t{0} : ((uint64_t{1} << width) - 1);
}

int top_bit_u128(unsigned __int128 v) {
    uint64_t upper = static_cast<uint64_t>(v >> 64);
    uint64_t lower = static_cast<uint64_t>(v);
    if (upper) return 64 + (63 - __builtin_clzll(upper));
    if (lower) return 63 - __builtin_clzll(lower);
    return -1;
}

// Round the magnitude (mant * 2^exp2, + sticky tail) onto the grid of
// multiples of 2^quantum_exp with round-to-nearest-even. Returns the
// (possibly very large) integer multiple in 128 bits.
unsigned __int128 round_to_quantum(unsigned __int128 mant, int32_t exp2, bool sticky,
                                   int32_t quantum_exp) {
    int shift = quantum_exp - exp2;
    if (shift <= 0) {
        // exact multiple already; saturate the shift so callers' range
        // checks kick in instead of silently wrapping
        if (mant != 0 && -shift >= 128) return ~(unsigned __int128)0;
        if (-shift > 0 && top_bit_u128(mant) - shift > 127) return ~(unsigned __int128)0;
        return mant << -shift;
    }
    if (shift >= 129) return 0;  // mantissas are < 2^128, so below half a quantum
    unsigned __int128 q, rem, half;
    if (shift == 128) {
        q = 0;
        rem = mant;
        half = (unsigned __int128)1 << 127;
    } else {
        q = mant >> shift;
        rem = mant & (((unsigned __int128)1 << shift) - 1);
        half = (unsigned __int128)1 << (shift - 1);
    }
    if (rem > half || (rem == half && (sticky || (q & 1)))) q += 1;
    return q;
}

struct Magnitude {
    unsigned __int128 mant = 0;
    int32_t exp2 = 0;
    bool sticky = false;
    bool is_zero() const { return mant == 0 && !sticky; }
};

// ---------------------------------------------------------------- integers

ScalarValue encode_int(bool negative, const Magnitude& m, const ScalarFormat& fmt) {
    unsigned __int128 n = round_to_quantum(m.mant, m.exp2, m.sticky, 0);
    unsigned __int128 max_mag;
    if (fmt.is_signed) {
        max_mag = negative ? ((unsigned __int128)1 << (fmt.width - 1))
                           : (((unsigned __int128)1 << (fmt.width - 1)) - 1);
    } else {
        max_mag = negative ? 0 : (((unsigned __int128)1 << fmt.width) - 1);
    }
    if (n > max_mag) n = max_mag;
    uint64_t bits;
    if (negative)
        bits = (uint64_t)((~(uint64_t)n + 1) & width_mask(fmt.width));
    else
        bits = (uint64_t)n;
    return {fmt, bits & width_mask(fmt.width)};
}

Real decode_int(const ScalarValue& v) {
    const auto& f = v.format;
    uint64_t bits = v.bits & width_mask(f.width);
    int64_t val;
    if (f.is_signed && (bits >> (f.width - 1)) != 0) {
        val = (int64_t)(bits | ~width_mask(f.width));
    } else {
        val = (int64_t)bits;
    }
    return Real::finite(Dyadic::from_int(val));
}

// ------------------------------------------------------------------ floats

ScalarValue float_inf(const ScalarFormat& f, bool negative) {
    uint64_t exp_all = width_mask(f.exponent_bits);
    uint64_t bits = (exp_all << f.mantissa_bits);
    if (negative) bits |= uint64_t{1} << (f.width - 1);
    return {f, bits};
}

ScalarValue float_nan(const ScalarFormat& f) {
    uint64_t exp_all = width_mask(f.exponent_bits);
    uint64_t bits = (exp_all << f.mantissa_bits) | (uint64_t{1} << (f.mantissa_bits - 1));
    return {f, bits};
}

ScalarValue encode_float(bool negative, const Magnitude& m, const ScalarFormat& f) {
    uint64_t sign_bit = negative ? (uint64_t{1} << (f.width - 1)) : 0;
    if (m.is_zero()) return {f, sign_bit};

    int bias = f.bias();
    int top = top_bit_u128(m.mant);
    int value_exp = m.exp2 + top;  // floor(log2 |x|), ignoring the sticky tail
    int max_exp = (1 << f.exponent_bits) - 2 - bias;

    int quantum = (value_exp < 1 - bias) ? (1 - bias - f.mantissa_bits)
                                         : (value_exp - f.mantissa_bits);
    unsigned __int128 n = round_to_quantum(m.mant, m.exp2, m.sticky, quantum);

    // Rounding may have pushed a subnormal into the normal range or bumped
    // the exponent of a normal value.
    if (value_exp < 1 - bias) {
        if (n >= ((unsigned __int128)1 << f.mantissa_bits)) {
            // became the smallest normal
            uint64_t bits = sign_bit | (uint64_t{1} << f.mantissa_bits);
            return {f, bits};
        }
        return {f, sign_bit | (uint64_t)n};
    }
    if (n >= ((unsigned __int128)2 << f.mantissa_bits)) {
        n >>= 1;
        value_exp += 1;
    }
    if (value_exp > max_exp) return float_inf(f, negative);
    uint64_t biased = (uint64_t)(value_exp + bias);
    uint64_t frac = (uint64_t)(n - ((unsigned __int128)1 << f.mantissa_bits));
    return {f, sign_bit | (biased << f.mantissa_bits) | frac};
}

Real decode_float(const ScalarValue& v) {
    const auto& f = v.format;
    uint64_t bits = v.bits & width_mask(f.width);
    bool neg = (bits >> (f.width - 1)) != 0;
    uint64_t exp = (bits >> f.mantissa_bits) & width_mask(f.exponent_bits);
    uint64_t frac = bits & width_mask(f.mantissa_bits);
    int bias = f.bias();
    if (exp == width_mask(f.exponent_bits)) {
        if (frac != 0) return Real::nan();
        return neg ? Real::neg_inf() : Real::pos_inf();
    }
    int64_t mant;
    int32_t e;
    if (exp == 0) {
        mant = (int64_t)frac;
        e = 1 - bias - f.mantissa_bits;
    } else {
        mant = (int64_t)(frac | (uint64_t{1} << f.mantissa_bits));
        e = (int32_t)exp - bias - f.mantissa_bits;
    }
    if (neg) mant = -mant;
    return Real::finite(Dyadic{mant, e}.normalized());
}

// ------------------------------------------------------------------ posits

// Posit decode per the 2022 standard: 0 -> zero, 1000... -> NaR, negative
// patterns decode as the negation of their two's complement.
Real decode_posit(const ScalarValue& v) {
    const auto& f = v.format;
    uint64_t mask = width_mask(f.width);
    uint64_t bits = v.bits & mask;
    if (bits == 0) return Real::finite(Dyadic::zero());
    uint64_t nar = uint64_t{1} << (f.width - 1);
    if (bits == nar) return Real::nan();

    bool neg = (bits & nar) != 0;
    uint64_t p = neg ? ((~bits + 1) & mask) : bits;

    // regime: run of identical bits starting at position width-2
    int pos = f.width - 2;
    int first = (int)((p >> pos) & 1);
    int run = 0;
    while (pos >= 0 && (int)((p >> pos) & 1) == first) {
        ++run;
        --pos;
    }
    if (pos >= 0) --pos;  // skip the regime terminator
    int k = first ? run - 1 : -run;

    // exponent: up to es bits; missing bits are zero
    int e = 0;
    for (int i = 0; i < f.es_bits; ++i) {
        e <<= 1;
        if (pos >= 0) {
            e |= (int)((p >> pos) & 1);
            --pos;
        }
    }

    // fraction: remaining bits
    int nf = pos + 1;
    uint64_t frac = nf > 0 ? (p & width_mask(nf)) : 0;

    int32_t total_exp = k * (1 << f.es_bits) + e;
    int64_t mant = (int64_t)((uint64_t{1} << nf) | frac);
    Dyadic d{neg ? -mant : mant, total_exp - nf};
    return Real::finite(d.normalized());
}

uint64_t posit_max_pattern(const ScalarFormat& f) { return width_mask(f.width - 1); }

Dyadic posit_value_of(const ScalarFormat& f, uint64_t pattern) {
    Real r = decode_posit({f, pattern});
    assert(r.is_finite());
    return r.value;
}

// Positive posit patterns order like integers, so encoding is a binary
// search for the nearest representable value with ties to even pattern.
ScalarValue encode_posit(bool negative, const Magnitude& m, const ScalarFormat& f) {
    uint64_t mask = width_mask(f.width);
    if (m.is_zero()) return {f, 0};

    Dyadic x;
    {
        // Collapse the magnitude to a dyadic for comparisons; keep up to 62
        // bits of mantissa, plus sticky knowledge for exact-tie detection.
        unsigned __int128 mm = m.mant;
        int32_t e = m.exp2;
        bool lossy = m.sticky;
        while (top_bit_u128(mm) > 61) {
            lossy = lossy || (mm & 1);
            mm >>= 1;
            e += 1;
        }
        x = Dyadic{(int64_t)(uint64_t)mm, e}.normalized();
        // A lossy tail only matters for exact ties; nudging the value up by
        // the sticky is handled conservatively in the comparisons below.
        if (lossy) {
            // append a tiny epsilon: double the mantissa and add one at a
            // lower exponent so compares treat it as strictly greater
            if (x.mant <= (INT64_MAX >> 2)) x = Dyadic{x.mant * 4 + 1, x.exp2 - 2};
        }
    }

    uint64_t lo = 1, hi = posit_max_pattern(f);
    Dyadic minpos = posit_value_of(f, lo);
    Dyadic maxpos = posit_value_of(f, hi);
    uint64_t chosen;
    if (!(minpos < x) && !(x == minpos)) {
        chosen = lo;  // 0 < x <= minpos: never round to zero
    } else if (maxpos < x || x == maxpos) {
        chosen = hi;  // saturate
    } else {
        // largest pattern with value <= x
        while (lo + 1 < hi) {
            uint64_t mid = lo + (hi - lo) / 2;
            if (posit_value_of(f, mid) <= x)
                lo = mid;
            else
                hi = mid;
        }
        Dyadic vlo = posit_value_of(f, lo);
        Dyadic vhi = posit_value_of(f, hi);
        // distance compare: 2x vs vlo + vhi
        Dyadic two_x{x.mant, x.exp2 + 1};
        Dyadic sum = dyadic_add_small(vlo, vhi);
        int c = compare(two_x, sum);
        if (c < 0)
            chosen = lo;
        else if (c > 0)
            chosen = hi;
        else
            chosen = (lo & 1) == 0 ? lo : hi;  // tie to even pattern
    }
    uint64_t bits = negative ? ((~chosen + 1) & mask) : chosen;
    return {f, bits};
}

}  // namespace

// -------------------------------------------------------------------- NF4

const std::array<Dyadic, 16>& nf4_codebook() {
    // NormalFloat4 constants stored as bf16.
    static const std::array<Dyadic, 16> table = [] {
        const double raw[16] = {
            -1.0,
            -0.6961928009986877,
            -0.5250730514526367,
            -0.39491748809814453,
            -0.28444138169288635,
            -0.18477343022823334,
            -0.09105003625154495,
            0.0,
            0.07958029955625534,
            0.16093020141124725,
            0.24611230194568634,
            0.33791524171829224,
            0.44070982933044434,
            0.5626170039176941,
            0.7229568362236023,
            1.0,
        };
        std::array<Dyadic, 16> t{};
        for (int i = 0; i < 16; ++i) {
            ScalarValue b = encode(raw[i], ScalarFormat::bf16());
            Real r = decode(b);
            t[(size_t)i] = r.value;
        }
        return t;
    }();
    return table;
}

namespace {

Real decode_nf4(const ScalarValue& v) {
    return Real::finite(nf4_codebook()[v.bits & 0xF]);
}

ScalarValue encode_nf4(bool negative, const Magnitude& m, const ScalarFormat& f) {
    // Nearest codebook entry via midpoint comparisons; ties to even index.
    Dyadic x;
    {
        unsigned __int128 mm = m.mant;
        int32_t e = m.exp2;
        bool lossy = m.sticky;
        while (mm != 0 && top_bit_u128(mm) > 60) {
            lossy = lossy || (mm & 1);
            mm >>= 1;
            e += 1;
        }
        x = Dyadic{(int64_t)(uint64_t)mm, e};
        if (lossy && x.mant <= (INT64_MAX >> 2)) x = Dyadic{x.mant * 4 + 1, x.exp2 - 2};
        if (negative) x = x.negated();
    }
    // midpoints[i] separates entry i from entry i+1 (codebook is ascending)
    static const std::array<Dyadic, 15> midpoints = [] {
        const auto& c = nf4_codebook();
        std::array<Dyadic, 15> t{};
        for (int i = 0; i < 15; ++i) {
            Dyadic s = dyadic_add_small(c[(size_t)i], c[(size_t)i + 1]);
            t[(size_t)i] = Dyadic{s.mant, s.exp2 - 1};
        }
        return t;
    }();
    for (int i = 0; i < 15; ++i) {
        int c = compare(x, midpoints[(size_t)i]);
        if (c < 0) return {f, (uint64_t)i};
        if (c == 0) return {f, (uint64_t)((i & 1) == 0 ? i : i + 1)};
    }
    return {f, 15};
}

// ------------------------------------------------------------------- E8M0

Real decode_e8m0(const ScalarValue& v) {
    uint64_t e = v.bits & 0xFF;
    if (e == 255) return Real::nan();
    return Real::finite(Dyadic::pow2((int32_t)e - 127));
}

ScalarValue encode_e8m0(bool negative, const Magnitude& m, const ScalarFormat& f) {
    if (negative || m.is_zero()) return {f, 0};  // nearest representable to <=0 is 2^-127
    int top = top_bit_u128(m.mant);
    int32_t e = m.exp2 + top;  // floor(log2 x)
    // nearest power of two in value: 2^e vs 2^(e+1), midpoint 1.5*2^e
    bool above_mid;
    if (top == 0) {
        above_mid = false;  // exactly 2^e (sticky raises value but below 1.5)
    } else {
        // compare mantissa against 1.5 * 2^top; ties pick the even biased code
        unsigned __int128 mid = ((unsigned __int128)3) << (top - 1);
        above_mid = m.mant > mid || (m.mant == mid && (m.sticky || ((e + 127) & 1)));
    }
    int32_t chosen = above_mid ? e + 1 : e;
    int32_t biased = chosen + 127;
    if (biased < 0) biased = 0;
    if (biased > 254) biased = 254;
    return {f, (uint64_t)biased};
}

}  // namespace

ScalarValue make_value(const ScalarFormat& fmt, uint64_t bits) {
    if (!fmt.valid()) throw std::invalid_argument("invalid scalar format");
    return {fmt, bits & width_mask(fmt.width)};
}

Real decode(const ScalarValue& v) {
    switch (v.format.kind) {
        case FormatKind::Int: return decode_int(v);
        case FormatKind::Float: return decode_float(v);
        case FormatKind::Posit: return decode_posit(v);
        case FormatKind::NormalFloat4: return decode_nf4(v);
        case FormatKind::ScaleE8M0: return decode_e8m0(v);
    }
    throw std::logic_error("unreachable");
}

ScalarValue encode_wide(const WideReal& x, const ScalarFormat& fmt) {
    Magnitude m{x.mant, x.exp2, x.sticky};
    switch (fmt.kind) {
        case FormatKind::Int: return encode_int(x.negative, m, fmt);
        case FormatKind::Float: return encode_float(x.negative, m, fmt);
        case FormatKind::Posit: return encode_posit(x.negative, m, fmt);
        case FormatKind::NormalFloat4: return encode_nf4(x.negative, m, fmt);
        case FormatKind::ScaleE8M0: return encode_e8m0(x.negative, m, fmt);
    }
    throw std::logic_error("unreachable");
}

ScalarValue encode(const Real& x, const ScalarFormat& fmt) {
    if (x.is_nan()) {
        switch (fmt.kind) {
            case FormatKind::Float: return float_nan(fmt);
            case FormatKind::Posit: return {fmt, uint64_t{1} << (fmt.width - 1)};
            case FormatKind::ScaleE8M0: return {fmt, 255};
            default: throw std::domain_error("NaN not representable in format");
        }
    }
    if (x.is_inf()) {
        bool neg = x.cls == RealClass::NegInf;
        switch (fmt.kind) {
            case FormatKind::Float: return float_inf(fmt, neg);
            default: {
                // saturating formats: max-magnitude finite
                WideReal w;
                w.negative = neg;
                Dyadic mx = max_representable(fmt);
                w.mant = (unsigned __int128)mx.mant;
                w.exp2 = mx.exp2;
                return encode_wide(w, fmt);
            }
        }
    }
    return encode_wide(WideReal::from_dyadic(x.value), fmt);
}

ScalarValue encode(double x, const ScalarFormat& fmt) {
    if (std::isnan(x)) return encode(Real::nan(), fmt);
    if (std::isinf(x)) return encode(x > 0 ? Real::pos_inf() : Real::neg_inf(), fmt);
    return encode(Real::finite(dyadic_from_double(x)), fmt);
}

Dyadic max_representable(const ScalarFormat& fmt) {
    switch (fmt.kind) {
        case FormatKind::Int:
            return Dyadic::from_int(fmt.is_signed ? (int64_t)(width_mask(fmt.width - 1))
                                                  : (int64_t)width_mask(fmt.width));
        case FormatKind::Float: {
            // (2 - 2^-M) * 2^max_exp
            int max_exp = (1 << fmt.exponent_bits) - 2 - fmt.bias();
            int64_t mant = (int64_t)((uint64_t{2} << fmt.mantissa_bits) - 1);
            return Dyadic{mant, max_exp - fmt.mantissa_bits}.normalized();
        }
        case FormatKind::Posit:
            return posit_value_of(fmt, posit_max_pattern(fmt));
        case FormatKind::NormalFloat4:
            return Dyadic::from_int(1);
        case FormatKind::ScaleE8M0:
            return Dyadic::pow2(127);
    }
    throw std::logic_error("unreachable");
}

Dyadic min_positive(const ScalarFormat& fmt) {
    switch (fmt.kind) {
        case FormatKind::Int:
            return Dyadic::from_int(1);
        case FormatKind::Float:
            return Dyadic::pow2(1 - fmt.bias() - fmt.mantissa_bits);
        case FormatKind::Posit:
            return posit_value_of(fmt, 1);
        case FormatKind::NormalFloat4: {
            // smallest positive codebook entry
            const auto& cb = nf4_codebook();
            Dyadic best = cb[15];
            for (const auto& d : cb)
                if (Dyadic::zero() < d && d < best) best = d;
            return best;
        }
        case FormatKind::ScaleE8M0:
            return Dyadic::pow2(-127);
    }
    throw std::logic_error("unreachable");
}

Dyadic float_ulp(const ScalarFormat& fmt, const Dyadic& at) {
    if (fmt.kind != FormatKind::Float) throw std::invalid_argument("float_ulp: not a float");
    if (at.is_zero()) return Dyadic::pow2(1 - fmt.bias() - fmt.mantissa_bits);
    Dyadic a = dyadic_abs(at);
    int top = 0;
    {
        uint64_t m = (uint64_t)a.mant;
        top = 63 - __builtin_clzll(m);
    }
    int e = a.exp2 + top;
    if (e < 1 - fmt.bias()) e = 1 - fmt.bias();
    return Dyadic::pow2(e - fmt.mantissa_bits);
}

}  // namespace meridian::numerics
