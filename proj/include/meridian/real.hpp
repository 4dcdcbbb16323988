#pragma once

#include <cstdint>
#include <string>

namespace meridian::numerics {

// Exact dyadic rational: value = mant * 2^exp2. All representable scalar
// values in this toolkit (ints, floats, posits, NF4, E8M0) are dyadic, so
// this type carries decode results and intermediate MAC values exactly.
struct Dyadic {
    int64_t mant = 0;
    int32_t exp2 = 0;

    static Dyadic zero() { return {0, 0}; }
    static Dyadic from_int(int64_t v) { return Dyadic{v, 0}.normalized(); }
    static Dyadic pow2(int32_t e) { return {1, e}; }

    bool is_zero() const { return mant == 0; }
    Dyadic normalized() const;
    Dyadic negated() const { return {-mant, exp2}; }

    double to_double() const;
    std::string to_string() const;
};

int compare(const Dyadic& a, const Dyadic& b);
inline bool operator==(const Dyadic& a, const Dyadic& b) { return compare(a, b) == 0; }
inline bool operator<(const Dyadic& a, const Dyadic& b) { return compare(a, b) < 0; }
inline bool operator<=(const Dyadic& a, const Dyadic& b) { return compare(a, b) <= 0; }

Dyadic dyadic_mul(const Dyadic& a, const Dyadic& b);  // exact; asserts no overflow
Dyadic dyadic_add_small(const Dyadic& a, const Dyadic& b);  // exact; aligned width must fit 63 bits
Dyadic dyadic_abs(const Dyadic& a);

// Exact conversion from a finite double (doubles are dyadic).
Dyadic dyadic_from_double(double v);

// Wide exact value with a sticky tail, the carrier for rounding decisions.
// magnitude = mant * 2^exp2 (mant >= 0), plus an infinitesimal positive tail
// if sticky is set. Sign is tracked separately.
struct WideReal {
    bool negative = false;
    unsigned __int128 mant = 0;
    int32_t exp2 = 0;
    bool sticky = false;

    bool is_zero() const { return mant == 0 && !sticky; }
    static WideReal from_dyadic(const Dyadic& d);
};

// Exact a*b + c. Inputs are dyadic; the result is exact except that bits
// shifted beyond the 128-bit window collapse into the sticky flag, which is
// all any round-to-nearest-even consumer needs.
WideReal exact_fma(const Dyadic& a, const Dyadic& b, const Dyadic& c);
WideReal exact_add(const WideReal& a, const WideReal& b);

// Exact quotient a/b rounded onto a dyadic grid downstream; produces the
// quotient with at least `precision_bits` significant bits plus sticky.
WideReal exact_div(const Dyadic& a, const Dyadic& b, int precision_bits);

// Classified real value: finite dyadic, signed infinity, or NaN marker.
enum class RealClass : uint8_t { Finite, PosInf, NegInf, NaN };

struct Real {
    RealClass cls = RealClass::Finite;
    Dyadic value;

    static Real finite(Dyadic d) { return {RealClass::Finite, d}; }
    static Real pos_inf() { return {RealClass::PosInf, {}}; }
    static Real neg_inf() { return {RealClass::NegInf, {}}; }
    static Real nan() { return {RealClass::NaN, {}}; }

    bool is_finite() const { return cls == RealClass::Finite; }
    bool is_nan() const { return cls == RealClass::NaN; }
    bool is_inf() const { return cls == RealClass::PosInf || cls == RealClass::NegInf; }
    double to_double() const;
};

}  // namespace meridian::numerics
