#include "meridian/real.hpp"

#include <cassert>
#include <cmath>
#include <cstdlib>
#include <sstream>
#include <stdexcept>

namespace meridian::numerics {

namespace {

int top_bit_u128(unsigned __int128 v) {
    // index of the highest set bit, -1 if zero
    int hi = -1;
    uint64_t upper = static_cast<uint64_t>(v >> 64);
    uint64_t lower = static_cast<uint64_t>(v);
    if (upper) hi = 64 + (63 - __builtin_clzll(upper));
    else if (lower) hi = 63 - __builtin_clzll(lower);
    return hi;
}

}  // namespace

Dyadic Dyadic::normalized() const {
    if (mant == 0) return {0, 0};
    Dyadic d = *this;
    while ((d.mant & 1) == 0) {
        d.mant >>= 1;
        d.exp2 += 1;
    }
    return d;
}

double Dyadic::to_double() const { return std::ldexp(static_cast<double>(mant), exp2); }

std::string Dyadic::to_string() const {
    std::ostringstream os;
    os << mant << "*2^" << exp2;
    return os.str();
}

int compare(const Dyadic& a, const Dyadic& b) {
    if (a.mant == 0 && b.mant == 0) return 0;
    bool an = a.mant < 0, bn = b.mant < 0;
    if (a.mant == 0) return bn ? 1 : -1;
    if (b.mant == 0) return an ? -1 : 1;
    if (an != bn) return an ? -1 : 1;
    // same sign: compare |a| vs |b| using magnitudes in 128 bits
    unsigned __int128 ma = an ? -(__int128)a.mant : (__int128)a.mant;
    unsigned __int128 mb = bn ? -(__int128)b.mant : (__int128)b.mant;
    int ta = top_bit_u128(ma) + a.exp2;
    int tb = top_bit_u128(mb) + b.exp2;
    int mag;
    if (ta != tb) {
        mag = ta < tb ? -1 : 1;
    } else {
        // align to common exponent; shifts bounded by 64 after top-bit match
        int32_t e = std::min(a.exp2, b.exp2);
        unsigned __int128 sa = ma << (a.exp2 - e);
        unsigned __int128 sb = mb << (b.exp2 - e);
        mag = sa == sb ? 0 : (sa < sb ? -1 : 1);
    }
    return an ? -mag : mag;
}

Dyadic dyadic_mul(const Dyadic& a, const Dyadic& b) {
    __int128 p = (__int128)a.mant * (__int128)b.mant;
    assert(p <= INT64_MAX && p >= INT64_MIN && "dyadic_mul overflow");
    return Dyadic{(int64_t)p, a.exp2 + b.exp2}.normalized();
}

Dyadic dyadic_add_small(const Dyadic& a, const Dyadic& b) {
    if (a.mant == 0) return b.normalized();
    if (b.mant == 0) return a.normalized();
    int32_t e = std::min(a.exp2, b.exp2);
    int sa = a.exp2 - e, sb = b.exp2 - e;
    assert(sa < 63 && sb < 63 && "dyadic_add_small alignment too wide");
    __int128 s = ((__int128)a.mant << sa) + ((__int128)b.mant << sb);
    assert(s <= INT64_MAX && s >= INT64_MIN && "dyadic_add_small overflow");
    return Dyadic{(int64_t)s, e}.normalized();
}

Dyadic dyadic_abs(const Dyadic& a) { return a.mant < 0 ? a.negated() : a; }

Dyadic dyadic_from_double(double v) {
    if (v == 0.0) return Dyadic::zero();
    if (!std::isfinite(v)) throw std::invalid_argument("non-finite double");
    int e;
    double m = std::frexp(v, &e);  // v = m * 2^e, |m| in [0.5, 1)
    int64_t mant = (int64_t)std::ldexp(m, 53);
    return Dyadic{mant, e - 53}.normalized();
}

WideReal WideReal::from_dyadic(const Dyadic& d) {
    WideReal w;
    if (d.mant == 0) return w;
    w.negative = d.mant < 0;
    w.mant = w.negative ? (unsigned __int128)(-(__int128)d.mant) : (unsigned __int128)d.mant;
    w.exp2 = d.exp2;
    return w;
}

namespace {

// Shift magnitude right, collapsing lost bits into sticky.
void shift_right_sticky(unsigned __int128* mant, int32_t* exp2, bool* sticky, int amount) {
    if (amount <= 0) return;
    if (amount >= 128) {
        if (*mant != 0) *sticky = true;
        *mant = 0;
        *exp2 += amount;
        return;
    }
    unsigned __int128 lost = *mant & (((unsigned __int128)1 << amount) - 1);
    if (lost != 0) *sticky = true;
    *mant >>= amount;
    *exp2 += amount;
}

WideReal add_magnitudes(WideReal a, WideReal b) {
    // both non-negative magnitudes with signs equal; returns same-sign sum
    // Align exponents; keep the window within 125 bits to leave headroom.
    if (a.mant == 0) {
        b.sticky = b.sticky || a.sticky;
        return b;
    }
    if (b.mant == 0) {
        a.sticky = a.sticky || b.sticky;
        return a;
    }
    if (a.exp2 < b.exp2) std::swap(a, b);
    // a has the larger exponent: shift a left while it fits, then b right.
    int gap = a.exp2 - b.exp2;
    int a_top = top_bit_u128(a.mant);
    int up = std::min(gap, std::max(0, 125 - a_top));
    a.mant <<= up;
    a.exp2 -= up;
    gap -= up;
    shift_right_sticky(&b.mant, &b.exp2, &b.sticky, gap);
    WideReal r;
    r.negative = a.negative;
    r.mant = a.mant + b.mant;
    r.exp2 = a.exp2;
    r.sticky = a.sticky || b.sticky;
    return r;
}

WideReal sub_magnitudes(WideReal a, WideReal b) {
    // |a| - |b| where a, b carry opposite signs; result sign follows the
    // larger magnitude. Stickies on the subtrahend nudge the result downward;
    // representing that exactly needs borrow handling below.
    if (a.exp2 < b.exp2) std::swap(a, b);
    int gap = a.exp2 - b.exp2;
    int a_top = top_bit_u128(a.mant);
    int up = std::min(gap, std::max(0, 125 - a_top));
    a.mant <<= up;
    a.exp2 -= up;
    gap -= up;
    shift_right_sticky(&b.mant, &b.exp2, &b.sticky, gap);
    WideReal r;
    if (a.mant > b.mant || (a.mant == b.mant && !b.sticky)) {
        r.negative = a.negative;
        r.mant = a.mant - b.mant;
        r.sticky = a.sticky || b.sticky;
        // A sticky tail on b means the true magnitude is slightly less than
        // r.mant when b.sticky is set and a.sticky is not. Account for it by
        // borrowing one ulp and setting sticky, which preserves RNE decisions.
        if (b.sticky && !a.sticky) {
            if (r.mant == 0) {
                r.negative = b.negative;
                r.sticky = true;
            } else {
                r.mant -= 1;
                r.sticky = true;
            }
        }
        r.exp2 = a.exp2;
    } else {
        r.negative = b.negative;
        r.mant = b.mant - a.mant;
        r.exp2 = a.exp2;
        r.sticky = a.sticky || b.sticky;
        if (a.sticky && !b.sticky) {
            if (r.mant == 0) {
                r.negative = a.negative;
                r.sticky = true;
            } else {
                r.mant -= 1;
                r.sticky = true;
            }
        }
    }
    if (r.mant == 0 && !r.sticky) r.negative = false;
    return r;
}

}  // namespace

WideReal exact_add(const WideReal& a, const WideReal& b) {
    if (a.is_zero()) return b;
    if (b.is_zero()) return a;
    if (a.negative == b.negative) return add_magnitudes(a, b);
    return sub_magnitudes(a, b);
}

WideReal exact_fma(const Dyadic& a, const Dyadic& b, const Dyadic& c) {
    WideReal prod;
    __int128 pm = (__int128)a.mant * (__int128)b.mant;
    prod.negative = pm < 0;
    prod.mant = prod.negative ? (unsigned __int128)(-pm) : (unsigned __int128)pm;
    prod.exp2 = a.exp2 + b.exp2;
    return exact_add(prod, WideReal::from_dyadic(c));
}

WideReal exact_div(const Dyadic& a, const Dyadic& b, int precision_bits) {
    if (b.mant == 0) throw std::domain_error("division by zero");
    WideReal r;
    if (a.mant == 0) return r;
    r.negative = (a.mant < 0) != (b.mant < 0);
    unsigned __int128 num = (unsigned __int128)(a.mant < 0 ? -(__int128)a.mant : (__int128)a.mant);
    unsigned __int128 den = (unsigned __int128)(b.mant < 0 ? -(__int128)b.mant : (__int128)b.mant);
    int32_t exp2 = a.exp2 - b.exp2;

    // Long division producing precision_bits + 2 quotient bits with sticky.
    int want = precision_bits + 2;
    // Normalize so den <= num < 2*den; the first quotient bit is then 1.
    while (num < den) {
        num <<= 1;
        exp2 -= 1;
    }
    while (num >= (den << 1)) {
        den <<= 1;
        exp2 += 1;
    }
    unsigned __int128 q = 0;
    for (int i = 0; i < want; ++i) {
        q <<= 1;
        if (num >= den) {
            q |= 1;
            num -= den;
        }
        num <<= 1;
        exp2 -= 1;
    }
    r.mant = q;
    r.exp2 = exp2 + 1;  // compensate the final pre-shift of num
    r.sticky = num != 0;
    return r;
}

double Real::to_double() const {
    switch (cls) {
        case RealClass::Finite: return value.to_double();
        case RealClass::PosInf: return HUGE_VAL;
        case RealClass::NegInf: return -HUGE_VAL;
        case RealClass::NaN: return NAN;
    }
    return NAN;
}

}  // namespace meridian::numerics
