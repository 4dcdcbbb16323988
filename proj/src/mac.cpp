#include "meridian/mac.hpp"

#include <stdexcept>

namespace meridian::numerics {

MacSpec MacSpec::make(ScalarFormat in, ScalarFormat w, ScalarFormat psum, int vector_width) {
    if (!in.valid() || !w.valid() || !psum.valid())
        throw std::invalid_argument("MacSpec: invalid format");
    if (vector_width < 1) throw std::invalid_argument("MacSpec: vector_width must be >= 1");
    return {in, w, psum, RoundingMode::RNE, vector_width};
}

namespace {

uint64_t width_mask(int width) {
    return width >= 64 ? ~uint64_t{0} : ((uint64_t{1} << width) - 1);
}

int64_t sign_extend(uint64_t bits, int width, bool is_signed) {
    bits &= width_mask(width);
    if (is_signed && width < 64 && (bits >> (width - 1)))
        return (int64_t)(bits | ~width_mask(width));
    return (int64_t)bits;
}

ScalarValue mac_int(const ScalarValue& a, const ScalarValue& w, const ScalarValue& p,
                    const ScalarFormat& pf) {
    int64_t av = sign_extend(a.bits, a.format.width, a.format.is_signed);
    int64_t wv = sign_extend(w.bits, w.format.width, w.format.is_signed);
    int64_t pv = sign_extend(p.bits, pf.width, pf.is_signed);
    // wraparound semantics: compute in unsigned 64-bit and mask to width
    uint64_t r = (uint64_t)av * (uint64_t)wv + (uint64_t)pv;
    return {pf, r & width_mask(pf.width)};
}

ScalarValue mac_exact(const ScalarValue& a, const ScalarValue& w, const ScalarValue& p,
                      const ScalarFormat& pf) {
    Real ra = decode(a), rw = decode(w), rp = decode(p);
    if (ra.is_nan() || rw.is_nan() || rp.is_nan()) return encode(Real::nan(), pf);
    if (ra.is_inf() || rw.is_inf() || rp.is_inf()) {
        // IEEE-style special handling for the float family
        auto sign_of = [](const Real& r) {
            if (r.cls == RealClass::NegInf) return true;
            if (r.cls == RealClass::PosInf) return false;
            return r.value.mant < 0;
        };
        bool prod_zero = (ra.is_finite() && ra.value.is_zero()) ||
                         (rw.is_finite() && rw.value.is_zero());
        bool prod_inf = ra.is_inf() || rw.is_inf();
        if (prod_inf && prod_zero) return encode(Real::nan(), pf);
        bool prod_neg = sign_of(ra) != sign_of(rw);
        if (prod_inf) {
            if (rp.is_inf() && sign_of(rp) != prod_neg) return encode(Real::nan(), pf);
            return encode(prod_neg ? Real::neg_inf() : Real::pos_inf(), pf);
        }
        return encode(rp, pf);  // psum is the infinity
    }
    WideReal r = exact_fma(ra.value, rw.value, rp.value);
    return encode_wide(r, pf);
}

}  // namespace

ScalarValue mac(const ScalarValue& input, const ScalarValue& weight, const ScalarValue& psum,
                const MacSpec& spec) {
    if (input.format != spec.input_format || weight.format != spec.weight_format ||
        psum.format != spec.psum_format)
        throw std::invalid_argument("mac: operand format does not match MacSpec");
    switch (spec.input_format.kind) {
        case FormatKind::Int:
            if (spec.psum_format.kind != FormatKind::Int)
                throw std::invalid_argument("mac: integer inputs require integer psum");
            return mac_int(input, weight, psum, spec.psum_format);
        case FormatKind::Float:
        case FormatKind::Posit:
        case FormatKind::NormalFloat4:
            return mac_exact(input, weight, psum, spec.psum_format);
        case FormatKind::ScaleE8M0:
            throw std::invalid_argument("mac: E8M0 is a scale format, not a MAC operand");
    }
    throw std::logic_error("unreachable");
}

std::vector<ScalarValue> mac_lanes(const std::vector<ScalarValue>& inputs,
                                   const std::vector<ScalarValue>& weights,
                                   const std::vector<ScalarValue>& psums, const MacSpec& spec) {
    if (inputs.size() != (size_t)spec.vector_width || weights.size() != inputs.size() ||
        psums.size() != inputs.size())
        throw std::invalid_argument("mac_lanes: lane count mismatch");
    std::vector<ScalarValue> out;
    out.reserve(inputs.size());
    for (size_t i = 0; i < inputs.size(); ++i)
        out.push_back(mac(inputs[i], weights[i], psums[i], spec));
    return out;
}

int64_t int_mac_raw(int64_t input, int64_t weight, int64_t psum, int width) {
    uint64_t r = (uint64_t)input * (uint64_t)weight + (uint64_t)psum;
    r &= width_mask(width);
    if (width < 64 && (r >> (width - 1))) return (int64_t)(r | ~width_mask(width));
    return (int64_t)r;
}

}  // namespace meridian::numerics
