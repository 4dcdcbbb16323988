#include "meridian/quant.hpp"

#include <cmath>
#include <stdexcept>

namespace meridian::quant {

using namespace numerics;

QuantScheme parse_quant_spec(const std::string& spec) {
    QuantScheme q;
    size_t pos = 0;
    bool first = true;
    while (pos < spec.size()) {
        size_t comma = spec.find(',', pos);
        std::string tok = spec.substr(pos, comma == std::string::npos ? std::string::npos
                                                                      : comma - pos);
        pos = comma == std::string::npos ? spec.size() : comma + 1;
        if (first) {
            q.target_format = parse_format(tok);
            first = false;
        } else if (tok.rfind("qs=", 0) == 0) {
            std::string v = tok.substr(3);
            if (v == "per_tensor") {
                q.granularity = Granularity::PerTensor;
            } else if (v == "per_channel") {
                q.granularity = Granularity::PerChannel;
            } else if (v.rfind("block", 0) == 0) {
                q.granularity = Granularity::Block;
                q.block_size = std::stoll(v.substr(5));
                if (q.block_size < 1) throw std::invalid_argument("block size must be >= 1");
            } else {
                throw std::invalid_argument("unknown quantization scheme: " + v);
            }
        } else if (tok.rfind("scale=", 0) == 0) {
            q.scale_format = parse_format(tok.substr(6));
        } else if (tok == "pow2") {
            q.pow2_scale = true;
        } else {
            throw std::invalid_argument("unknown quantizer token: " + tok);
        }
    }
    if (first) throw std::invalid_argument("empty quantizer spec");
    return q;
}

std::string quant_spec_to_string(const QuantScheme& q) {
    std::string s = format_to_string(q.target_format);
    switch (q.granularity) {
        case Granularity::PerTensor: s += ",qs=per_tensor"; break;
        case Granularity::PerChannel: s += ",qs=per_channel"; break;
        case Granularity::Block: s += ",qs=block" + std::to_string(q.block_size); break;
    }
    s += ",scale=" + format_to_string(q.scale_format);
    if (q.pow2_scale && q.scale_format.kind != FormatKind::ScaleE8M0) s += ",pow2";
    return s;
}

void CalibrationStats::observe(const std::vector<double>& values, size_t groups,
                               const std::vector<size_t>& group_of) {
    if (absmax.size() < groups) absmax.resize(groups, Dyadic::zero());
    for (size_t i = 0; i < values.size(); ++i) {
        if (std::isnan(values[i])) throw std::invalid_argument("NaN in calibration data");
        Dyadic a = dyadic_abs(dyadic_from_double(values[i]));
        if (absmax[group_of[i]] < a) absmax[group_of[i]] = a;
    }
    count += (int64_t)values.size();
}

void CalibrationStats::observe_per_tensor(const std::vector<double>& values) {
    std::vector<size_t> g(values.size(), 0);
    observe(values, 1, g);
}

namespace {

int normalize_axis(int axis, size_t rank) {
    if (axis < 0) axis += (int)rank;
    if (axis < 0 || (size_t)axis >= rank) throw std::invalid_argument("axis out of range");
    return axis;
}

// smallest e with 2^e >= x (x > 0)
int32_t ceil_log2(const Dyadic& x) {
    uint64_t m = (uint64_t)(x.mant < 0 ? -x.mant : x.mant);
    int top = 63 - __builtin_clzll(m);
    int32_t e = x.exp2 + top;
    // x = m * 2^exp2 with 2^top <= m < 2^(top+1): 2^e <= x < 2^(e+1)
    if (m == (uint64_t{1} << top)) return e;  // exact power of two
    return e + 1;
}

ScalarValue encode_scale(const Dyadic& s, const ScalarFormat& fmt) {
    return encode(Real::finite(s), fmt);
}

}  // namespace

std::vector<ScalarValue> compute_scale(const CalibrationStats& stats, const QuantScheme& scheme) {
    if (stats.count <= 0) throw std::logic_error("compute_scale: no calibration observations");
    Dyadic max_rep = max_representable(scheme.target_format);
    std::vector<ScalarValue> out;
    out.reserve(stats.absmax.size());
    for (const Dyadic& amax : stats.absmax) {
        if (amax.is_zero()) {
            out.push_back(encode_scale(min_positive(scheme.scale_format), scheme.scale_format));
            continue;
        }
        if (scheme.uses_pow2()) {
            // round scale UP to the next power of two: never clips below absmax
            WideReal ratio = exact_div(amax, max_rep, 58);
            unsigned __int128 m = ratio.mant;
            int32_t ex = ratio.exp2;
            bool sticky = ratio.sticky;
            while (m >> 61) {
                sticky = sticky || (m & 1);
                m >>= 1;
                ex += 1;
            }
            Dyadic approx{(int64_t)(uint64_t)m, ex};
            int32_t e = ceil_log2(approx);
            // sticky means the true ratio is slightly above the truncated window
            if (sticky && Dyadic::pow2(e) == approx) e += 1;
            out.push_back(encode_scale(Dyadic::pow2(e), scheme.scale_format));
        } else {
            WideReal ratio = exact_div(amax, max_rep, 62);
            out.push_back(encode_wide(ratio, scheme.scale_format));
        }
    }
    return out;
}

size_t scale_group_count(const std::vector<int64_t>& shape, const QuantScheme& scheme, int axis) {
    int64_t total = 1;
    for (int64_t d : shape) total *= d;
    switch (scheme.granularity) {
        case Granularity::PerTensor: return 1;
        case Granularity::PerChannel: {
            int a = normalize_axis(axis, shape.size());
            return (size_t)shape[(size_t)a];
        }
        case Granularity::Block: {
            int a = normalize_axis(axis, shape.size());
            int64_t blocks = (shape[(size_t)a] + scheme.block_size - 1) / scheme.block_size;
            return (size_t)(total / shape[(size_t)a] * blocks);
        }
    }
    return 1;
}

size_t scale_group_of(const std::vector<int64_t>& shape, const QuantScheme& scheme, int axis,
                      size_t flat_index) {
    switch (scheme.granularity) {
        case Granularity::PerTensor: return 0;
        case Granularity::PerChannel: {
            int a = normalize_axis(axis, shape.size());
            // row-major: stride of axis a
            int64_t stride = 1;
            for (size_t d = (size_t)a + 1; d < shape.size(); ++d) stride *= shape[d];
            return (size_t)(((int64_t)flat_index / stride) % shape[(size_t)a]);
        }
        case Granularity::Block: {
            int a = normalize_axis(axis, shape.size());
            int64_t stride = 1;
            for (size_t d = (size_t)a + 1; d < shape.size(); ++d) stride *= shape[d];
            int64_t axis_len = shape[(size_t)a];
            int64_t blocks = (axis_len + scheme.block_size - 1) / scheme.block_size;
            int64_t idx = (int64_t)flat_index;
            int64_t axis_pos = (idx / stride) % axis_len;
            int64_t outer = idx / (stride * axis_len);
            int64_t inner = idx % stride;
            int64_t block = axis_pos / scheme.block_size;
            return (size_t)((outer * stride + inner) * blocks + block);
        }
    }
    return 0;
}

QuantizedTensor quantize(const std::vector<double>& x, const std::vector<int64_t>& shape,
                         const QuantScheme& scheme, const std::vector<ScalarValue>& scales,
                         int axis) {
    size_t groups = scale_group_count(shape, scheme, axis);
    if (scales.size() != groups)
        throw std::invalid_argument("quantize: scale count does not match scheme");
    QuantizedTensor q;
    q.scheme = scheme;
    q.shape = shape;
    q.axis = axis;
    q.scales = scales;
    q.elements.reserve(x.size());
    int precision = 64;
    for (size_t i = 0; i < x.size(); ++i) {
        if (std::isnan(x[i])) throw std::invalid_argument("quantize: NaN input element");
        size_t g = scale_group_of(shape, scheme, axis, i);
        Real s = decode(scales[g]);
        if (s.is_nan()) throw std::domain_error("quantize: NaN scale");
        Dyadic xv = dyadic_from_double(x[i]);
        if (xv.is_zero()) {
            q.elements.push_back(encode(0.0, scheme.target_format));
            continue;
        }
        WideReal quot = exact_div(xv, s.value, precision);
        q.elements.push_back(encode_wide(quot, scheme.target_format));
    }
    return q;
}

std::vector<ScalarValue> dequantize(const QuantizedTensor& q, ScalarFormat out_format) {
    std::vector<ScalarValue> out;
    out.reserve(q.elements.size());
    for (size_t i = 0; i < q.elements.size(); ++i) {
        size_t g = scale_group_of(q.shape, q.scheme, q.axis, i);
        Real s = decode(q.scales[g]);
        if (s.is_nan()) throw std::domain_error("dequantize: NaN scale (E8M0 pattern 255)");
        Real e = decode(q.elements[i]);
        if (e.is_nan()) throw std::domain_error("dequantize: NaN element");
        if (!e.is_finite()) {
            out.push_back(encode(e, out_format));
            continue;
        }
        WideReal prod = exact_fma(e.value, s.value, Dyadic::zero());
        out.push_back(encode_wide(prod, out_format));
    }
    return out;
}

ScalarValue mx_dequant_psum(const ScalarValue& psum_int, const ScalarValue& in_scale,
                            const ScalarValue& w_scale, const ScalarValue& prev) {
    Real p = decode(psum_int);
    Real si = decode(in_scale);
    Real sw = decode(w_scale);
    Real pv = decode(prev);
    if (si.is_nan() || sw.is_nan()) throw std::domain_error("mx_dequant_psum: NaN scale");
    if (pv.is_nan()) return encode(Real::nan(), prev.format);
    // scales are powers of two or small floats: the triple product stays exact
    Dyadic scaled = dyadic_mul(p.value, si.value);
    WideReal r = exact_fma(scaled, sw.value, pv.value);
    return encode_wide(r, prev.format);
}

}  // namespace meridian::quant
