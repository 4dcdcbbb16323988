#include "meridian/format.hpp"

#include <stdexcept>

namespace meridian::numerics {

ScalarFormat ScalarFormat::integer(int width, bool is_signed) {
    ScalarFormat f;
    f.kind = FormatKind::Int;
    f.width = width;
    f.is_signed = is_signed;
    if (!f.valid()) throw std::invalid_argument("bad integer format width");
    return f;
}

ScalarFormat ScalarFormat::floating(int exponent_bits, int mantissa_bits) {
    ScalarFormat f;
    f.kind = FormatKind::Float;
    f.exponent_bits = exponent_bits;
    f.mantissa_bits = mantissa_bits;
    f.width = 1 + exponent_bits + mantissa_bits;
    if (!f.valid()) throw std::invalid_argument("bad float format");
    return f;
}

ScalarFormat ScalarFormat::posit(int width, int es_bits) {
    ScalarFormat f;
    f.kind = FormatKind::Posit;
    f.width = width;
    f.es_bits = es_bits;
    if (!f.valid()) throw std::invalid_argument("bad posit format");
    return f;
}

ScalarFormat ScalarFormat::nf4() {
    ScalarFormat f;
    f.kind = FormatKind::NormalFloat4;
    f.width = 4;
    return f;
}

ScalarFormat ScalarFormat::e8m0() {
    ScalarFormat f;
    f.kind = FormatKind::ScaleE8M0;
    f.width = 8;
    return f;
}

bool ScalarFormat::valid() const {
    switch (kind) {
        case FormatKind::Int:
            return width >= 1 && width <= 32;
        case FormatKind::Float:
            return exponent_bits >= 2 && exponent_bits <= 11 && mantissa_bits >= 1 &&
                   width == 1 + exponent_bits + mantissa_bits && width <= 32;
        case FormatKind::Posit:
            return width >= 3 && width <= 32 && es_bits >= 0 && es_bits <= 4;
        case FormatKind::NormalFloat4:
            return width == 4;
        case FormatKind::ScaleE8M0:
            return width == 8;
    }
    return false;
}

ScalarFormat parse_format(const std::string& spec) {
    auto number_after = [&](size_t pos, size_t* end) -> int {
        size_t i = pos;
        int v = 0;
        bool any = false;
        while (i < spec.size() && spec[i] >= '0' && spec[i] <= '9') {
            v = v * 10 + (spec[i] - '0');
            ++i;
            any = true;
        }
        if (!any) throw std::invalid_argument("bad format spec: " + spec);
        *end = i;
        return v;
    };

    if (spec == "bf16") return ScalarFormat::bf16();
    if (spec == "bfloat16") return ScalarFormat::bf16();
    if (spec == "fp32" || spec == "float32") return ScalarFormat::fp32();
    if (spec == "fp16" || spec == "float16") return ScalarFormat::floating(5, 10);
    if (spec == "nf4") return ScalarFormat::nf4();
    if (spec == "e8m0") return ScalarFormat::e8m0();

    if (spec.rfind("uint", 0) == 0) {
        size_t end;
        int w = number_after(4, &end);
        if (end != spec.size()) throw std::invalid_argument("bad format spec: " + spec);
        return ScalarFormat::integer(w, false);
    }
    if (spec.rfind("int", 0) == 0) {
        size_t end;
        int w = number_after(3, &end);
        if (end != spec.size()) throw std::invalid_argument("bad format spec: " + spec);
        return ScalarFormat::integer(w, true);
    }
    if (spec.rfind("posit", 0) == 0) {
        size_t end;
        int w = number_after(5, &end);
        int es = 2;
        if (end != spec.size()) {
            if (spec.compare(end, 2, "es") != 0)
                throw std::invalid_argument("bad format spec: " + spec);
            es = number_after(end + 2, &end);
            if (end != spec.size()) throw std::invalid_argument("bad format spec: " + spec);
        }
        return ScalarFormat::posit(w, es);
    }
    if (spec.rfind("fp", 0) == 0) {
        size_t end;
        int e = number_after(2, &end);
        if (end >= spec.size() || spec[end] != 'e')
            throw std::invalid_argument("bad format spec: " + spec);
        int m = number_after(end + 1, &end);
        if (end + 1 != spec.size() || spec[end] != 'm')
            throw std::invalid_argument("bad format spec: " + spec);
        return ScalarFormat::floating(e, m);
    }
    throw std::invalid_argument("unknown format spec: " + spec);
}

std::string format_to_string(const ScalarFormat& fmt) {
    switch (fmt.kind) {
        case FormatKind::Int:
            return (fmt.is_signed ? "int" : "uint") + std::to_string(fmt.width);
        case FormatKind::Float:
            if (fmt.exponent_bits == 8 && fmt.mantissa_bits == 7) return "bf16";
            if (fmt.exponent_bits == 8 && fmt.mantissa_bits == 23) return "fp32";
            return "fp" + std::to_string(fmt.exponent_bits) + "e" +
                   std::to_string(fmt.mantissa_bits) + "m";
        case FormatKind::Posit:
            return "posit" + std::to_string(fmt.width) + "es" + std::to_string(fmt.es_bits);
        case FormatKind::NormalFloat4:
            return "nf4";
        case FormatKind::ScaleE8M0:
            return "e8m0";
    }
    return "?";
}

}  // namespace meridian::numerics
