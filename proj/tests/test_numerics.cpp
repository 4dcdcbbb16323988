#include <doctest.h>

#include <algorithm>
#include <map>
#include <random>
#include <set>

#include "meridian/format.hpp"
#include "meridian/mac.hpp"
#include "meridian/value.hpp"
#include "oracles/rational_oracle.hpp"

using namespace meridian::numerics;

namespace {

oracle::Rat to_rat(const Real& r) {
    REQUIRE(r.is_finite());
    return oracle::Rat(oracle::Int(r.value.mant)) * oracle::pow2(r.value.exp2);
}

std::vector<ScalarFormat> all_test_formats() {
    return {ScalarFormat::int8(),       ScalarFormat::integer(4, false),
            ScalarFormat::int32(),      ScalarFormat::e4m3(),
            ScalarFormat::bf16(),       ScalarFormat::posit(8, 2),
            ScalarFormat::posit(8, 0),  ScalarFormat::nf4(),
            ScalarFormat::e8m0()};
}

}  // namespace

TEST_CASE("format spec strings round-trip") {
    for (const char* s : {"int8", "uint4", "int32", "fp4e3m", "bf16", "fp32", "posit8es2",
                          "posit16es1", "nf4", "e8m0"}) {
        ScalarFormat f = parse_format(s);
        CHECK(parse_format(format_to_string(f)) == f);
    }
    CHECK(parse_format("fp4e3m") == ScalarFormat::e4m3());
    CHECK(parse_format("bf16") == ScalarFormat::floating(8, 7));
    CHECK_THROWS(parse_format("fp4x3"));
    CHECK_THROWS(parse_format("floaty"));
}

TEST_CASE("encode zero gives the all-zeros pattern in every format") {
    for (const auto& f : all_test_formats()) {
        if (f.kind == FormatKind::ScaleE8M0) {
            // E8M0 has no zero; nearest representable is 2^-127 = pattern 0
            CHECK(encode(0.0, f).bits == 0);
            continue;
        }
        if (f.kind == FormatKind::NormalFloat4) {
            // the NF4 codebook places 0.0 at index 7; pattern 0 is -1.0
            CHECK(encode(0.0, f).bits == 7);
            CHECK(decode(encode(0.0, f)).value.is_zero());
            continue;
        }
        CHECK(encode(0.0, f).bits == 0);
    }
}

TEST_CASE("encode 1.0 in E4M3 hits biased exponent = bias, mantissa 0") {
    ScalarValue v = encode(1.0, ScalarFormat::e4m3());
    CHECK(v.bits == 0x38);  // 0 0111 000
    CHECK(decode(v).value == Dyadic::from_int(1));
}

TEST_CASE("int8 encode matches the big-rational reference rounder") {
    std::mt19937 rng(7);
    std::uniform_real_distribution<double> dist(-200.0, 200.0);
    for (int i = 0; i < 256; ++i) {
        double x = dist(rng);
        uint64_t mine = encode(x, ScalarFormat::int8()).bits;
        uint64_t ref = oracle::round_to_int_bits(oracle::rat_from_double(x), 8, true);
        CHECK(mine == ref);
    }
    // half-way ties
    for (double x : {0.5, 1.5, 2.5, -0.5, -1.5, 126.5, 127.5, -127.5, -128.5, -200.0}) {
        uint64_t mine = encode(x, ScalarFormat::int8()).bits;
        uint64_t ref = oracle::round_to_int_bits(oracle::rat_from_double(x), 8, true);
        CHECK(mine == ref);
    }
}

TEST_CASE("two's complement decode: int8 0x81 is -127") {
    Real r = decode(make_value(ScalarFormat::int8(), 0x81));
    CHECK(r.value == Dyadic::from_int(-127));
}

TEST_CASE("E8M0 pattern 127 decodes to 1.0") {
    Real r = decode(make_value(ScalarFormat::e8m0(), 127));
    CHECK(r.value == Dyadic::from_int(1));
    CHECK(decode(make_value(ScalarFormat::e8m0(), 255)).is_nan());
}

TEST_CASE("posit(8,es) decode matches the standard's direct formula on all patterns") {
    for (int es : {0, 1, 2, 3}) {
        ScalarFormat f = ScalarFormat::posit(8, es);
        for (uint64_t p = 0; p < 256; ++p) {
            Real mine = decode(make_value(f, p));
            auto ref = oracle::decode_posit_bits(p, 8, es);
            if (ref.is_nar) {
                CHECK(mine.is_nan());
            } else if (ref.is_zero) {
                CHECK(mine.value.is_zero());
            } else {
                REQUIRE(mine.is_finite());
                CHECK(to_rat(mine) == ref.value);
            }
        }
    }
    // spot values from the standard: posit8es2 maxpos = 2^24, minpos = 2^-24
    ScalarFormat p8 = ScalarFormat::posit(8, 2);
    CHECK(to_rat(decode(make_value(p8, 0x7F))) == oracle::pow2(24));
    CHECK(to_rat(decode(make_value(p8, 0x01))) == oracle::pow2(-24));
}

TEST_CASE("posit encode: exhaustive round-trip and rounding behavior") {
    ScalarFormat f = ScalarFormat::posit(8, 2);
    // every representable value encodes back to its own pattern
    for (uint64_t p = 0; p < 256; ++p) {
        Real r = decode(make_value(f, p));
        if (r.is_nan()) continue;
        CHECK(encode(r, f).bits == p);
    }
    // saturation and no-underflow-to-zero
    CHECK(encode(1e30, f).bits == 0x7F);
    CHECK(encode(-1e30, f).bits == 0x81);
    CHECK(encode(1e-30, f).bits == 0x01);
    CHECK(encode(-1e-30, f).bits == 0xFF);
}

TEST_CASE("decode injectivity over all 8-bit patterns, non-redundant only") {
    auto check_injective = [](const ScalarFormat& f, auto redundant) {
        std::map<std::pair<int64_t, int32_t>, uint64_t> seen;
        uint64_t limit = uint64_t{1} << f.width;
        for (uint64_t p = 0; p < limit; ++p) {
            if (redundant(p)) continue;
            Real r = decode(make_value(f, p));
            if (!r.is_finite()) continue;
            Dyadic d = r.value.normalized();
            auto key = std::make_pair(d.mant, d.exp2);
            auto [it, inserted] = seen.emplace(key, p);
            CHECK_MESSAGE(inserted, "duplicate value for patterns ", it->second, " and ", p);
        }
    };
    check_injective(ScalarFormat::int8(), [](uint64_t) { return false; });
    check_injective(ScalarFormat::posit(8, 2), [](uint64_t) { return false; });
    check_injective(ScalarFormat::e8m0(), [](uint64_t) { return false; });
    // floats: -0 duplicates +0
    check_injective(ScalarFormat::e4m3(), [](uint64_t p) { return p == 0x80; });
    check_injective(ScalarFormat::nf4(), [](uint64_t) { return false; });
}

TEST_CASE("float encode/decode round-trip is the identity on finite values") {
    for (const auto& f : {ScalarFormat::e4m3(), ScalarFormat::bf16(), ScalarFormat::floating(5, 2)}) {
        uint64_t limit = uint64_t{1} << f.width;
        for (uint64_t p = 0; p < limit; ++p) {
            Real r = decode(make_value(f, p));
            if (!r.is_finite()) continue;
            if (p == (uint64_t{1} << (f.width - 1))) continue;  // -0 encodes to +0
            CHECK(encode(r, f).bits == p);
        }
    }
}

TEST_CASE("mac zero annihilator: input 0 leaves psum unchanged") {
    // Int
    auto ispec = MacSpec::make(ScalarFormat::int8(), ScalarFormat::int8(), ScalarFormat::int32());
    std::mt19937 rng(11);
    for (int i = 0; i < 200; ++i) {
        ScalarValue w = make_value(ScalarFormat::int8(), rng() & 0xFF);
        ScalarValue p = make_value(ScalarFormat::int32(), rng());
        CHECK(mac(make_value(ScalarFormat::int8(), 0), w, p, ispec).bits == p.bits);
    }
    // Float
    auto fspec = MacSpec::make(ScalarFormat::e4m3(), ScalarFormat::e4m3(), ScalarFormat::bf16());
    for (int i = 0; i < 200; ++i) {
        ScalarValue w = make_value(ScalarFormat::e4m3(), rng() & 0xFF);
        ScalarValue p = make_value(ScalarFormat::bf16(), rng() & 0xFFFF);
        // finite operands only: 0 * inf is NaN under IEEE rules
        if (!decode(w).is_finite() || !decode(p).is_finite()) continue;
        ScalarValue r = mac(make_value(ScalarFormat::e4m3(), 0), w, p, fspec);
        if (decode(p).is_finite() && decode(p).value.is_zero()) {
            CHECK(decode(r).value.is_zero());
        } else {
            CHECK(r.bits == p.bits);
        }
    }
}

TEST_CASE("mac int8 x int8 with zero psum enumerates to the exact product") {
    auto spec = MacSpec::make(ScalarFormat::int8(), ScalarFormat::int8(), ScalarFormat::int32());
    ScalarValue zero = make_value(ScalarFormat::int32(), 0);
    for (int a = -128; a < 128; ++a) {
        for (int b = -128; b < 128; ++b) {
            ScalarValue va = encode((double)a, ScalarFormat::int8());
            ScalarValue vb = encode((double)b, ScalarFormat::int8());
            ScalarValue r = mac(va, vb, zero, spec);
            CHECK(decode(r).value == Dyadic::from_int((int64_t)a * b));
        }
    }
}

TEST_CASE("mac E4M3 matches the rational FMA oracle on random triples") {
    auto spec = MacSpec::make(ScalarFormat::e4m3(), ScalarFormat::e4m3(), ScalarFormat::e4m3());
    std::mt19937 rng(23);
    int tested = 0;
    while (tested < 10000) {
        ScalarValue a = make_value(ScalarFormat::e4m3(), rng() & 0xFF);
        ScalarValue b = make_value(ScalarFormat::e4m3(), rng() & 0xFF);
        ScalarValue c = make_value(ScalarFormat::e4m3(), rng() & 0xFF);
        Real ra = decode(a), rb = decode(b), rc = decode(c);
        if (!ra.is_finite() || !rb.is_finite() || !rc.is_finite()) continue;
        ++tested;
        ScalarValue r = mac(a, b, c, spec);
        oracle::Rat exact = to_rat(ra) * to_rat(rb) + to_rat(rc);
        uint64_t ref = oracle::round_to_float_bits(exact, 3, 4);
        // -0 canonicalization: oracle keeps the sign of the exact value
        if (exact == 0 && (r.bits == 0 || r.bits == 0x80)) continue;
        CHECK(r.bits == ref);
    }
}

TEST_CASE("int mac accumulation is order-independent modulo wraparound") {
    auto spec = MacSpec::make(ScalarFormat::int8(), ScalarFormat::int8(), ScalarFormat::integer(16));
    std::mt19937 rng(31);
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<std::pair<ScalarValue, ScalarValue>> terms;
        for (int i = 0; i < 64; ++i)
            terms.push_back({make_value(ScalarFormat::int8(), rng() & 0xFF),
                             make_value(ScalarFormat::int8(), rng() & 0xFF)});
        auto run = [&](const std::vector<std::pair<ScalarValue, ScalarValue>>& ts) {
            ScalarValue acc = make_value(ScalarFormat::integer(16), 0);
            for (const auto& [a, w] : ts) acc = mac(a, w, acc, spec);
            return acc.bits;
        };
        uint64_t forward = run(terms);
        std::shuffle(terms.begin(), terms.end(), rng);
        CHECK(run(terms) == forward);
    }
}

TEST_CASE("E8M0 values are powers of two and scaling shifts only the exponent") {
    for (uint64_t p = 0; p < 255; ++p) {
        Real r = decode(make_value(ScalarFormat::e8m0(), p));
        REQUIRE(r.is_finite());
        Dyadic d = r.value.normalized();
        CHECK(d.mant == 1);
    }
    // bf16 normal * e8m0 scale: same sign/mantissa, exponent shifted
    ScalarFormat bf = ScalarFormat::bf16();
    std::mt19937 rng(41);
    int tested = 0;
    while (tested < 2000) {
        uint64_t bits = rng() & 0xFFFF;
        uint64_t exp = (bits >> 7) & 0xFF;
        if (exp == 0 || exp == 0xFF) continue;  // normals only
        int k = (int)(rng() % 41) - 20;
        int new_exp = (int)exp + k;
        if (new_exp < 1 || new_exp > 0xFE) continue;
        ++tested;
        ScalarValue v = make_value(bf, bits);
        ScalarValue s = make_value(ScalarFormat::e8m0(), (uint64_t)(127 + k));
        WideReal prod = exact_fma(decode(v).value, decode(s).value, Dyadic::zero());
        ScalarValue r = encode_wide(prod, bf);
        CHECK((r.bits & 0x807F) == (bits & 0x807F));
        CHECK(((r.bits >> 7) & 0xFF) == (uint64_t)new_exp);
    }
}

TEST_CASE("NF4 mac equals exact FMA on codebook entries for all 16^3 triples") {
    auto spec = MacSpec::make(ScalarFormat::nf4(), ScalarFormat::nf4(), ScalarFormat::nf4());
    for (int a = 0; a < 16; ++a) {
        for (int b = 0; b < 16; ++b) {
            for (int c = 0; c < 16; ++c) {
                ScalarValue r = mac(make_value(ScalarFormat::nf4(), (uint64_t)a),
                                    make_value(ScalarFormat::nf4(), (uint64_t)b),
                                    make_value(ScalarFormat::nf4(), (uint64_t)c), spec);
                oracle::Rat exact =
                    oracle::nf4_entry(a) * oracle::nf4_entry(b) + oracle::nf4_entry(c);
                // nearest codebook entry, ties to even index
                int best = 0;
                oracle::Rat best_d = abs(oracle::nf4_entry(0) - exact);
                for (int i = 1; i < 16; ++i) {
                    oracle::Rat d = abs(oracle::nf4_entry(i) - exact);
                    if (d < best_d || (d == best_d && (i % 2 == 0) && (best % 2 == 1))) {
                        best = i;
                        best_d = d;
                    }
                }
                CHECK((int)r.bits == best);
            }
        }
    }
}

TEST_CASE("mac rejects operand formats that do not match the spec") {
    auto spec = MacSpec::make(ScalarFormat::int8(), ScalarFormat::int8(), ScalarFormat::int32());
    CHECK_THROWS(mac(make_value(ScalarFormat::bf16(), 0), make_value(ScalarFormat::int8(), 0),
                     make_value(ScalarFormat::int32(), 0), spec));
}

TEST_CASE("decode-encode idempotence over all patterns of every 8-bit format") {
    for (const auto& f : all_test_formats()) {
        if (f.width > 8) continue;
        uint64_t limit = uint64_t{1} << f.width;
        for (uint64_t p = 0; p < limit; ++p) {
            Real r = decode(make_value(f, p));
            ScalarValue v1 = encode(r, f);
            ScalarValue v2 = encode(decode(v1), f);
            CHECK(v1.bits == v2.bits);
        }
    }
}
