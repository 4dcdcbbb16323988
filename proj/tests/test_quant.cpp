#include <doctest.h>

#include <cmath>
#include <random>

#include "meridian/quant.hpp"
#include "oracles/rational_oracle.hpp"

using namespace meridian::numerics;
using namespace meridian::quant;

namespace {

oracle::Rat to_rat(const Real& r) {
    REQUIRE(r.is_finite());
    return oracle::Rat(oracle::Int(r.value.mant)) * oracle::pow2(r.value.exp2);
}

// Independent MX block quantizer: shared power-of-two scale from the block
// absmax, elements rounded RNE and clamped to int8.
struct MxBlockRef {
    oracle::Rat scale;
    std::vector<int64_t> codes;
};

MxBlockRef mx_block_reference(const std::vector<double>& block) {
    oracle::Rat amax(0);
    for (double v : block) {
        oracle::Rat a = oracle::rat_from_double(std::fabs(v));
        if (a > amax) amax = a;
    }
    MxBlockRef ref;
    if (amax == 0) {
        ref.scale = oracle::pow2(-133);  // smallest positive bf16 magnitude
    } else {
        oracle::Rat ratio = amax / 127;
        int e = 0;
        while (oracle::pow2(e) < ratio) ++e;
        while (oracle::pow2(e - 1) >= ratio) --e;
        ref.scale = oracle::pow2(e);
    }
    for (double v : block) {
        oracle::Int q = oracle::round_half_even(oracle::rat_from_double(v) / ref.scale);
        if (q > 127) q = 127;
        if (q < -128) q = -128;
        ref.codes.push_back(q.convert_to<int64_t>());
    }
    return ref;
}

QuantScheme mxint8_scheme() {
    QuantScheme s;
    s.granularity = Granularity::Block;
    s.block_size = 32;
    s.scale_format = ScalarFormat::e8m0();
    s.target_format = ScalarFormat::int8();
    return s;
}

int64_t as_int(const ScalarValue& v) {
    Real r = decode(v);
    REQUIRE(r.is_finite());
    Dyadic d = r.value;
    REQUIRE(d.exp2 >= 0);
    return d.mant << d.exp2;
}

}  // namespace

TEST_CASE("quantizer spec strings parse and round-trip") {
    QuantScheme a = parse_quant_spec("int8,qs=per_tensor");
    CHECK(a.granularity == Granularity::PerTensor);
    CHECK(a.target_format == ScalarFormat::int8());
    QuantScheme b = parse_quant_spec("int8,qs=block32,scale=e8m0");
    CHECK(b.granularity == Granularity::Block);
    CHECK(b.block_size == 32);
    CHECK(b.uses_pow2());
    QuantScheme c = parse_quant_spec(quant_spec_to_string(b));
    CHECK(c.block_size == b.block_size);
    CHECK(c.scale_format == b.scale_format);
    CHECK_THROWS(parse_quant_spec("int8,qs=banana"));
}

TEST_CASE("compute_scale: absmax 127 with int8 symmetric float scale gives 1.0") {
    CalibrationStats st;
    st.observe_per_tensor({127.0, -3.0, 5.5});
    QuantScheme s;
    s.target_format = ScalarFormat::int8();
    s.scale_format = ScalarFormat::bf16();
    auto scales = compute_scale(st, s);
    REQUIRE(scales.size() == 1);
    CHECK(decode(scales[0]).value == Dyadic::from_int(1));
}

TEST_CASE("compute_scale: power-of-two mode rounds up and never clips") {
    CalibrationStats st;
    std::vector<double> block;
    std::mt19937 rng(3);
    std::uniform_real_distribution<double> dist(-100.0, 100.0);
    for (int i = 0; i < 32; ++i) block.push_back(dist(rng));
    block[7] = 100.0;  // pin the absmax
    st.observe_per_tensor(block);
    QuantScheme s;
    s.target_format = ScalarFormat::int8();
    s.scale_format = ScalarFormat::e8m0();
    auto scales = compute_scale(st, s);
    REQUIRE(scales.size() == 1);
    // 100/127 ~ 0.787 -> next power of two is 1.0
    CHECK(decode(scales[0]).value == Dyadic::from_int(1));
    // no quantized magnitude above 127 by brute force over the block
    auto q = quantize(block, {32}, s, scales, 0);
    for (const auto& e : q.elements) {
        int64_t v = as_int(e);
        CHECK(v <= 127);
        CHECK(v >= -127);
    }
}

TEST_CASE("compute_scale: degenerate all-zero tensor") {
    CalibrationStats st;
    st.observe_per_tensor({0.0, 0.0, 0.0, 0.0});
    QuantScheme s;
    s.target_format = ScalarFormat::int8();
    s.scale_format = ScalarFormat::bf16();
    auto scales = compute_scale(st, s);
    REQUIRE(scales.size() == 1);
    Real sc = decode(scales[0]);
    CHECK(sc.is_finite());
    CHECK(Dyadic::zero() < sc.value);
    auto q = quantize({0.0, 0.0, 0.0, 0.0}, {4}, s, scales, 0);
    for (const auto& e : q.elements) CHECK(as_int(e) == 0);
    auto back = dequantize(q);
    for (const auto& v : back) CHECK(decode(v).value.is_zero());
}

TEST_CASE("quantize: [2,-2] at per-tensor scale 2 gives codes [1,-1]") {
    QuantScheme s;
    s.target_format = ScalarFormat::int8();
    std::vector<ScalarValue> scales = {encode(2.0, s.scale_format)};
    auto q = quantize({2.0, -2.0}, {2}, s, scales, 0);
    CHECK(as_int(q.elements[0]) == 1);
    CHECK(as_int(q.elements[1]) == -1);
    auto back = dequantize(q);
    CHECK(decode(back[0]).value == Dyadic::from_int(2));
    CHECK(decode(back[1]).value == Dyadic::from_int(-2));
}

TEST_CASE("quantize-dequantize is the identity on tensors representable at scale 1") {
    QuantScheme s;
    s.target_format = ScalarFormat::int8();
    std::vector<ScalarValue> scales = {encode(1.0, s.scale_format)};
    std::vector<double> x;
    std::mt19937 rng(17);
    for (int i = 0; i < 64; ++i) x.push_back((double)((int)(rng() % 255) - 127));
    auto q = quantize(x, {64}, s, scales, 0);
    auto back = dequantize(q);
    for (size_t i = 0; i < x.size(); ++i)
        CHECK(decode(back[i]).value == dyadic_from_double(x[i]));
}

TEST_CASE("quantize rejects NaN input elements") {
    QuantScheme s;
    std::vector<ScalarValue> scales = {encode(1.0, s.scale_format)};
    CHECK_THROWS(quantize({1.0, NAN}, {2}, s, scales, 0));
}

TEST_CASE("MXINT8 block quantization matches the reference block quantizer") {
    std::mt19937 rng(29);
    std::uniform_real_distribution<double> dist(-50.0, 50.0);
    QuantScheme s = mxint8_scheme();
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> block;
        for (int i = 0; i < 32; ++i) block.push_back(dist(rng));
        CalibrationStats st;
        st.observe_per_tensor(block);
        auto scales = compute_scale(st, s);
        auto q = quantize(block, {32}, s, scales, 0);

        MxBlockRef ref = mx_block_reference(block);
        CHECK(to_rat(decode(scales[0])) == ref.scale);
        for (size_t i = 0; i < block.size(); ++i) CHECK(as_int(q.elements[i]) == ref.codes[i]);
    }
}

TEST_CASE("dequantize propagates the E8M0 NaN scale as an error") {
    QuantScheme s = mxint8_scheme();
    QuantizedTensor q;
    q.scheme = s;
    q.shape = {32};
    q.axis = 0;
    for (int i = 0; i < 32; ++i) q.elements.push_back(encode(1.0, s.target_format));
    q.scales.push_back(make_value(ScalarFormat::e8m0(), 255));
    CHECK_THROWS(dequantize(q));
}

TEST_CASE("mx_dequant_psum basics") {
    ScalarFormat acc = ScalarFormat::bf16();
    ScalarValue prev = encode(3.25, acc);
    ScalarValue zero_psum = encode(0.0, ScalarFormat::int32());
    ScalarValue s1 = make_value(ScalarFormat::e8m0(), 127 - 3);
    ScalarValue s2 = make_value(ScalarFormat::e8m0(), 127 + 5);
    CHECK(mx_dequant_psum(zero_psum, s1, s2, prev).bits == prev.bits);

    // single-block 1x32 . 32x1 with unit scales equals the int32 dot product
    std::mt19937 rng(31);
    int64_t dot = 0;
    for (int i = 0; i < 32; ++i) {
        int a = (int)(rng() % 255) - 127;
        int b = (int)(rng() % 255) - 127;
        dot += (int64_t)a * b;
    }
    ScalarValue psum = encode((double)dot, ScalarFormat::int32());
    ScalarValue unit = make_value(ScalarFormat::e8m0(), 127);
    ScalarValue zero_prev = encode(0.0, acc);
    ScalarValue r = mx_dequant_psum(psum, unit, unit, zero_prev);
    // equals the dot product value after one rounding into bf16
    bool matches = r.bits == encode((double)dot, acc).bits;
    CHECK(matches);

    ScalarValue nan_scale = make_value(ScalarFormat::e8m0(), 255);
    CHECK_THROWS(mx_dequant_psum(psum, nan_scale, unit, zero_prev));
}

TEST_CASE("MXINT8 GEMM over two blocks tracks the rational dequantized GEMM") {
    std::mt19937 rng(37);
    std::uniform_real_distribution<double> dist(-4.0, 4.0);
    QuantScheme s = mxint8_scheme();
    ScalarFormat acc = ScalarFormat::bf16();
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> a(64), b(64);
        for (auto& v : a) v = dist(rng);
        for (auto& v : b) v = dist(rng);

        // quantize each 32-block with its own scale
        CalibrationStats sa, sb;
        sa.observe(a, 2, [&] {
            std::vector<size_t> g(64);
            for (size_t i = 0; i < 64; ++i) g[i] = i / 32;
            return g;
        }());
        sb.observe(b, 2, [&] {
            std::vector<size_t> g(64);
            for (size_t i = 0; i < 64; ++i) g[i] = i / 32;
            return g;
        }());
        auto scales_a = compute_scale(sa, s);
        auto scales_b = compute_scale(sb, s);
        auto qa = quantize(a, {64}, s, scales_a, 0);
        auto qb = quantize(b, {64}, s, scales_b, 0);

        // hardware route: int32 dot per block, mx dequant accumulate
        ScalarValue racc = encode(0.0, acc);
        oracle::Rat expect(0);
        oracle::Rat tol(0);
        for (int blk = 0; blk < 2; ++blk) {
            int64_t dot = 0;
            for (int i = 0; i < 32; ++i) {
                int64_t av = as_int(qa.elements[(size_t)(blk * 32 + i)]);
                int64_t bv = as_int(qb.elements[(size_t)(blk * 32 + i)]);
                dot += av * bv;
            }
            racc = mx_dequant_psum(encode((double)dot, ScalarFormat::int32()),
                                   scales_a[(size_t)blk], scales_b[(size_t)blk], racc);
            expect += oracle::Rat(dot) * to_rat(decode(scales_a[(size_t)blk])) *
                      to_rat(decode(scales_b[(size_t)blk]));
            // one bf16 ulp at the magnitude of this step's exact partial sum
            oracle::Rat mag = abs(expect);
            Dyadic approx = mag == 0 ? Dyadic::from_int(1)
                                     : dyadic_from_double(mag.convert_to<double>());
            tol += to_rat(Real::finite(float_ulp(acc, approx)));
        }
        oracle::Rat got = to_rat(decode(racc));
        CHECK(abs(got - expect) <= tol);
    }
}

TEST_CASE("property: symmetric int8 round-trip error is at most scale/2") {
    std::mt19937 rng(41);
    std::uniform_real_distribution<double> dist(-80.0, 80.0);
    QuantScheme s;
    s.target_format = ScalarFormat::int8();
    s.scale_format = ScalarFormat::fp32();
    for (int trial = 0; trial < 20; ++trial) {
        std::vector<double> x(128);
        for (auto& v : x) v = dist(rng);
        CalibrationStats st;
        st.observe_per_tensor(x);
        auto scales = compute_scale(st, s);
        auto q = quantize(x, {128}, s, scales, 0);
        auto back = dequantize(q, ScalarFormat::fp32());
        oracle::Rat half_scale = to_rat(decode(scales[0])) / 2;
        // a hair of slack for the fp32 roundings of scale and product
        oracle::Rat tol = half_scale * oracle::Rat(1049, 1024);
        for (size_t i = 0; i < x.size(); ++i) {
            oracle::Rat err = abs(oracle::rat_from_double(x[i]) - to_rat(decode(back[i])));
            CHECK(err <= tol);
        }
    }
}

TEST_CASE("property: per-channel with one channel is bit-identical to per-tensor") {
    std::mt19937 rng(43);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    std::vector<double> x(96);
    for (auto& v : x) v = dist(rng);

    QuantScheme pt;
    pt.granularity = Granularity::PerTensor;
    QuantScheme pc;
    pc.granularity = Granularity::PerChannel;

    CalibrationStats st;
    st.observe_per_tensor(x);
    auto scales = compute_scale(st, pt);

    auto q1 = quantize(x, {96, 1}, pt, scales, 1);
    auto q2 = quantize(x, {96, 1}, pc, scales, 1);
    REQUIRE(q1.elements.size() == q2.elements.size());
    for (size_t i = 0; i < q1.elements.size(); ++i)
        CHECK(q1.elements[i].bits == q2.elements[i].bits);
}
