#pragma once

// Small graph builders shared across test suites.

#include "meridian/ir.hpp"

namespace builders {

using namespace meridian;
using ir::IRBlock;
using ir::ModelGraph;
using ir::TensorDesc;
using ir::TensorKind;
using numerics::ScalarFormat;

inline TensorDesc tensor(const std::string& name, std::vector<int64_t> shape, ScalarFormat f,
                         TensorKind kind = TensorKind::Activation) {
    TensorDesc t;
    t.name = name;
    t.shape = std::move(shape);
    t.dtype = f;
    t.kind = kind;
    return t;
}

inline ModelGraph matmul_graph(int64_t m, int64_t k, int64_t n,
                               ScalarFormat in = ScalarFormat::int8(),
                               ScalarFormat w = ScalarFormat::int8(),
                               ScalarFormat out = ScalarFormat::int32()) {
    ModelGraph g;
    g.name = "mm";
    g.add_tensor(tensor("a", {m, k}, in, TensorKind::External));
    g.add_tensor(tensor("b", {k, n}, w, TensorKind::Weight));
    g.add_tensor(tensor("o", {m, n}, out));
    IRBlock blk;
    blk.name = "mm";
    blk.kind = ir::OpKind::Matmul;
    blk.category = ir::BlockCategory::MatrixOp;
    blk.inputs = {"a"};
    blk.weight = "b";
    blk.output = "o";
    g.blocks.push_back(blk);
    g.outputs = {"o"};
    g.validate();
    return g;
}

inline ModelGraph conv_graph(int64_t h, int64_t w, int64_t c, int64_t fy, int64_t fx,
                             int64_t oc, int stride = 1, int pad = 0,
                             ScalarFormat in = ScalarFormat::int8(),
                             ScalarFormat wt = ScalarFormat::int8(),
                             ScalarFormat out = ScalarFormat::int32()) {
    int64_t oh = (h + 2 * pad - fy) / stride + 1;
    int64_t ow = (w + 2 * pad - fx) / stride + 1;
    ModelGraph g;
    g.name = "conv";
    g.add_tensor(tensor("x", {h, w, c}, in, TensorKind::External));
    g.add_tensor(tensor("w", {fy, fx, c, oc}, wt, TensorKind::Weight));
    g.add_tensor(tensor("o", {oh, ow, oc}, out));
    IRBlock blk;
    blk.name = "conv";
    blk.kind = ir::OpKind::Conv2d;
    blk.category = ir::BlockCategory::MatrixOp;
    blk.inputs = {"x"};
    blk.weight = "w";
    blk.output = "o";
    blk.conv = {stride, stride, pad, pad};
    g.blocks.push_back(blk);
    g.outputs = {"o"};
    g.validate();
    return g;
}

}  // namespace builders
