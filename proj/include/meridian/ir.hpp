#pragma once

#include <cstdint>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

#include "meridian/config.hpp"
#include "meridian/format.hpp"

namespace meridian::ir {

using numerics::ScalarFormat;

enum class TensorKind : uint8_t { External, Weight, Activation };

struct TensorDesc {
    std::string name;
    std::vector<int64_t> shape;
    ScalarFormat dtype;
    std::optional<int64_t> address;
    std::optional<std::vector<int>> permutation;  // axis order applied on read
    TensorKind kind = TensorKind::Activation;
    std::vector<double> data;  // initializer for Weight tensors (may be empty)

    int64_t elements() const;
    int64_t bytes() const;
    std::vector<int64_t> effective_shape() const;  // shape after permutation
};

// Operation inventory. Category numbering follows the hardware mapping:
// (1) matrix ops, (2) elementwise, (3) complex reductions, (4) reshapes.
enum class OpKind : uint8_t {
    // category 1: matrix unit (DwConv2d runs on the DWC unit when present)
    Conv2d, Matmul, DwConv2d,
    // category 2: elementwise, fusable as post-ops
    Relu, Relu6, Gelu, Tanh, Sigmoid, Erf, Silu,
    Add, Sub, Mul, AddScalar, MulScalar,
    Quantize, Dequantize, Identity,
    // category 3: complex reductions / multi-pass vector kernels
    Softmax, Layernorm, Rmsnorm, MaxPool2d, AvgPool2d, ReduceMax, ReduceSum, MatmulVec,
    // category 4: reshapes
    Permute, Transpose, Reshape, Slice,
};

int op_category(OpKind k);
bool is_elementwise(OpKind k);
bool is_matrix(OpKind k);
bool is_reshape(OpKind k);
OpKind parse_op_kind(const std::string& target);
std::string op_kind_to_string(OpKind k);

// Strided window onto a tensor, the address-generator view the hardware
// reads through. Shapes/strides/offsets are in elements, row-major.
struct ViewDesc {
    std::vector<int64_t> shape;
    std::vector<int64_t> strides;
    int64_t offset = 0;

    static ViewDesc contiguous(const std::vector<int64_t>& shape);
    ViewDesc permuted(const std::vector<int>& perm) const;
    int64_t elements() const;
    int64_t flat_index(const std::vector<int64_t>& idx) const;
};

// An elementwise operation riding on a block's vector pipeline.
struct PostOp {
    OpKind kind = OpKind::Identity;
    std::string name;
    std::vector<std::string> operands;  // extra tensors (residual, scale, ...)
    double immediate = 0.0;
    bool has_immediate = false;
};

enum class BlockCategory : uint8_t { MatrixOp, Reduction, Reshape };

struct ConvAttrs {
    int stride_y = 1, stride_x = 1;
    int pad_y = 0, pad_x = 0;
};

// One schedulable unit: a matrix operation, a vector-unit kernel, or a
// standalone reshape. Elementwise consumers fused in live in post_ops.
struct IRBlock {
    std::string name;
    BlockCategory category = BlockCategory::MatrixOp;
    OpKind kind = OpKind::Matmul;
    std::vector<std::string> inputs;  // main operands (matmul B operand maps to weight)
    std::string weight;
    std::string bias;
    std::vector<PostOp> post_ops;
    std::string output;
    ConvAttrs conv;
    int reduce_axis = -1;             // category-3 reduction axis
    std::string input_scale;          // block-level dequant metadata
    std::string weight_scale;
    int64_t block_size = 0;           // microscaling block size (0 = none)
    std::optional<ScalarFormat> psum_dtype;  // per-block accumulator width knob
    std::vector<int> permutation;     // reshape blocks: axis order
    std::vector<int64_t> slice_begin, slice_end;  // slice blocks
    double immediate = 0.0;
    bool has_immediate = false;
    std::optional<ViewDesc> input_view;   // read window for inputs[0]
    std::optional<ViewDesc> weight_view;  // read window for weight
};

class GraphError : public std::runtime_error {
  public:
    enum class Code { Schema, Cycle, DanglingTensor, Duplicate, OutOfMemory, Semantics };
    GraphError(Code c, const std::string& msg) : std::runtime_error(msg), code(c) {}
    Code code;
};

struct ModelGraph {
    std::string name;
    int64_t main_memory = int64_t{1} << 31;
    std::vector<TensorDesc> tensors;
    std::vector<IRBlock> blocks;
    std::vector<std::string> outputs;

    const TensorDesc& tensor(const std::string& n) const;
    TensorDesc& tensor(const std::string& n);
    bool has_tensor(const std::string& n) const;
    void add_tensor(TensorDesc t);
    void validate() const;

  private:
    std::unordered_map<std::string, size_t> index_;
};

// JSON graph exchange (schema version 1, documented in docs/graph_schema.md).
ModelGraph load_graph(const std::string& path);
ModelGraph graph_from_json_text(const std::string& text);
std::string graph_to_json_text(const ModelGraph& g);
void save_graph(const ModelGraph& g, const std::string& path);

// Assigns addresses to tensors that lack them: linear scan over liveness
// intervals with first-fit placement, 32-byte aligned, deterministic in
// declaration order. Already-assigned addresses are kept.
ModelGraph allocate(const ModelGraph& g);

// Exact rational cycle count with small integer terms.
struct Rational {
    int64_t num = 0;
    int64_t den = 1;
    bool integral() const { return den == 1 || num % den == 0; }
    int64_t to_int() const { return num / den; }
    double to_double() const { return (double)num / (double)den; }
};

// Total MACs of a matrix block divided by the hardware MAC count
// (rows*cols for the systolic array, trees*9 for the DWC unit).
Rational ideal_cycles(const IRBlock& block, const AcceleratorConfig& cfg);
int64_t total_macs(const IRBlock& block, const ModelGraph& g);

// MAC counts need shapes; this variant reads them from the graph.
Rational ideal_cycles(const IRBlock& block, const ModelGraph& g, const AcceleratorConfig& cfg);

// Matrix-block geometry shared by the scheduler and the simulator: the
// output/reduction extents of the implied loop nest.
struct BlockDims {
    int64_t oy = 1, ox = 1, oc = 1, ic = 1, fy = 1, fx = 1;
    int stride_y = 1, stride_x = 1, pad_y = 0, pad_x = 0;
    int64_t in_h = 1, in_w = 1;  // conv input spatial extents
    bool is_conv = false;
    int64_t macs() const { return oy * ox * oc * ic * fy * fx; }
};
BlockDims block_dims(const IRBlock& block, const ModelGraph& g);

// Read window of a block operand: the edge view when present, otherwise the
// tensor's own shape (through its declared permutation).
ViewDesc operand_view(const ModelGraph& g, const std::string& tensor,
                      const std::optional<ViewDesc>& edge_view);

// Per-block ideal cycle listing as CSV ("name,category,macs,ideal_cycles").
std::string ideal_cycles_csv(const ModelGraph& g, const AcceleratorConfig& cfg);

}  // namespace meridian::ir
