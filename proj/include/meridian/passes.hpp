#pragma once

#include <set>
#include <vector>

#include "meridian/ir.hpp"

namespace meridian::passes {

using ir::IRBlock;
using ir::ModelGraph;
using ir::OpKind;
using ir::PostOp;

// Ordered stage inventory of the target vector pipeline. A fused post-op
// chain is legal when it embeds order-preservingly into the stage list.
struct PipelineStage {
    std::set<OpKind> ops;
};

struct PipelineCapability {
    std::vector<PipelineStage> stages;
    bool reduce_sum = true;
    bool reduce_max = true;
    bool accumulator = true;
    bool spline_unit = true;

    // Stage inventory covering softmax, layernorm, GELU, ReLU, residual
    // adds and quantize/dequantize chains.
    static PipelineCapability standard();

    // Greedy order-preserving embedding; fills stage_of[i] with the stage
    // index assigned to chain[i] when non-null.
    bool embeds(const std::vector<PostOp>& chain, std::vector<int>* stage_of = nullptr) const;
};

// Moves dequantize nodes that consume a matrix block's output into that
// block's post-op list and deletes provably redundant scale-1 dequantizes.
ModelGraph fuse_quantization(const ModelGraph& g);

// Merges maximal elementwise chains into the preceding matrix or vector
// block when the chain embeds into the pipeline; splits greedily otherwise.
ModelGraph fuse_operations(const ModelGraph& g, const PipelineCapability& cap);

// Deletes permute/transpose/contiguous-view nodes, folding them into the
// consumers' read views. Chained permutations compose; slices stay.
ModelGraph fuse_reshapes(const ModelGraph& g);

struct FusionOptions {
    bool quantization = true;
    bool operations = true;
    bool reshapes = true;
    PipelineCapability capability = PipelineCapability::standard();
};

ModelGraph run_fusion(const ModelGraph& g, const FusionOptions& opt);

}  // namespace meridian::passes
