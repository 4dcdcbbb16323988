#include "meridian/passes.hpp"

#include <algorithm>
#include <unordered_map>
#include <unordered_set>

namespace meridian::passes {

using ir::BlockCategory;
using ir::GraphError;
using ir::TensorKind;
using ir::ViewDesc;

PipelineCapability PipelineCapability::standard() {
    PipelineCapability c;
    using K = OpKind;
    c.stages = {
        {{K::Dequantize, K::Mul, K::MulScalar, K::Identity}},
        {{K::Add, K::Sub, K::AddScalar, K::Identity}},
        {{K::Gelu, K::Tanh, K::Sigmoid, K::Erf, K::Silu, K::Relu, K::Relu6, K::Identity}},
        {{K::Mul, K::MulScalar, K::Identity}},
        {{K::Add, K::AddScalar, K::Sub, K::Identity}},
        {{K::Relu, K::Relu6, K::Identity}},
        {{K::Quantize, K::Identity}},
    };
    return c;
}

bool PipelineCapability::embeds(const std::vector<PostOp>& chain,
                                std::vector<int>* stage_of) const {
    if (stage_of) stage_of->assign(chain.size(), -1);
    int next = 0;
    for (size_t i = 0; i < chain.size(); ++i) {
        OpKind k = chain[i].kind;
        bool needs_spline = k == OpKind::Gelu || k == OpKind::Tanh || k == OpKind::Sigmoid ||
                            k == OpKind::Erf || k == OpKind::Silu;
        if (needs_spline && !spline_unit) return false;
        int found = -1;
        for (int s = next; s < (int)stages.size(); ++s) {
            if (stages[(size_t)s].ops.count(k)) {
                found = s;
                break;
            }
        }
        if (found < 0) return false;
        if (stage_of) (*stage_of)[i] = found;
        next = found + 1;
    }
    return true;
}

namespace {

// number of consumers of a tensor among blocks and graph outputs
int fanout(const ModelGraph& g, const std::string& name) {
    int n = 0;
    for (const auto& b : g.blocks) {
        for (const auto& in : b.inputs)
            if (in == name) ++n;
        if (b.weight == name) ++n;
        if (b.bias == name) ++n;
        if (b.input_scale == name || b.weight_scale == name) ++n;
        for (const auto& p : b.post_ops)
            for (const auto& o : p.operands)
                if (o == name) ++n;
    }
    for (const auto& o : g.outputs)
        if (o == name) ++n;
    return n;
}

void rename_fused(IRBlock& b) {
    const std::string suffix = "_fused";
    if (b.name.size() < suffix.size() ||
        b.name.compare(b.name.size() - suffix.size(), suffix.size(), suffix) != 0)
        b.name += suffix;
}

// drop tensors that no block references anymore
void prune_dead_tensors(ModelGraph& g) {
    std::unordered_set<std::string> used;
    for (const auto& b : g.blocks) {
        for (const auto& in : b.inputs) used.insert(in);
        if (!b.weight.empty()) used.insert(b.weight);
        if (!b.bias.empty()) used.insert(b.bias);
        if (!b.input_scale.empty()) used.insert(b.input_scale);
        if (!b.weight_scale.empty()) used.insert(b.weight_scale);
        used.insert(b.output);
        for (const auto& p : b.post_ops)
            for (const auto& o : p.operands) used.insert(o);
    }
    for (const auto& o : g.outputs) used.insert(o);
    ModelGraph out;
    out.name = g.name;
    out.main_memory = g.main_memory;
    out.outputs = g.outputs;
    for (const auto& t : g.tensors)
        if (used.count(t.name) || t.kind != TensorKind::Activation) out.add_tensor(t);
    out.blocks = g.blocks;
    return void(g = std::move(out));
}

bool scale_is_one(const ModelGraph& g, const std::string& scale_name) {
    if (scale_name.empty()) return true;
    const auto& t = g.tensor(scale_name);
    if (t.data.empty()) return false;
    for (double v : t.data)
        if (v != 1.0) return false;
    return true;
}

// values of `fmt` are all exactly representable in the vector pipeline's
// compute format, so a scale-1 dequantize is a pure no-op
bool exactly_widens(const numerics::ScalarFormat& fmt) {
    using numerics::FormatKind;
    if (fmt.kind == FormatKind::Int) return fmt.width <= 9;  // bf16 has 8+1 significand bits
    return fmt.kind == FormatKind::Float || fmt.kind == FormatKind::NormalFloat4;
}

// standalone elementwise blocks are Reduction-category with a category-2 kind
bool is_elementwise_block(const IRBlock& b) {
    return b.category == BlockCategory::Reduction && ir::is_elementwise(b.kind);
}

PostOp block_as_postop(const IRBlock& b) {
    PostOp p;
    p.kind = b.kind;
    p.name = b.name;
    if (!b.input_scale.empty()) p.operands.push_back(b.input_scale);
    for (size_t i = 1; i < b.inputs.size(); ++i) p.operands.push_back(b.inputs[i]);
    p.immediate = b.immediate;
    p.has_immediate = b.has_immediate;
    return p;
}

}  // namespace

ModelGraph fuse_quantization(const ModelGraph& g) {
    ModelGraph out = g;
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < out.blocks.size(); ++i) {
            IRBlock& b = out.blocks[i];

            // delete redundant scale-1 dequantize nodes outright
            if (b.kind == OpKind::Dequantize && scale_is_one(out, b.input_scale) &&
                exactly_widens(out.tensor(b.inputs.at(0)).dtype) && !b.input_view &&
                b.post_ops.empty()) {
                const std::string src = b.inputs.at(0);
                const std::string dst = b.output;
                bool is_output = std::count(out.outputs.begin(), out.outputs.end(), dst) > 0;
                if (!is_output) {
                    for (auto& c : out.blocks) {
                        for (auto& in : c.inputs)
                            if (in == dst) in = src;
                        if (c.weight == dst) c.weight = src;
                        for (auto& p : c.post_ops)
                            for (auto& o : p.operands)
                                if (o == dst) o = src;
                    }
                    out.blocks.erase(out.blocks.begin() + (long)i);
                    prune_dead_tensors(out);
                    changed = true;
                    break;
                }
            }

            // fold a dequantize that solely consumes a matrix block's output
            if (b.category != BlockCategory::MatrixOp) continue;
            if (fanout(out, b.output) != 1) continue;
            for (size_t j = i + 1; j < out.blocks.size(); ++j) {
                IRBlock& d = out.blocks[j];
                bool consumes = !d.inputs.empty() && d.inputs[0] == b.output;
                if (!consumes) continue;
                if (d.kind != OpKind::Dequantize || d.category != BlockCategory::Reduction)
                    break;
                if (d.input_view || !d.post_ops.empty()) break;
                PostOp p = block_as_postop(d);
                b.post_ops.push_back(p);
                b.output = d.output;
                rename_fused(b);
                out.blocks.erase(out.blocks.begin() + (long)j);
                prune_dead_tensors(out);
                changed = true;
                break;
            }
            if (changed) break;
        }
    }
    out.validate();
    return out;
}

ModelGraph fuse_operations(const ModelGraph& g, const PipelineCapability& cap) {
    ModelGraph out = g;
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < out.blocks.size() && !changed; ++i) {
            IRBlock& b = out.blocks[i];
            bool host_ok = b.category == BlockCategory::MatrixOp ||
                           b.category == BlockCategory::Reduction;
            if (!host_ok) continue;
            if (fanout(out, b.output) != 1) continue;
            for (size_t j = i + 1; j < out.blocks.size(); ++j) {
                IRBlock& e = out.blocks[j];
                bool consumes = !e.inputs.empty() && e.inputs[0] == b.output;
                if (!consumes) continue;
                if (!is_elementwise_block(e) || e.input_view) break;

                std::vector<PostOp> chain = b.post_ops;
                if (is_elementwise_block(b) && b.kind != OpKind::Identity) {
                    // the host's own op occupies a stage too
                    chain.insert(chain.begin(), block_as_postop(b));
                }
                chain.push_back(block_as_postop(e));
                if (!cap.embeds(chain)) break;  // capacity exhausted: split here

                if (is_elementwise_block(b) && b.kind != OpKind::Identity) {
                    b.kind = OpKind::Identity;
                    b.inputs.resize(1);
                    b.input_scale.clear();
                    b.has_immediate = false;
                    b.immediate = 0.0;
                    b.post_ops = chain;
                } else {
                    b.post_ops = chain;
                }
                b.output = e.output;
                rename_fused(b);
                out.blocks.erase(out.blocks.begin() + (long)j);
                prune_dead_tensors(out);
                changed = true;
                break;
            }
        }
    }
    out.validate();
    return out;
}

ModelGraph fuse_reshapes(const ModelGraph& g) {
    ModelGraph out = g;
    bool changed = true;
    while (changed) {
        changed = false;
        for (size_t i = 0; i < out.blocks.size(); ++i) {
            IRBlock& r = out.blocks[i];
            if (r.category != BlockCategory::Reshape) continue;
            if (r.kind == OpKind::Slice) continue;  // executed on the vector unit
            bool is_graph_output =
                std::count(out.outputs.begin(), out.outputs.end(), r.output) > 0;
            if (is_graph_output) continue;

            // the view this reshape produces over its source tensor
            ViewDesc src_view = ir::operand_view(out, r.inputs.at(0), r.input_view);
            ViewDesc folded;
            if (r.kind == OpKind::Permute || r.kind == OpKind::Transpose) {
                folded = src_view.permuted(r.permutation);
            } else {  // Reshape: contiguous views only
                ViewDesc canon = ViewDesc::contiguous(src_view.shape);
                if (canon.strides != src_view.strides) continue;  // non-affine here: keep
                folded = ViewDesc::contiguous(out.tensor(r.output).shape);
                folded.offset = src_view.offset;
            }

            // rewire every consumer to read the source through the view
            const std::string dst = r.output;
            const std::string src = r.inputs.at(0);
            bool ok = true;
            for (const auto& c : out.blocks) {
                if (&c == &r) continue;
                // views only apply to primary input and weight edges, and
                // never stack on a consumer that already reads through one
                for (size_t k = 1; k < c.inputs.size(); ++k)
                    if (c.inputs[k] == dst) ok = false;
                if (c.bias == dst || c.input_scale == dst || c.weight_scale == dst) ok = false;
                if (!c.inputs.empty() && c.inputs[0] == dst && c.input_view) ok = false;
                if (c.weight == dst && c.weight_view) ok = false;
                for (const auto& p : c.post_ops)
                    for (const auto& o : p.operands)
                        if (o == dst) ok = false;
            }
            if (!ok) continue;

            for (auto& c : out.blocks) {
                if (&c == &r) continue;
                if (!c.inputs.empty() && c.inputs[0] == dst) {
                    c.inputs[0] = src;
                    c.input_view = folded;
                }
                if (c.weight == dst) {
                    c.weight = src;
                    c.weight_view = folded;
                }
            }
            out.blocks.erase(out.blocks.begin() + (long)i);
            prune_dead_tensors(out);
            changed = true;
            break;
        }
    }
    out.validate();
    return out;
}

ModelGraph run_fusion(const ModelGraph& g, const FusionOptions& opt) {
    ModelGraph out = g;
    if (opt.quantization) out = fuse_quantization(out);
    if (opt.operations) out = fuse_operations(out, opt.capability);
    if (opt.reshapes) out = fuse_reshapes(out);
    return out;
}

}  // namespace meridian::passes
