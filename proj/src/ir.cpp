#include "meridian/ir.hpp"

#include <algorithm>
#include <numeric>
#include <fstream>
#include <sstream>

#include <json.hpp>

namespace meridian::ir {

using nlohmann::json;

int64_t TensorDesc::elements() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

int64_t TensorDesc::bytes() const { return elements() * dtype.storage_bytes(); }

std::vector<int64_t> TensorDesc::effective_shape() const {
    if (!permutation) return shape;
    std::vector<int64_t> s(shape.size());
    for (size_t i = 0; i < shape.size(); ++i) s[i] = shape[(size_t)(*permutation)[i]];
    return s;
}

ViewDesc ViewDesc::contiguous(const std::vector<int64_t>& shape) {
    ViewDesc v;
    v.shape = shape;
    v.strides.assign(shape.size(), 1);
    for (int i = (int)shape.size() - 2; i >= 0; --i)
        v.strides[(size_t)i] = v.strides[(size_t)i + 1] * shape[(size_t)i + 1];
    return v;
}

ViewDesc ViewDesc::permuted(const std::vector<int>& perm) const {
    if (perm.size() != shape.size())
        throw GraphError(GraphError::Code::Semantics, "permutation rank mismatch");
    ViewDesc v;
    v.offset = offset;
    v.shape.resize(shape.size());
    v.strides.resize(shape.size());
    std::vector<bool> seen(perm.size(), false);
    for (size_t i = 0; i < perm.size(); ++i) {
        int p = perm[i];
        if (p < 0 || (size_t)p >= perm.size() || seen[(size_t)p])
            throw GraphError(GraphError::Code::Semantics, "permutation is not a bijection");
        seen[(size_t)p] = true;
        v.shape[i] = shape[(size_t)p];
        v.strides[i] = strides[(size_t)p];
    }
    return v;
}

int64_t ViewDesc::elements() const {
    int64_t n = 1;
    for (int64_t d : shape) n *= d;
    return n;
}

int64_t ViewDesc::flat_index(const std::vector<int64_t>& idx) const {
    int64_t f = offset;
    for (size_t i = 0; i < shape.size(); ++i) f += idx[i] * strides[i];
    return f;
}

ViewDesc operand_view(const ModelGraph& g, const std::string& tensor,
                      const std::optional<ViewDesc>& edge_view) {
    if (edge_view) return *edge_view;
    const auto& t = g.tensor(tensor);
    ViewDesc v = ViewDesc::contiguous(t.shape);
    if (t.permutation) v = v.permuted(*t.permutation);
    return v;
}

namespace {

struct OpInfo {
    const char* name;
    OpKind kind;
    int category;
};

const OpInfo kOps[] = {
    {"conv2d", OpKind::Conv2d, 1},
    {"matmul", OpKind::Matmul, 1},
    {"dwconv2d", OpKind::DwConv2d, 1},
    {"relu", OpKind::Relu, 2},
    {"relu6", OpKind::Relu6, 2},
    {"gelu", OpKind::Gelu, 2},
    {"tanh", OpKind::Tanh, 2},
    {"sigmoid", OpKind::Sigmoid, 2},
    {"erf", OpKind::Erf, 2},
    {"silu", OpKind::Silu, 2},
    {"add", OpKind::Add, 2},
    {"sub", OpKind::Sub, 2},
    {"mul", OpKind::Mul, 2},
    {"add_scalar", OpKind::AddScalar, 2},
    {"mul_scalar", OpKind::MulScalar, 2},
    {"quantize", OpKind::Quantize, 2},
    {"dequantize", OpKind::Dequantize, 2},
    {"identity", OpKind::Identity, 2},
    {"softmax", OpKind::Softmax, 3},
    {"layernorm", OpKind::Layernorm, 3},
    {"rmsnorm", OpKind::Rmsnorm, 3},
    {"max_pool2d", OpKind::MaxPool2d, 3},
    {"avg_pool2d", OpKind::AvgPool2d, 3},
    {"reduce_max", OpKind::ReduceMax, 3},
    {"reduce_sum", OpKind::ReduceSum, 3},
    {"matmul_vec", OpKind::MatmulVec, 3},
    {"permute", OpKind::Permute, 4},
    {"transpose", OpKind::Transpose, 4},
    {"reshape", OpKind::Reshape, 4},
    {"slice", OpKind::Slice, 4},
};

}  // namespace

int op_category(OpKind k) {
    for (const auto& o : kOps)
        if (o.kind == k) return o.category;
    return 0;
}

bool is_elementwise(OpKind k) { return op_category(k) == 2; }
bool is_matrix(OpKind k) { return op_category(k) == 1; }
bool is_reshape(OpKind k) { return op_category(k) == 4; }

OpKind parse_op_kind(const std::string& target) {
    for (const auto& o : kOps)
        if (target == o.name) return o.kind;
    throw GraphError(GraphError::Code::Schema, "unknown op target: " + target);
}

std::string op_kind_to_string(OpKind k) {
    for (const auto& o : kOps)
        if (o.kind == k) return o.name;
    return "?";
}

const TensorDesc& ModelGraph::tensor(const std::string& n) const {
    auto it = index_.find(n);
    if (it == index_.end())
        throw GraphError(GraphError::Code::DanglingTensor, "unknown tensor: " + n);
    return tensors[it->second];
}

TensorDesc& ModelGraph::tensor(const std::string& n) {
    auto it = index_.find(n);
    if (it == index_.end())
        throw GraphError(GraphError::Code::DanglingTensor, "unknown tensor: " + n);
    return tensors[it->second];
}

bool ModelGraph::has_tensor(const std::string& n) const { return index_.count(n) != 0; }

void ModelGraph::add_tensor(TensorDesc t) {
    if (index_.count(t.name))
        throw GraphError(GraphError::Code::Duplicate, "duplicate tensor: " + t.name);
    index_[t.name] = tensors.size();
    tensors.push_back(std::move(t));
}

void ModelGraph::validate() const {
    std::unordered_map<std::string, int> def_at;  // tensor -> defining block
    for (const auto& t : tensors)
        if (t.kind != TensorKind::Activation) def_at[t.name] = -1;
    std::unordered_map<std::string, int> block_names;
    for (size_t bi = 0; bi < blocks.size(); ++bi) {
        const auto& b = blocks[bi];
        if (block_names.count(b.name))
            throw GraphError(GraphError::Code::Duplicate, "duplicate block name: " + b.name);
        block_names[b.name] = (int)bi;
        auto need = [&](const std::string& n, const char* role) {
            if (n.empty()) return;
            if (!has_tensor(n))
                throw GraphError(GraphError::Code::DanglingTensor,
                                 b.name + ": dangling " + role + " reference: " + n);
            auto it = def_at.find(n);
            if (it == def_at.end())
                throw GraphError(GraphError::Code::Cycle,
                                 b.name + ": " + role + " '" + n +
                                     "' is not defined before use (cycle or bad order)");
        };
        for (const auto& in : b.inputs) need(in, "input");
        need(b.weight, "weight");
        need(b.bias, "bias");
        need(b.input_scale, "input_scale");
        need(b.weight_scale, "weight_scale");
        for (const auto& p : b.post_ops) {
            if (!is_elementwise(p.kind))
                throw GraphError(GraphError::Code::Semantics,
                                 b.name + ": post-op '" + p.name + "' is not elementwise");
            for (const auto& o : p.operands) need(o, "post-op operand");
        }
        if (b.output.empty() || !has_tensor(b.output))
            throw GraphError(GraphError::Code::DanglingTensor,
                             b.name + ": missing output tensor");
        if (def_at.count(b.output) && def_at[b.output] >= 0)
            throw GraphError(GraphError::Code::Duplicate,
                             b.name + ": output '" + b.output + "' already defined (not SSA)");
        if (tensor(b.output).kind != TensorKind::Activation)
            throw GraphError(GraphError::Code::Semantics,
                             b.name + ": output must be an activation tensor");
        def_at[b.output] = (int)bi;
    }
    for (const auto& o : outputs)
        if (!has_tensor(o))
            throw GraphError(GraphError::Code::DanglingTensor, "unknown graph output: " + o);
}

// ------------------------------------------------------------------- JSON

namespace {

json shape_to_json(const std::vector<int64_t>& s) { return json(s); }

TensorDesc tensor_from_json(const json& j) {
    TensorDesc t;
    if (!j.contains("name") || !j.contains("shape") || !j.contains("dtype"))
        throw GraphError(GraphError::Code::Schema, "tensor entry missing name/shape/dtype");
    t.name = j.at("name").get<std::string>();
    t.shape = j.at("shape").get<std::vector<int64_t>>();
    t.dtype = numerics::parse_format(j.at("dtype").get<std::string>());
    if (j.contains("address")) t.address = j.at("address").get<int64_t>();
    if (j.contains("permutation")) t.permutation = j.at("permutation").get<std::vector<int>>();
    std::string kind = j.value("kind", "activation");
    if (kind == "external") t.kind = TensorKind::External;
    else if (kind == "weight") t.kind = TensorKind::Weight;
    else if (kind == "activation") t.kind = TensorKind::Activation;
    else throw GraphError(GraphError::Code::Schema, "bad tensor kind: " + kind);
    if (j.contains("data")) t.data = j.at("data").get<std::vector<double>>();
    return t;
}

json tensor_to_json(const TensorDesc& t) {
    json j;
    j["name"] = t.name;
    j["shape"] = shape_to_json(t.shape);
    j["dtype"] = numerics::format_to_string(t.dtype);
    if (t.address) j["address"] = *t.address;
    if (t.permutation) j["permutation"] = *t.permutation;
    switch (t.kind) {
        case TensorKind::External: j["kind"] = "external"; break;
        case TensorKind::Weight: j["kind"] = "weight"; break;
        case TensorKind::Activation: j["kind"] = "activation"; break;
    }
    if (!t.data.empty()) j["data"] = t.data;
    return j;
}

PostOp postop_from_json(const json& j) {
    PostOp p;
    p.kind = parse_op_kind(j.at("target").get<std::string>());
    p.name = j.value("name", op_kind_to_string(p.kind));
    if (j.contains("operands")) p.operands = j.at("operands").get<std::vector<std::string>>();
    if (j.contains("imm")) {
        p.immediate = j.at("imm").get<double>();
        p.has_immediate = true;
    }
    return p;
}

json postop_to_json(const PostOp& p) {
    json j;
    j["target"] = op_kind_to_string(p.kind);
    j["name"] = p.name;
    if (!p.operands.empty()) j["operands"] = p.operands;
    if (p.has_immediate) j["imm"] = p.immediate;
    return j;
}

IRBlock block_from_json(const json& j) {
    IRBlock b;
    if (!j.contains("name") || !j.contains("target"))
        throw GraphError(GraphError::Code::Schema, "op entry missing name/target");
    b.name = j.at("name").get<std::string>();
    b.kind = parse_op_kind(j.at("target").get<std::string>());
    int cat = op_category(b.kind);
    b.category = cat == 1   ? BlockCategory::MatrixOp
                 : cat == 4 ? BlockCategory::Reshape
                            : BlockCategory::Reduction;
    if (j.contains("input")) b.inputs.push_back(j.at("input").get<std::string>());
    if (j.contains("inputs"))
        for (const auto& i : j.at("inputs")) b.inputs.push_back(i.get<std::string>());
    b.weight = j.value("weight", "");
    b.bias = j.value("bias", "");
    b.input_scale = j.value("scale", j.value("input_scale", ""));
    b.weight_scale = j.value("weight_scale", "");
    b.block_size = j.value("block_size", int64_t{0});
    if (j.contains("psum_dtype"))
        b.psum_dtype = numerics::parse_format(j.at("psum_dtype").get<std::string>());
    if (j.contains("stride")) {
        auto s = j.at("stride").get<std::vector<int>>();
        b.conv.stride_y = s.at(0);
        b.conv.stride_x = s.at(1);
    }
    if (j.contains("padding")) {
        auto s = j.at("padding").get<std::vector<int>>();
        b.conv.pad_y = s.at(0);
        b.conv.pad_x = s.at(1);
    }
    if (j.contains("axis")) b.reduce_axis = j.at("axis").get<int>();
    if (j.contains("permutation")) b.permutation = j.at("permutation").get<std::vector<int>>();
    if (j.contains("begin")) b.slice_begin = j.at("begin").get<std::vector<int64_t>>();
    if (j.contains("end")) b.slice_end = j.at("end").get<std::vector<int64_t>>();
    if (j.contains("imm")) {
        b.immediate = j.at("imm").get<double>();
        b.has_immediate = true;
    }
    auto view_from = [](const json& v) {
        ViewDesc d;
        d.shape = v.at("shape").get<std::vector<int64_t>>();
        d.strides = v.at("strides").get<std::vector<int64_t>>();
        d.offset = v.value("offset", int64_t{0});
        return d;
    };
    if (j.contains("input_view")) b.input_view = view_from(j.at("input_view"));
    if (j.contains("weight_view")) b.weight_view = view_from(j.at("weight_view"));
    if (j.contains("post_ops"))
        for (const auto& p : j.at("post_ops")) b.post_ops.push_back(postop_from_json(p));
    if (!j.contains("output"))
        throw GraphError(GraphError::Code::Schema, b.name + ": op entry missing output");
    b.output = j.at("output").get<std::string>();
    return b;
}

json block_to_json(const IRBlock& b) {
    json j;
    j["name"] = b.name;
    j["target"] = op_kind_to_string(b.kind);
    if (b.inputs.size() == 1) j["input"] = b.inputs[0];
    else if (!b.inputs.empty()) j["inputs"] = b.inputs;
    if (!b.weight.empty()) j["weight"] = b.weight;
    if (!b.bias.empty()) j["bias"] = b.bias;
    if (!b.input_scale.empty()) j["scale"] = b.input_scale;
    if (!b.weight_scale.empty()) j["weight_scale"] = b.weight_scale;
    if (b.block_size) j["block_size"] = b.block_size;
    if (b.psum_dtype) j["psum_dtype"] = numerics::format_to_string(*b.psum_dtype);
    if (b.conv.stride_y != 1 || b.conv.stride_x != 1)
        j["stride"] = std::vector<int>{b.conv.stride_y, b.conv.stride_x};
    if (b.conv.pad_y != 0 || b.conv.pad_x != 0)
        j["padding"] = std::vector<int>{b.conv.pad_y, b.conv.pad_x};
    if (b.reduce_axis >= 0) j["axis"] = b.reduce_axis;
    if (!b.permutation.empty()) j["permutation"] = b.permutation;
    if (!b.slice_begin.empty()) j["begin"] = b.slice_begin;
    if (!b.slice_end.empty()) j["end"] = b.slice_end;
    if (b.has_immediate) j["imm"] = b.immediate;
    auto view_to = [](const ViewDesc& v) {
        json d;
        d["shape"] = v.shape;
        d["strides"] = v.strides;
        if (v.offset) d["offset"] = v.offset;
        return d;
    };
    if (b.input_view) j["input_view"] = view_to(*b.input_view);
    if (b.weight_view) j["weight_view"] = view_to(*b.weight_view);
    if (!b.post_ops.empty()) {
        json ps = json::array();
        for (const auto& p : b.post_ops) ps.push_back(postop_to_json(p));
        j["post_ops"] = ps;
    }
    j["output"] = b.output;
    return j;
}

}  // namespace

ModelGraph graph_from_json_text(const std::string& text) {
    json j;
    try {
        j = json::parse(text);
    } catch (const std::exception& e) {
        throw GraphError(GraphError::Code::Schema, std::string("JSON parse error: ") + e.what());
    }
    if (!j.is_object() || j.value("schema", 0) != 1)
        throw GraphError(GraphError::Code::Schema, "missing or unsupported schema version");
    ModelGraph g;
    g.name = j.value("name", "model");
    g.main_memory = j.value("main_memory", int64_t{1} << 31);
    if (!j.contains("tensors") || !j.contains("ops"))
        throw GraphError(GraphError::Code::Schema, "graph needs 'tensors' and 'ops' arrays");
    for (const auto& t : j.at("tensors")) g.add_tensor(tensor_from_json(t));
    for (const auto& o : j.at("ops")) {
        IRBlock b = block_from_json(o);
        // an op may declare its output tensor inline
        if (o.contains("output_desc")) {
            TensorDesc t = tensor_from_json(o.at("output_desc"));
            g.add_tensor(std::move(t));
        }
        g.blocks.push_back(std::move(b));
    }
    if (j.contains("outputs")) g.outputs = j.at("outputs").get<std::vector<std::string>>();
    g.validate();
    return g;
}

ModelGraph load_graph(const std::string& path) {
    std::ifstream f(path);
    if (!f) throw GraphError(GraphError::Code::Schema, "cannot open graph file: " + path);
    std::stringstream ss;
    ss << f.rdbuf();
    return graph_from_json_text(ss.str());
}

std::string graph_to_json_text(const ModelGraph& g) {
    json j;
    j["schema"] = 1;
    j["name"] = g.name;
    j["main_memory"] = g.main_memory;
    json ts = json::array();
    for (const auto& t : g.tensors) ts.push_back(tensor_to_json(t));
    j["tensors"] = ts;
    json os = json::array();
    for (const auto& b : g.blocks) os.push_back(block_to_json(b));
    j["ops"] = os;
    j["outputs"] = g.outputs;
    return j.dump(1);
}

void save_graph(const ModelGraph& g, const std::string& path) {
    std::ofstream f(path);
    if (!f) throw GraphError(GraphError::Code::Schema, "cannot write graph file: " + path);
    f << graph_to_json_text(g);
}

// ------------------------------------------------------------- allocation

ModelGraph allocate(const ModelGraph& g) {
    ModelGraph out = g;
    constexpr int64_t kAlign = 32;

    // liveness per tensor: [def block, last use block]; weights/externals and
    // graph outputs live for the whole program
    const int kAlways = -1;
    const int n_blocks = (int)out.blocks.size();
    std::unordered_map<std::string, std::pair<int, int>> live;
    for (const auto& t : out.tensors)
        if (t.kind != TensorKind::Activation) live[t.name] = {kAlways, n_blocks + 1};
    for (int bi = 0; bi < n_blocks; ++bi) {
        const auto& b = out.blocks[bi];
        auto use = [&](const std::string& n) {
            if (n.empty()) return;
            auto it = live.find(n);
            if (it == live.end()) return;
            if (it->second.first != kAlways) it->second.second = std::max(it->second.second, bi);
        };
        for (const auto& in : b.inputs) use(in);
        use(b.weight);
        use(b.bias);
        use(b.input_scale);
        use(b.weight_scale);
        for (const auto& p : b.post_ops)
            for (const auto& o : p.operands) use(o);
        live[b.output] = {bi, bi};
    }
    for (const auto& o : g.outputs) {
        auto it = live.find(o);
        if (it != live.end() && it->second.first != kAlways) it->second.second = n_blocks + 1;
    }

    struct Placed {
        int64_t begin, end;
        int live_from, live_to;
    };
    std::vector<Placed> placed;
    for (const auto& t : out.tensors) {
        if (t.address) {
            auto lv = live.count(t.name) ? live[t.name] : std::pair<int, int>{kAlways, n_blocks + 1};
            placed.push_back({*t.address, *t.address + t.bytes(), lv.first, lv.second});
        }
    }

    for (auto& t : out.tensors) {
        if (t.address) continue;
        auto lv = live.count(t.name) ? live[t.name] : std::pair<int, int>{kAlways, n_blocks + 1};
        int64_t size = std::max<int64_t>(t.bytes(), 1);
        // collect conflicting intervals and first-fit above them
        std::vector<std::pair<int64_t, int64_t>> busy;
        for (const auto& p : placed) {
            bool overlap_live = !(p.live_to < lv.first || lv.second < p.live_from);
            if (overlap_live) busy.push_back({p.begin, p.end});
        }
        std::sort(busy.begin(), busy.end());
        int64_t addr = 0;
        for (const auto& [b0, b1] : busy) {
            if (addr + size <= b0) break;
            addr = std::max(addr, b1);
            addr = (addr + kAlign - 1) / kAlign * kAlign;
        }
        if (addr + size > out.main_memory)
            throw GraphError(GraphError::Code::OutOfMemory,
                             "allocation exceeds main memory at tensor " + t.name);
        t.address = addr;
        placed.push_back({addr, addr + size, lv.first, lv.second});
    }
    return out;
}

// ------------------------------------------------------------ ideal model

BlockDims block_dims(const IRBlock& block, const ModelGraph& g) {
    BlockDims d;
    if (block.kind == OpKind::Conv2d || block.kind == OpKind::DwConv2d) {
        const auto& w = g.tensor(block.weight);
        const auto& outt = g.tensor(block.output);
        auto ishape = operand_view(g, block.inputs.at(0), block.input_view).shape;
        auto oshape = outt.shape;
        if (ishape.size() != 3 || w.shape.size() < 3)
            throw GraphError(GraphError::Code::Semantics,
                             block.name + ": conv expects HWC input and fy,fx,(ic,)oc weights");
        d.is_conv = true;
        d.in_h = ishape[0];
        d.in_w = ishape[1];
        d.fy = w.shape[0];
        d.fx = w.shape[1];
        d.oy = oshape[0];
        d.ox = oshape[1];
        d.oc = oshape[2];
        d.ic = block.kind == OpKind::DwConv2d ? 1 : ishape[2];
        d.stride_y = block.conv.stride_y;
        d.stride_x = block.conv.stride_x;
        d.pad_y = block.conv.pad_y;
        d.pad_x = block.conv.pad_x;
    } else if (block.kind == OpKind::Matmul) {
        auto ashape = operand_view(g, block.inputs.at(0), block.input_view).shape;
        auto bshape = operand_view(g, block.weight, block.weight_view).shape;
        if (ashape.empty() || bshape.size() < 2)
            throw GraphError(GraphError::Code::Semantics, block.name + ": bad matmul shapes");
        int64_t k = ashape.back();
        int64_t m = 1;
        for (size_t i = 0; i + 1 < ashape.size(); ++i) m *= ashape[i];
        if (bshape[bshape.size() - 2] != k)
            throw GraphError(GraphError::Code::Semantics,
                             block.name + ": matmul reduction extent mismatch");
        d.oy = m;
        d.ox = 1;
        d.ic = k;
        d.oc = bshape.back();
    } else {
        throw GraphError(GraphError::Code::Semantics,
                         block.name + ": not a matrix block");
    }
    return d;
}

int64_t total_macs(const IRBlock& block, const ModelGraph& g) {
    BlockDims d = block_dims(block, g);
    if (block.kind == OpKind::DwConv2d) {
        const auto& outt = g.tensor(block.output);
        return outt.elements() * d.fy * d.fx;
    }
    return d.macs();
}

Rational ideal_cycles(const IRBlock& block, const ModelGraph& g, const AcceleratorConfig& cfg) {
    if (block.category != BlockCategory::MatrixOp)
        throw GraphError(GraphError::Code::Semantics,
                         block.name + ": ideal_cycles requires a matrix block");
    int64_t macs = total_macs(block, g);
    int64_t units;
    if (block.kind == OpKind::DwConv2d) {
        if (cfg.dwc_mac_trees <= 0)
            throw GraphError(GraphError::Code::Semantics,
                             block.name + ": depthwise block without a DWC unit");
        units = (int64_t)cfg.dwc_mac_trees * 9;
    } else {
        units = (int64_t)cfg.rows * cfg.cols;
    }
    int64_t gcd = std::gcd(macs, units);
    return Rational{macs / gcd, units / gcd};
}

std::string ideal_cycles_csv(const ModelGraph& g, const AcceleratorConfig& cfg) {
    std::ostringstream os;
    os << "name,kind,macs,ideal_cycles\n";
    for (const auto& b : g.blocks) {
        if (b.category != BlockCategory::MatrixOp) continue;
        int64_t macs = total_macs(b, g);
        Rational r = ideal_cycles(b, g, cfg);
        os << b.name << "," << op_kind_to_string(b.kind) << "," << macs << ",";
        if (r.integral()) os << r.to_int();
        else os << r.to_double();
        os << "\n";
    }
    return os.str();
}

}  // namespace meridian::ir
