#include "meridian/sched.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <sstream>

namespace meridian::sched {

using ir::BlockDims;
using ir::IRBlock;
using ir::ModelGraph;

const char* dim_name(Dim d) {
    switch (d) {
        case Dim::OY: return "oy";
        case Dim::OX: return "ox";
        case Dim::OC: return "oc";
        case Dim::IC: return "ic";
        case Dim::FY: return "fy";
        case Dim::FX: return "fx";
    }
    return "?";
}

int64_t LoopSchedule::accum_bound(Dim d) const {
    int64_t b = 1;
    for (const auto& l : accum)
        if (l.dim == d) b *= l.bound;
    return b;
}

int64_t LoopSchedule::l2_bound(Dim d) const {
    int64_t b = 1;
    for (const auto& l : l2)
        if (l.dim == d) b *= l.bound;
    return b;
}

int64_t LoopSchedule::l2_trip_count() const {
    int64_t b = 1;
    for (const auto& l : l2) b *= l.bound;
    return b;
}

int64_t LoopSchedule::covered(Dim d) const {
    int64_t c = accum_bound(d) * l2_bound(d);
    if (d == Dim::IC) c *= par_rows;
    if (d == Dim::OC) c *= par_cols;
    return c;
}

std::string LoopSchedule::to_string() const {
    std::ostringstream os;
    os << "# L2 level\n";
    int indent = 0;
    for (const auto& l : l2) {
        for (int i = 0; i < indent; ++i) os << ' ';
        os << "for " << dim_name(l.dim) << (l.dim == Dim::IC ? "2" : "1") << " in range("
           << l.bound << "):\n";
        ++indent;
    }
    for (int i = 0; i < indent; ++i) os << ' ';
    os << "# accumulation buffer level\n";
    for (const auto& l : accum) {
        for (int i = 0; i < indent; ++i) os << ' ';
        const char* suffix = (l.dim == Dim::FY || l.dim == Dim::FX) ? "" : "0";
        const char* s1 = (l.dim == Dim::IC || l.dim == Dim::OC) ? "1" : suffix;
        os << "for " << dim_name(l.dim) << s1 << " in range(" << l.bound << "):\n";
        ++indent;
    }
    for (int i = 0; i < indent; ++i) os << ' ';
    os << "# systolic array level\n";
    for (int i = 0; i < indent; ++i) os << ' ';
    os << "parallel_for ic0 in range(" << par_rows << "):\n";
    for (int i = 0; i < indent; ++i) os << ' ';
    os << "parallel_for oc0 in range(" << par_cols << "):\n";
    return os.str();
}

Objective parse_objective(const std::string& s) {
    if (s == "energy") return Objective::EnergyOnly;
    if (s == "coarse") return Objective::CoarsePerf;
    if (s == "fine") return Objective::FinePerf;
    throw std::invalid_argument("unknown objective: " + s);
}

namespace {

int64_t ceil_div(int64_t a, int64_t b) { return (a + b - 1) / b; }

std::vector<int64_t> divisors(int64_t n) {
    std::vector<int64_t> out;
    for (int64_t d = 1; d * d <= n; ++d) {
        if (n % d == 0) {
            out.push_back(d);
            if (d != n / d) out.push_back(n / d);
        }
    }
    std::sort(out.begin(), out.end());
    return out;
}

struct Geometry {
    BlockDims d;
    bool flatten = false;
    int64_t k_eff = 1;     // flattened reduction extent
    int64_t ic0 = 1, oc0 = 1;
    int xstream = 1;
    int64_t in_elem_bytes = 1, w_elem_bytes = 1, out_elem_bytes = 1, psum_bytes = 4;
};

Geometry geometry(const IRBlock& block, const ModelGraph& g, const AcceleratorConfig& cfg) {
    Geometry geo;
    geo.d = ir::block_dims(block, g);
    const auto& d = geo.d;
    geo.flatten = d.is_conv && d.ic < cfg.rows && d.fy * d.fx > 1;
    geo.k_eff = d.ic * d.fy * d.fx;
    geo.ic0 = geo.flatten ? std::min<int64_t>(cfg.rows, geo.k_eff)
                          : std::min<int64_t>(cfg.rows, d.ic);
    geo.oc0 = std::min<int64_t>(cfg.cols, d.oc);
    // overlapped windows force input streaming at stride granularity along x
    geo.xstream = (geo.flatten && d.fx > d.stride_x && d.stride_x > 1) ? d.stride_x : 1;
    geo.in_elem_bytes = g.tensor(block.inputs.at(0)).dtype.storage_bytes();
    geo.w_elem_bytes = g.tensor(block.weight).dtype.storage_bytes();
    geo.out_elem_bytes = g.tensor(block.output).dtype.storage_bytes();
    auto psum_fmt = block.psum_dtype ? *block.psum_dtype : cfg.mac.psum_format;
    geo.psum_bytes = psum_fmt.storage_bytes();
    return geo;
}

struct TileShape {
    int64_t oy0, ox0, ic1, oc1;  // accum-level bounds (ic1 = reduction tiles)
    int64_t n_oy, n_ox, n_ic, n_oc;  // L2 trip counts
    int64_t t_ic_elems;              // reduction elements resident in L1
};

TileFootprint footprint(const Geometry& geo, const TileShape& t) {
    const auto& d = geo.d;
    TileFootprint f;
    int64_t in_y = d.is_conv ? ((t.oy0 - 1) * d.stride_y + d.fy) : t.oy0;
    int64_t in_x = d.is_conv ? ((t.ox0 - 1) * d.stride_x + d.fx) : t.ox0;
    int64_t ic_resident = geo.flatten ? d.ic : std::min<int64_t>(t.t_ic_elems, d.ic);
    f.input_bytes = in_y * in_x * ic_resident * geo.in_elem_bytes;
    int64_t t_oc = t.oc1 * geo.oc0;
    int64_t k_tile = geo.flatten ? geo.k_eff : t.t_ic_elems * d.fy * d.fx;
    f.weight_bytes = k_tile * t_oc * geo.w_elem_bytes;
    f.psum_bytes = t.oy0 * t.ox0 * t_oc * geo.psum_bytes;
    return f;
}

bool fits(const Geometry& geo, const TileShape& t, const AcceleratorConfig& cfg) {
    TileFootprint f = footprint(geo, t);
    int64_t accum_cap = cfg.double_buffered_accum ? cfg.accum_buffer_bytes / 2
                                                  : cfg.accum_buffer_bytes;
    return f.input_bytes <= cfg.input_buffer_bytes / 2 &&
           f.weight_bytes <= cfg.weight_buffer_bytes / 2 && f.psum_bytes <= accum_cap;
}

LoopSchedule make_schedule(const Geometry& geo, const TileShape& t,
                           const std::vector<Dim>& l2_order) {
    LoopSchedule s;
    s.par_rows = geo.ic0;
    s.par_cols = geo.oc0;
    s.flatten_reduction = geo.flatten;
    for (Dim dm : l2_order) {
        int64_t b = dm == Dim::OY ? t.n_oy : dm == Dim::OX ? t.n_ox : t.n_oc;
        s.l2.push_back({dm, b});
    }
    if (t.n_ic > 1) s.l2.push_back({Dim::IC, t.n_ic});
    s.accum = {{Dim::IC, t.ic1},
               {Dim::OC, t.oc1},
               {Dim::FX, geo.flatten ? 1 : geo.d.fx},
               {Dim::FY, geo.flatten ? 1 : geo.d.fy},
               {Dim::OY, t.oy0},
               {Dim::OX, t.ox0}};
    return s;
}

// recover the tile shape of a schedule (shared by cost models)
TileShape shape_of(const Geometry& geo, const LoopSchedule& s) {
    TileShape t;
    t.oy0 = s.accum_bound(Dim::OY);
    t.ox0 = s.accum_bound(Dim::OX);
    t.ic1 = s.accum_bound(Dim::IC);
    t.oc1 = s.accum_bound(Dim::OC);
    t.n_oy = s.l2_bound(Dim::OY);
    t.n_ox = s.l2_bound(Dim::OX);
    t.n_ic = s.l2_bound(Dim::IC);
    t.n_oc = s.l2_bound(Dim::OC);
    t.t_ic_elems = geo.flatten ? geo.d.ic : t.ic1 * geo.ic0;
    return t;
}

}  // namespace

TileFootprint tile_footprint(const LoopSchedule& s, const BlockDims&, const IRBlock& block,
                             const ModelGraph& g, const AcceleratorConfig& cfg) {
    Geometry geo = geometry(block, g, cfg);
    return footprint(geo, shape_of(geo, s));
}

bool feasible(const LoopSchedule& s, const BlockDims&, const IRBlock& block,
              const ModelGraph& g, const AcceleratorConfig& cfg) {
    Geometry geo = geometry(block, g, cfg);
    TileShape t = shape_of(geo, s);
    if (!fits(geo, t, cfg)) return false;
    if (s.par_rows > cfg.rows || s.par_cols > cfg.cols) return false;
    // coverage: tiles times trips spans each (padded) extent
    const auto& d = geo.d;
    if (s.covered(Dim::OY) < d.oy || s.covered(Dim::OX) < d.ox) return false;
    if (s.covered(Dim::OC) < d.oc) return false;
    int64_t red_cov = s.flatten_reduction
                          ? s.accum_bound(Dim::IC) * s.par_rows
                          : s.covered(Dim::IC) * s.accum_bound(Dim::FY) * s.accum_bound(Dim::FX);
    int64_t red_need = s.flatten_reduction ? geo.k_eff : d.ic * d.fy * d.fx;
    return red_cov >= red_need;
}

std::vector<LoopSchedule> enumerate_schedules(const IRBlock& block, const ModelGraph& g,
                                              const AcceleratorConfig& cfg) {
    if (block.category != ir::BlockCategory::MatrixOp || block.kind == ir::OpKind::DwConv2d)
        throw InfeasibleError("enumerate_schedules: not a systolic matrix block: " + block.name);
    Geometry geo = geometry(block, g, cfg);
    const auto& d = geo.d;

    std::vector<int64_t> oy_tiles = divisors(d.oy);
    std::vector<int64_t> ox_tiles = divisors(d.ox);
    int64_t noc_groups = ceil_div(d.oc, geo.oc0);
    std::vector<int64_t> oc_groups = divisors(noc_groups);
    std::vector<int64_t> ic_groups;
    if (geo.flatten) {
        ic_groups = {ceil_div(geo.k_eff, geo.ic0)};  // whole reduction resident
    } else {
        ic_groups = divisors(ceil_div(d.ic, geo.ic0));
    }

    std::vector<LoopSchedule> out;
    for (int64_t oy0 : oy_tiles) {
        for (int64_t ox0 : ox_tiles) {
            for (int64_t doc : oc_groups) {
                for (int64_t dic : ic_groups) {
                    TileShape t;
                    t.oy0 = oy0;
                    t.ox0 = ox0;
                    t.oc1 = doc;
                    t.ic1 = dic;
                    t.n_oy = d.oy / oy0;
                    t.n_ox = d.ox / ox0;
                    t.n_oc = noc_groups / doc;
                    t.n_ic = geo.flatten ? 1 : ceil_div(d.ic, geo.ic0) / dic;
                    t.t_ic_elems = geo.flatten ? d.ic : dic * geo.ic0;
                    if (!fits(geo, t, cfg)) continue;
                    // permutations of the multi-trip spatial/output loops
                    std::vector<Dim> dims;
                    for (Dim dm : {Dim::OY, Dim::OX, Dim::OC}) {
                        int64_t trips = dm == Dim::OY ? t.n_oy : dm == Dim::OX ? t.n_ox : t.n_oc;
                        if (trips > 1) dims.push_back(dm);
                    }
                    std::sort(dims.begin(), dims.end());
                    std::vector<std::vector<Dim>> orders;
                    if (dims.empty()) {
                        orders.push_back({});
                    } else {
                        std::vector<Dim> p = dims;
                        do {
                            orders.push_back(p);
                        } while (std::next_permutation(p.begin(), p.end()));
                    }
                    for (const auto& ord : orders) out.push_back(make_schedule(geo, t, ord));
                }
            }
        }
    }
    if (out.empty())
        throw InfeasibleError("no feasible schedule for block '" + block.name +
                              "': minimum tile exceeds buffer capacity");
    return out;
}

namespace {

// walk the L2 loop nest once, invoking fn per iteration with tile-change flags
struct IterInfo {
    bool input_changed, weight_changed, output_new, output_done;
};

template <typename Fn>
void walk_l2(const LoopSchedule& s, Fn&& fn) {
    const auto& loops = s.l2;
    size_t n = loops.size();
    std::vector<int64_t> idx(n, 0);
    // tile ids
    int64_t prev_in = -1, prev_w = -1;
    auto dim_index = [&](Dim d) {
        int64_t v = 0;
        for (size_t i = 0; i < n; ++i) {
            if (loops[i].dim == d) v = v * loops[i].bound + idx[i];
        }
        return v;
    };
    int64_t total = 1;
    for (const auto& l : loops) total *= l.bound;
    int64_t n_ic = s.l2_bound(Dim::IC);
    for (int64_t it = 0; it < total; ++it) {
        int64_t iy = dim_index(Dim::OY), ix = dim_index(Dim::OX), ioc = dim_index(Dim::OC),
                iic = dim_index(Dim::IC);
        int64_t n_ox = s.l2_bound(Dim::OX), n_oc = s.l2_bound(Dim::OC);
        int64_t in_id = (iy * n_ox + ix) * s.l2_bound(Dim::IC) + iic;
        int64_t w_id = ioc * s.l2_bound(Dim::IC) + iic;
        IterInfo info;
        info.input_changed = in_id != prev_in;
        info.weight_changed = w_id != prev_w;
        info.output_new = iic == 0;
        info.output_done = iic == n_ic - 1;
        (void)n_oc;
        fn(info);
        prev_in = in_id;
        prev_w = w_id;
        // odometer
        for (int i = (int)n - 1; i >= 0; --i) {
            if (++idx[(size_t)i] < loops[(size_t)i].bound) break;
            idx[(size_t)i] = 0;
        }
    }
}

struct PassCosts {
    int64_t passes;        // systolic weight-tile passes per L1 tile
    int64_t per_pass;      // cycles per pass including the shift-in floor
    int64_t macs_per_tile; // MAC iterations per L1 tile (padded lanes)
};

PassCosts pass_costs(const Geometry& geo, const TileShape& t, const AcceleratorConfig& cfg,
                     const CostTables& tables) {
    PassCosts p;
    int64_t red_tiles = geo.flatten ? ceil_div(geo.k_eff, geo.ic0)
                                    : t.ic1 * geo.d.fy * geo.d.fx;
    p.passes = red_tiles * t.oc1;
    int64_t m_tile = t.oy0 * t.ox0;
    int64_t stream = m_tile * geo.xstream * tables.mac_issue_rate;
    p.per_pass = std::max<int64_t>(stream, cfg.rows);
    p.macs_per_tile = p.passes * m_tile;
    return p;
}

}  // namespace

int extra_vector_streams(const IRBlock& block, const ModelGraph&) {
    int n = 0;
    for (const auto& p : block.post_ops) {
        // scale handles ride with the instruction; real tensor operands
        // stream from memory through the vector unit's address generators
        if (p.kind == ir::OpKind::Dequantize || p.kind == ir::OpKind::Quantize) continue;
        n += (int)p.operands.size();
    }
    return n;
}

AccessCounts count_accesses(const LoopSchedule& s, const IRBlock& block, const ModelGraph& g,
                            const AcceleratorConfig& cfg) {
    Geometry geo = geometry(block, g, cfg);
    TileShape t = shape_of(geo, s);
    TileFootprint f = footprint(geo, t);
    AccessCounts a;
    int64_t out_tile_elems = t.oy0 * t.ox0 * t.oc1 * geo.oc0;
    int64_t bias_tile = block.bias.empty()
                            ? 0
                            : t.oc1 * geo.oc0 * g.tensor(block.bias).dtype.storage_bytes();
    walk_l2(s, [&](const IterInfo& i) {
        if (i.input_changed) a.main_input_bytes += f.input_bytes;
        if (i.weight_changed) a.main_weight_bytes += f.weight_bytes;
        if (i.output_new) a.main_bias_bytes += bias_tile;
        if (i.output_done) a.main_output_bytes += out_tile_elems * geo.out_elem_bytes;
    });
    CostTables default_tables;
    PassCosts p = pass_costs(geo, t, cfg, default_tables);
    int64_t l2_trips = s.l2_trip_count();
    int64_t m_tile = t.oy0 * t.ox0;
    a.l1_input_reads = l2_trips * p.passes * m_tile * s.par_rows;
    a.l1_weight_loads = l2_trips * p.passes * s.par_rows * s.par_cols;
    a.accum_accesses = l2_trips * p.passes * m_tile * s.par_cols * 2 -
                       t.n_oy * t.n_ox * t.n_oc * out_tile_elems;
    a.macs = l2_trips * p.passes * m_tile * s.par_rows * s.par_cols;
    a.reg_reads = a.macs;
    return a;
}

double energy_cost(const LoopSchedule& s, const IRBlock& block, const ModelGraph& g,
                   const AcceleratorConfig& cfg, const CostTables& tables) {
    AccessCounts a = count_accesses(s, block, g, cfg);
    return (double)a.main_total_bytes() * tables.main_memory +
           (double)a.l1_input_reads * tables.l1_input +
           (double)a.l1_weight_loads * tables.l1_weight +
           (double)a.accum_accesses * tables.accum + (double)a.reg_reads * tables.reg +
           (double)a.macs * tables.mac;
}

int64_t runtime_model(const LoopSchedule& s, const IRBlock& block, const ModelGraph& g,
                      const AcceleratorConfig& cfg, const CostTables& tables) {
    Geometry geo = geometry(block, g, cfg);
    TileShape t = shape_of(geo, s);
    TileFootprint f = footprint(geo, t);
    PassCosts p = pass_costs(geo, t, cfg, tables);
    int64_t compute = p.passes * p.per_pass;
    int64_t out_tile_elems = t.oy0 * t.ox0 * t.oc1 * geo.oc0;
    int64_t out_tile_bytes = out_tile_elems * geo.out_elem_bytes;
    int extra = extra_vector_streams(block, g);
    bool serial_drain = !cfg.double_buffered_accum && extra > 0;
    int64_t drain = ceil_div(out_tile_elems, cfg.vector_width);

    int64_t total = 0;
    walk_l2(s, [&](const IterInfo& i) {
        int64_t mem = 0;
        if (i.input_changed) mem += f.input_bytes;
        if (i.weight_changed) mem += f.weight_bytes;
        if (i.output_done) mem += out_tile_bytes;
        int64_t mem_cycles = ceil_div(mem, cfg.bandwidth_bytes_per_cycle);
        int64_t iter = std::max(compute, mem_cycles);
        if (i.output_done) {
            if (serial_drain)
                iter += drain;
            else if (!cfg.double_buffered_accum)
                iter = std::max(iter, drain);
        }
        total += iter;
    });
    return total;
}

int64_t runtime_model_coarse(const LoopSchedule& s, const IRBlock& block, const ModelGraph& g,
                             const AcceleratorConfig& cfg, const CostTables&) {
    Geometry geo = geometry(block, g, cfg);
    TileShape t = shape_of(geo, s);
    TileFootprint f = footprint(geo, t);
    int64_t m_tile = t.oy0 * t.ox0;
    int64_t red_tiles = geo.flatten ? ceil_div(geo.k_eff, geo.ic0)
                                    : t.ic1 * geo.d.fy * geo.d.fx;
    // ideal compute: no weight-load floor, no stride streaming
    int64_t compute = red_tiles * t.oc1 * m_tile;
    int64_t out_tile_bytes = m_tile * t.oc1 * geo.oc0 * geo.out_elem_bytes;
    int64_t total = 0;
    walk_l2(s, [&](const IterInfo& i) {
        int64_t mem = 0;
        if (i.input_changed) mem += f.input_bytes;
        if (i.weight_changed) mem += f.weight_bytes;
        if (i.output_done) mem += out_tile_bytes;
        total += std::max(compute, ceil_div(mem, cfg.bandwidth_bytes_per_cycle));
    });
    return total;
}

LoopSchedule select_schedule(const IRBlock& block, const ModelGraph& g,
                             const AcceleratorConfig& cfg, const CostTables& tables,
                             Objective objective) {
    auto candidates = enumerate_schedules(block, g, cfg);
    auto order_key = [](const LoopSchedule& s) {
        std::string k;
        for (const auto& l : s.l2) {
            k += dim_name(l.dim);
            k += std::to_string(l.bound);
            k += '.';
        }
        for (const auto& l : s.accum) k += std::to_string(l.bound) + '.';
        return k;
    };
    const LoopSchedule* best = nullptr;
    double best_cost = 0;
    int64_t best_trips = 0;
    std::string best_key;
    for (const auto& c : candidates) {
        double cost = 0;
        switch (objective) {
            case Objective::EnergyOnly: cost = energy_cost(c, block, g, cfg, tables); break;
            case Objective::CoarsePerf:
                cost = (double)runtime_model_coarse(c, block, g, cfg, tables);
                break;
            case Objective::FinePerf:
                cost = (double)runtime_model(c, block, g, cfg, tables);
                break;
        }
        int64_t trips = c.l2_trip_count();
        std::string key = order_key(c);
        bool better = false;
        if (!best) {
            better = true;
        } else if (cost < best_cost) {
            better = true;
        } else if (cost == best_cost) {
            if (trips < best_trips) better = true;
            else if (trips == best_trips && key < best_key) better = true;
        }
        if (better) {
            best = &c;
            best_cost = cost;
            best_trips = trips;
            best_key = key;
        }
    }
    return *best;
}

CostTables CostTables::from_toml_text(const std::string& text) {
    CostTables t;
    std::istringstream is(text);
    std::string line;
    while (std::getline(is, line)) {
        auto hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        auto eq = line.find('=');
        if (eq == std::string::npos) continue;
        auto trim = [](std::string s) {
            size_t b = s.find_first_not_of(" \t\r");
            size_t e = s.find_last_not_of(" \t\r");
            return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
        };
        std::string key = trim(line.substr(0, eq));
        std::string val = trim(line.substr(eq + 1));
        if (key.empty() || val.empty()) continue;
        double v = std::stod(val);
        if (key == "main_memory") t.main_memory = v;
        else if (key == "l1_input") t.l1_input = v;
        else if (key == "l1_weight") t.l1_weight = v;
        else if (key == "accum") t.accum = v;
        else if (key == "reg") t.reg = v;
        else if (key == "mac") t.mac = v;
        else if (key == "mac_issue_rate") t.mac_issue_rate = (int)v;
    }
    return t;
}

}  // namespace meridian::sched
