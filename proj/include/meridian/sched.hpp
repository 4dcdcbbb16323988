#pragma once

#include <stdexcept>
#include <string>
#include <vector>

#include "meridian/config.hpp"
#include "meridian/ir.hpp"

namespace meridian::sched {

enum class Dim : uint8_t { OY, OX, OC, IC, FY, FX };
const char* dim_name(Dim d);

struct Loop {
    Dim dim;
    int64_t bound;
    bool operator==(const Loop&) const = default;
};

// Two-level tiled loop nest: L2 loops stream tiles from main memory, the
// accumulation-buffer level walks one tile, and ic0/oc0 are the parallel
// systolic dims. The accum level keeps the canonical order
// (ic1, oc1, fy, fx, oy0, ox0).
struct LoopSchedule {
    std::vector<Loop> l2;     // outer to inner; a reduction loop sits innermost
    std::vector<Loop> accum;  // canonical order
    int64_t par_rows = 16;    // ic0 (taps per row group when flattened)
    int64_t par_cols = 16;    // oc0
    bool flatten_reduction = false;  // rows hold flattened (ic,fy,fx) taps

    int64_t accum_bound(Dim d) const;
    int64_t l2_bound(Dim d) const;
    int64_t l2_trip_count() const;
    // full extent covered: accum_bound * l2_bound (* parallel for IC/OC)
    int64_t covered(Dim d) const;
    std::string to_string() const;  // human-readable nested loops
};

// Per-access energy weights (relative units) and memory timing.
struct CostTables {
    double main_memory = 200.0;
    double l1_input = 6.0;
    double l1_weight = 6.0;
    double accum = 2.0;
    double reg = 1.0;
    double mac = 0.5;
    int mac_issue_rate = 1;  // output iterations per cycle at steady state

    static CostTables from_toml_text(const std::string& text);
};

class InfeasibleError : public std::runtime_error {
  public:
    explicit InfeasibleError(const std::string& m) : std::runtime_error(m) {}
};

// All tile footprints of a schedule, in bytes.
struct TileFootprint {
    int64_t input_bytes = 0;
    int64_t weight_bytes = 0;
    int64_t psum_bytes = 0;
};
TileFootprint tile_footprint(const LoopSchedule& s, const ir::BlockDims& d,
                             const ir::IRBlock& block, const ir::ModelGraph& g,
                             const AcceleratorConfig& cfg);

bool feasible(const LoopSchedule& s, const ir::BlockDims& d, const ir::IRBlock& block,
              const ir::ModelGraph& g, const AcceleratorConfig& cfg);

// Legal schedule enumeration: tile sizes drawn from divisors of the padded
// extents, L2 orders permuted, reduction split kept innermost. Throws
// InfeasibleError when even the minimum tile overflows a buffer.
std::vector<LoopSchedule> enumerate_schedules(const ir::IRBlock& block, const ir::ModelGraph& g,
                                              const AcceleratorConfig& cfg);

// Per-level access counts (element granularity) derived from loop reuse.
struct AccessCounts {
    int64_t main_input_bytes = 0;
    int64_t main_weight_bytes = 0;
    int64_t main_output_bytes = 0;
    int64_t main_bias_bytes = 0;
    int64_t l1_input_reads = 0;
    int64_t l1_weight_loads = 0;
    int64_t accum_accesses = 0;
    int64_t reg_reads = 0;
    int64_t macs = 0;
    int64_t main_total_bytes() const {
        return main_input_bytes + main_weight_bytes + main_output_bytes + main_bias_bytes;
    }
};
AccessCounts count_accesses(const LoopSchedule& s, const ir::IRBlock& block,
                            const ir::ModelGraph& g, const AcceleratorConfig& cfg);

double energy_cost(const LoopSchedule& s, const ir::IRBlock& block, const ir::ModelGraph& g,
                   const AcceleratorConfig& cfg, const CostTables& tables);

// Fine-grained runtime: per L2 iteration, max of systolic compute (with the
// weight shift-in floor), tile fetch time, and, without a double-buffered
// accumulation buffer, the vector-unit drain for completed output tiles.
int64_t runtime_model(const LoopSchedule& s, const ir::IRBlock& block, const ir::ModelGraph& g,
                      const AcceleratorConfig& cfg, const CostTables& tables);

// Coarse model: ideal tile compute vs memory time only.
int64_t runtime_model_coarse(const LoopSchedule& s, const ir::IRBlock& block,
                             const ir::ModelGraph& g, const AcceleratorConfig& cfg,
                             const CostTables& tables);

enum class Objective : uint8_t { EnergyOnly, CoarsePerf, FinePerf };
Objective parse_objective(const std::string& s);

// Deterministic argmin over the candidate stream; ties break toward fewer
// L2 tiles, then the lexicographically smaller loop structure.
LoopSchedule select_schedule(const ir::IRBlock& block, const ir::ModelGraph& g,
                             const AcceleratorConfig& cfg, const CostTables& tables,
                             Objective objective);

// Extra memory streams a post-op chain pulls through the vector unit
// (residual operands and similar full-size tensor reads).
int extra_vector_streams(const ir::IRBlock& block, const ir::ModelGraph& g);

}  // namespace meridian::sched
