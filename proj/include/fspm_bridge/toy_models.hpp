#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "fspm_bridge/pipeline.hpp"
#include "fspm_bridge/session.hpp"

// Two small deterministic plant models that exercise the whole bridge. The
// formulas are synthetic: they only have to be deterministic and produce
// branching, multiscale structure with all three geometry types.
namespace fspm_bridge {

inline constexpr std::string_view kGrowthModelKind = "toy_growth";

struct MetamerRecord {
  std::int64_t index = 0;  // creation order
  /// Index of the metamer this one grows from; -1 for the first metamer.
  std::int64_t parent = -1;
  bool on_branch = false;  // attached to its parent by a branch edge
  double internode_length = 0.0;
  double internode_radius = 0.0;
  double petiole_length = 0.0;
  double petiole_radius = 0.0;
  double leaf_scale_x = 0.0;
  double leaf_scale_y = 0.0;
  std::string color = "brown";
  double water_content = 0.0;
  /// Fields added by target models and installed back.
  PropertyMap extra;
};

struct GrowthState {
  std::uint64_t seed = 0;
  std::uint64_t step = 0;
  std::vector<MetamerRecord> metamers;
  /// Last metamer of the main shoot; -1 before the first step.
  std::int64_t main_tip = -1;
};

/// Appends one metamer to the main shoot. The third, sixth, ... main-shoot
/// metamer also carries a one-metamer branch. For creation index n:
///   internode_length = 0.2 * 0.95^n * (1 + j1),  internode_radius = 0.01 * 0.97^n
///   petiole_length   = 0.05 * 0.95^n,            petiole_radius   = 0.003
///   leaf_scale_x     = 0.08 * (1 + j2),           leaf_scale_y     = 0.05 * (1 + j2)
/// where j1, j2 in [-0.05, 0.05) are derived from (seed, n).
GrowthState growth_step(const GrowthState& state);
GrowthState grow(std::uint64_t seed, std::uint64_t steps);

/// Scale-0 "plant" root (id 1) and one scale-1 Metamer node per record (id
/// index + 2), chained by successor/branch edges. Each metamer is rotated
/// 137.5 degrees about z (plus 45 degrees about x on a branch) and lifted by
/// its parent's internode length. With `global` the global frames are
/// computed in the same walk.
ExchangeGraph growth_export(const GrowthState& state, bool global = false);

/// Copies metamer fields from a coarse-scale graph back into the state,
/// matched by the "index" field. Unknown fields land in `extra`. Throws
/// SemanticError when the graph's metamers do not match the state's.
void growth_install(GrowthState& state, const ExchangeGraph& graph);

void register_growth_exporter(ExporterRegistry& registry);

class GrowthModel : public SourceModel {
 public:
  explicit GrowthModel(std::uint64_t seed) { state_.seed = seed; }

  void advance() override { state_ = growth_step(state_); }
  ModelState state() const override { return {std::string(kGrowthModelKind), state_}; }
  void install(const ExchangeGraph& graph) override { growth_install(state_, graph); }

  const GrowthState& growth_state() const noexcept { return state_; }

 private:
  GrowthState state_;
};

struct WaterParams {
  double base_pressure = 100.0;
  double loss_per_node = 10.0;
};

/// Depth of a fine-scale node: successor/branch edges walked up while the
/// parent stays on the same scale.
std::uint64_t fine_depth(const ExchangeGraph& graph, NodeId id);

/// Every node named "internode" above scale 0 gets pressure = base - loss *
/// depth and color "green". Throws MissingFineScale when there is none.
ExchangeGraph water_handler(const ExchangeGraph& graph, const EnvMap& env, const WaterParams& params);

/// "ok: N nodes, M edges, step env T", T being the temperature variable or "-".
std::string status_handler(const ExchangeGraph& graph, const EnvMap& env);

TargetModel water_model(WaterParams params);
TargetModel status_model();

}  // namespace fspm_bridge
