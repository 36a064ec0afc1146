#pragma once

#include <any>
#include <array>
#include <filesystem>
#include <functional>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <variant>
#include <vector>

#include "fspm_bridge/exchange_graph.hpp"
#include "fspm_bridge/geometry.hpp"

namespace fspm_bridge {

using Warnings = std::vector<std::string>;

// ---------------------------------------------------------------------------
// Export: source model state -> exchange graph, in a single walk.

struct ExportOptions {
  /// Emit global transforms directly instead of local ones.
  bool global = false;
};

/// Opaque state of a source model, tagged with the model kind used to pick
/// the export adapter.
struct ModelState {
  std::string kind;
  std::any state;
};

using ExportAdapter = std::function<ExchangeGraph(const std::any& state, const ExportOptions&)>;

class ExporterRegistry {
 public:
  void add(std::string kind, ExportAdapter adapter);
  const ExportAdapter* find(std::string_view kind) const;

 private:
  std::map<std::string, ExportAdapter, std::less<>> adapters_;
};

/// Throws NoAdapter; any adapter failure or invalid adapter output becomes
/// AdapterFailure with the model kind in the message.
ExchangeGraph export_to_eg(const ModelState& source, const ExporterRegistry& registry,
                           const ExportOptions& options = {});

// ---------------------------------------------------------------------------
// Edge vocabularies

enum class MapDirection { in, out };

/// Foreign edge-type name -> canonical edge type. Injective, so the export
/// direction is well defined.
class EdgeTypeMap {
 public:
  /// Throws SchemaError on a duplicate name, a foreign target, or a
  /// canonical type that is already the image of another name.
  void add(std::string name, EdgeType canonical);

  std::optional<EdgeType> forward(std::string_view name) const;
  std::optional<std::string> inverse(const EdgeType& canonical) const;
  const std::map<std::string, EdgeType, std::less<>>& pairs() const noexcept { return pairs_; }

 private:
  std::map<std::string, EdgeType, std::less<>> pairs_;
};

/// in: foreign tags are rewritten to canonical ones (canonical tags without
/// an entry pass through). out: canonical tags with an entry are rewritten to
/// their foreign name. Throws UnmappedEdgeType naming the tag, and
/// SemanticError if the rewritten graph breaks a structural invariant.
ExchangeGraph map_edge_types(const ExchangeGraph& graph, const EdgeTypeMap& map, MapDirection direction);

// ---------------------------------------------------------------------------
// Environment units

enum class ConvertDirection { forward, inverse };

/// target = cast<target_type>(a * source + b). Numeric tags only; a != 0.
struct UnitRule {
  std::string field;
  PropertyType source_type = PropertyType::float64;
  PropertyType target_type = PropertyType::float64;
  double a = 1.0;
  double b = 0.0;
};

/// Throws SchemaError for non-numeric tags or a == 0.
void check_unit_rule(const UnitRule& rule);

/// Fields without a rule pass through; rules whose field is absent are
/// skipped with a warning. Throws TypeMismatch.
EnvMap convert_env(const EnvMap& env, std::span<const UnitRule> rules, ConvertDirection direction,
                   Warnings* warnings = nullptr);

// ---------------------------------------------------------------------------
// Scale systems

/// A number in a template: a literal or a reference ("@name") to a numeric
/// property of the composite node.
using TemplateNumber = std::variant<double, std::string>;

struct TemplateStep {
  enum class Kind { translation, rotation, scaling };
  Kind kind = Kind::translation;
  std::array<TemplateNumber, 3> vec{0.0, 0.0, 0.0};  // offset, axis or factors
  TemplateNumber angle_deg = 0.0;                    // rotation only
};

struct PartTemplate {
  std::string part_name;
  std::string target_type;
  /// Placement of the part in the composite's frame, first step first.
  std::vector<TemplateStep> transform;
  /// composite field -> part field.
  std::vector<std::pair<std::string, std::string>> forward;
  /// Fixed fields set on every instance of the part.
  PropertyMap constants;
};

struct IntraEdge {
  std::size_t from = 0;
  std::size_t to = 0;
  EdgeType etype;
};

/// A successor/branch edge between two composites is mirrored at the fine
/// scale from part `from_part` of the source to part `to_part` of the
/// target. A rule without an edge type applies to both kinds.
struct InterRule {
  std::optional<EdgeType> etype;
  std::size_t from_part = 0;
  std::size_t to_part = 0;
};

struct DecompositionScheme {
  std::string composite_type;
  std::vector<PartTemplate> parts;
  std::vector<IntraEdge> intra_edges;
  std::vector<InterRule> inter_rules;
};

/// Throws TemplateArity when part indices are out of range, an attachment
/// head has an incoming intra edge, or the scheme has no parts.
void check_scheme(const DecompositionScheme& scheme);

/// Adds a finer scale below every composite of scheme.composite_type. The
/// coarse scale is kept. Graphs without composites come back unchanged
/// with a warning. Throws UnknownCompositeType (empty composite type),
/// TemplateArity (missing forwarded or referenced field),
/// SingularParentTransform.
ExchangeGraph decompose_scale(const ExchangeGraph& graph, const DecompositionScheme& scheme,
                              Warnings* warnings = nullptr);

enum class AggregateOp { sum, mean, min, max, first, logical_and, logical_or };

std::string_view aggregate_op_name(AggregateOp op) noexcept;
std::optional<AggregateOp> parse_aggregate_op(std::string_view name) noexcept;

struct UpscaleField {
  std::string name;
  AggregateOp op = AggregateOp::first;
  /// Composite field written; defaults to `name`.
  std::string into;
};

struct UpscaleSpec {
  std::vector<UpscaleField> fields;
};

/// Aggregates the listed fields of each composite's decomposition children
/// onto the composite (children in canonical order), then removes the fine
/// scale. Unlisted fine-scale fields are dropped with a warning. Throws
/// MissingFineScale, OperatorTypeMismatch.
ExchangeGraph upscale_properties(const ExchangeGraph& graph, const DecompositionScheme& scheme,
                                 const UpscaleSpec& spec, Warnings* warnings = nullptr);

/// Aggregate one field's values. Throws OperatorTypeMismatch.
PropertyValue aggregate(AggregateOp op, std::span<const PropertyValue> values);

// ---------------------------------------------------------------------------
// Staged pipelines

struct MapEdgeTypesStage {
  EdgeTypeMap map;
  MapDirection direction = MapDirection::in;
};
struct GlobalizeStage {};
struct LocalizeStage {};
struct TranslateGeometryStage {
  Dictionary dictionary;
  std::map<std::string, std::string> forms;
};
struct ConvertEnvStage {
  std::vector<UnitRule> rules;
  ConvertDirection direction = ConvertDirection::forward;
};
struct DecomposeScaleStage {
  DecompositionScheme scheme;
};
struct UpscalePropertiesStage {
  DecompositionScheme scheme;
  UpscaleSpec spec;
};

using Stage = std::variant<MapEdgeTypesStage, GlobalizeStage, LocalizeStage, TranslateGeometryStage,
                           ConvertEnvStage, DecomposeScaleStage, UpscalePropertiesStage>;

std::string_view stage_name(const Stage& stage) noexcept;

struct PipelineConfig {
  std::string direction;  // informational: "import", "export", ...
  std::vector<Stage> stages;
};

struct StageLog {
  std::string stage;
  double millis = 0.0;
  Warnings warnings;
};

struct PipelineResult {
  ExchangeGraph graph;
  EnvMap env;
  std::vector<StageLog> log;
};

/// Applies the stages in order. The first failing stage aborts the run; the
/// error keeps its code and gains the stage's name and position.
PipelineResult run_pipeline(const ExchangeGraph& graph, const PipelineConfig& config,
                            const EnvMap& env = {});

// Configuration files. Paths inside a file are relative to that file.
DecompositionScheme parse_scheme(std::string_view text);
DecompositionScheme load_scheme(const std::filesystem::path& path);
Dictionary load_dictionary(const std::filesystem::path& path);
PipelineConfig parse_pipeline(std::string_view text, const std::filesystem::path& base_dir);
PipelineConfig load_pipeline(const std::filesystem::path& path);

}  // namespace fspm_bridge
