#include "fspm_bridge/toy_models.hpp"

#include <any>
#include <cmath>
#include <random>

namespace fspm_bridge {

namespace {

/// Deterministic value in [-0.05, 0.05) for (seed, n, stream).
double jitter(std::uint64_t seed, std::uint64_t n, std::uint64_t stream) {
  std::mt19937_64 rng(seed ^ (n * 0x9E3779B97F4A7C15ULL) ^ (stream << 56));
  double u = static_cast<double>(rng() >> 11) * 0x1p-53;
  return (u - 0.5) * 0.1;
}

MetamerRecord make_metamer(std::uint64_t seed, std::int64_t index, std::int64_t parent, bool on_branch) {
  auto n = static_cast<std::uint64_t>(index);
  double fn = static_cast<double>(index);
  MetamerRecord m;
  m.index = index;
  m.parent = parent;
  m.on_branch = on_branch;
  m.internode_length = 0.2 * std::pow(0.95, fn) * (1.0 + jitter(seed, n, 1));
  m.internode_radius = 0.01 * std::pow(0.97, fn);
  m.petiole_length = 0.05 * std::pow(0.95, fn);
  m.petiole_radius = 0.003;
  double leaf = 1.0 + jitter(seed, n, 2);
  m.leaf_scale_x = 0.08 * leaf;
  m.leaf_scale_y = 0.05 * leaf;
  return m;
}

const char* const kCoreFields[] = {"index",          "internode_length", "internode_radius", "petiole_length",
                                   "petiole_radius", "leaf_scale_x",     "leaf_scale_y",     "color",
                                   "water_content"};

bool is_core_field(const std::string& name) {
  for (const char* f : kCoreFields) {
    if (name == f) return true;
  }
  return false;
}

NodeId metamer_id(std::int64_t index) { return NodeId{static_cast<std::uint64_t>(index) + 2}; }

}  // namespace

GrowthState growth_step(const GrowthState& state) {
  GrowthState next = state;
  next.step += 1;
  auto index = static_cast<std::int64_t>(next.metamers.size());
  std::int64_t main_ordinal = static_cast<std::int64_t>(state.step);
  next.metamers.push_back(make_metamer(state.seed, index, state.main_tip, false));
  next.main_tip = index;
  if (main_ordinal % 3 == 2) {
    next.metamers.push_back(make_metamer(state.seed, index + 1, index, true));
  }
  return next;
}

GrowthState grow(std::uint64_t seed, std::uint64_t steps) {
  GrowthState s;
  s.seed = seed;
  for (std::uint64_t i = 0; i < steps; ++i) s = growth_step(s);
  return s;
}

ExchangeGraph growth_export(const GrowthState& state, bool global) {
  ExchangeGraph g;
  g.add_node(GraphNode{NodeId{1}, "plant", "Plant", 0, {}, std::nullopt, std::nullopt});
  std::vector<Matrix4> frames;
  frames.reserve(state.metamers.size());
  for (const MetamerRecord& m : state.metamers) {
    GraphNode node;
    node.id = metamer_id(m.index);
    node.name = "metamer";
    node.type_name = "Metamer";
    node.scale = 1;
    node.properties = m.extra;
    node.properties["index"] = m.index;
    node.properties["internode_length"] = m.internode_length;
    node.properties["internode_radius"] = m.internode_radius;
    node.properties["petiole_length"] = m.petiole_length;
    node.properties["petiole_radius"] = m.petiole_radius;
    node.properties["leaf_scale_x"] = m.leaf_scale_x;
    node.properties["leaf_scale_y"] = m.leaf_scale_y;
    node.properties["color"] = m.color;
    node.properties["water_content"] = m.water_content;

    const MetamerRecord* parent = m.parent >= 0 ? &state.metamers[static_cast<std::size_t>(m.parent)] : nullptr;
    std::vector<TransformStep> chain{Rotation{{0, 0, 1}, 137.5}};
    if (m.on_branch) chain.emplace_back(Rotation{{1, 0, 0}, 45.0});
    chain.emplace_back(Translation{{0, 0, parent != nullptr ? parent->internode_length : 0.0}});
    Matrix4 local = compose_transforms(chain).matrix();
    Matrix4 frame = parent != nullptr ? multiply(frames[static_cast<std::size_t>(m.parent)], local) : local;
    frames.push_back(frame);
    if (global) {
      node.global_transform = frame;
    } else {
      node.local_transform = local;
    }
    g.add_node(std::move(node));
    NodeId src = parent != nullptr ? metamer_id(parent->index) : NodeId{1};
    g.add_edge({src, metamer_id(m.index), m.on_branch ? EdgeKind::branch : EdgeKind::successor});
  }
  if (global) g.set_transform_mode(TransformMode::global);
  return g;
}

void growth_install(GrowthState& state, const ExchangeGraph& graph) {
  std::size_t seen = 0;
  for (const GraphNode& n : graph.nodes()) {
    if (n.type_name != "Metamer") continue;
    auto it = n.properties.find("index");
    const auto* index = it != n.properties.end() ? std::get_if<std::int64_t>(&it->second) : nullptr;
    if (index == nullptr || *index < 0 || static_cast<std::size_t>(*index) >= state.metamers.size()) {
      throw Error(Errc::semantic_error, "metamer node " + std::to_string(n.id.value) + " has no valid index");
    }
    ++seen;
    MetamerRecord& m = state.metamers[static_cast<std::size_t>(*index)];
    for (const auto& [name, value] : n.properties) {
      auto number = [&](double& slot) {
        if (const double* d = std::get_if<double>(&value)) slot = *d;
      };
      if (name == "internode_length") number(m.internode_length);
      else if (name == "internode_radius") number(m.internode_radius);
      else if (name == "petiole_length") number(m.petiole_length);
      else if (name == "petiole_radius") number(m.petiole_radius);
      else if (name == "leaf_scale_x") number(m.leaf_scale_x);
      else if (name == "leaf_scale_y") number(m.leaf_scale_y);
      else if (name == "water_content") number(m.water_content);
      else if (name == "color") {
        if (const auto* s = std::get_if<std::string>(&value)) m.color = *s;
      } else if (!is_core_field(name)) {
        m.extra[name] = value;
      }
    }
  }
  if (seen != state.metamers.size()) {
    throw Error(Errc::semantic_error, "graph carries " + std::to_string(seen) + " metamers, model has " +
                                          std::to_string(state.metamers.size()));
  }
}

void register_growth_exporter(ExporterRegistry& registry) {
  registry.add(std::string(kGrowthModelKind), [](const std::any& state, const ExportOptions& options) {
    return growth_export(std::any_cast<const GrowthState&>(state), options.global);
  });
}

std::uint64_t fine_depth(const ExchangeGraph& graph, NodeId id) {
  std::uint64_t depth = 0;
  const std::uint32_t scale = graph.node(id).scale;
  for (auto p = topological_parent(graph, id); p && graph.node(*p).scale == scale;
       p = topological_parent(graph, *p)) {
    ++depth;
  }
  return depth;
}

ExchangeGraph water_handler(const ExchangeGraph& graph, const EnvMap&, const WaterParams& params) {
  ExchangeGraph out = graph;
  bool any = false;
  for (const GraphNode& n : graph.nodes()) {
    if (n.name != "internode" || n.scale == 0) continue;
    any = true;
    GraphNode& m = out.mutable_node(n.id);
    m.properties["pressure"] = params.base_pressure - params.loss_per_node * static_cast<double>(fine_depth(graph, n.id));
    m.properties["color"] = std::string("green");
  }
  if (!any) throw Error(Errc::missing_fine_scale, "no fine-scale internode nodes in the received graph");
  return out;
}

std::string status_handler(const ExchangeGraph& graph, const EnvMap& env) {
  std::string t = "-";
  if (auto it = env.find("temperature"); it != env.end()) t = format_value(it->second);
  return "ok: " + std::to_string(graph.node_count()) + " nodes, " + std::to_string(graph.edge_count()) +
         " edges, step env " + t;
}

TargetModel water_model(WaterParams params) {
  if (params.loss_per_node < 0.0) throw Error(Errc::schema_error, "loss_per_node must be non-negative");
  TargetModel m;
  m.name = "water";
  m.modes = {SessionMode::retroactive};
  m.update = [params](const ExchangeGraph& g, const EnvMap& env) { return water_handler(g, env, params); };
  return m;
}

TargetModel status_model() {
  TargetModel m;
  m.name = "status";
  m.modes = {SessionMode::non_retroactive};
  m.status = status_handler;
  return m;
}

}  // namespace fspm_bridge
