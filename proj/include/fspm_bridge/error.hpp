#pragma once

#include <optional>
#include <stdexcept>
#include <string>
#include <string_view>

namespace fspm_bridge {

enum class Errc {
  // exchange graph
  duplicate_id,
  unknown_endpoint,
  scale_violation,
  self_loop,
  unknown_node,
  invalid_graph,
  // xeg / config files
  syntax_error,
  schema_error,
  semantic_error,
  io_error,
  // geometry
  zero_axis,
  non_affine,
  wrong_mode,
  singular_parent_transform,
  no_entry,
  bad_args,
  unsupported_type,
  // pipeline
  no_adapter,
  adapter_failure,
  unmapped_edge_type,
  type_mismatch,
  unknown_composite_type,
  template_arity,
  missing_fine_scale,
  operator_type_mismatch,
  stage_failure,
  // protocol
  oversize,
  truncated,
  malformed_message,
  connection_closed,
  connect_refused,
  mode_rejected,
  bad_handshake,
  out_of_order_step,
  handler_failure,
  step_index_mismatch,
  server_error,
  timeout,
};

/// Stable CamelCase name used in error messages and on the wire.
std::string_view errc_name(Errc code) noexcept;
/// Inverse of errc_name; nullopt for names this build does not know.
std::optional<Errc> parse_errc(std::string_view name) noexcept;

class Error : public std::runtime_error {
 public:
  Error(Errc code, const std::string& detail)
      : std::runtime_error(std::string(errc_name(code)) + ": " + detail),
        code_(code),
        detail_(detail) {}

  Errc code() const noexcept { return code_; }
  const std::string& detail() const noexcept { return detail_; }

 private:
  Errc code_;
  std::string detail_;
};

}  // namespace fspm_bridge
