#include "fspm_bridge/error.hpp"

namespace fspm_bridge {

std::string_view errc_name(Errc code) noexcept {
  switch (code) {
    case Errc::duplicate_id:
      return "DuplicateId";
    case Errc::unknown_endpoint:
      return "UnknownEndpoint";
    case Errc::scale_violation:
      return "ScaleViolation";
    case Errc::self_loop:
      return "SelfLoop";
    case Errc::unknown_node:
      return "UnknownNode";
    case Errc::invalid_graph:
      return "InvalidGraph";
    case Errc::syntax_error:
      return "SyntaxError";
    case Errc::schema_error:
      return "SchemaError";
    case Errc::semantic_error:
      return "SemanticError";
    case Errc::io_error:
      return "IoError";
    case Errc::zero_axis:
      return "ZeroAxis";
    case Errc::non_affine:
      return "NonAffine";
    case Errc::wrong_mode:
      return "WrongMode";
    case Errc::singular_parent_transform:
      return "SingularParentTransform";
    case Errc::no_entry:
      return "NoEntry";
    case Errc::bad_args:
      return "BadArgs";
    case Errc::unsupported_type:
      return "UnsupportedType";
    case Errc::no_adapter:
      return "NoAdapter";
    case Errc::adapter_failure:
      return "AdapterFailure";
    case Errc::unmapped_edge_type:
      return "UnmappedEdgeType";
    case Errc::type_mismatch:
      return "TypeMismatch";
    case Errc::unknown_composite_type:
      return "UnknownCompositeType";
    case Errc::template_arity:
      return "TemplateArity";
    case Errc::missing_fine_scale:
      return "MissingFineScale";
    case Errc::operator_type_mismatch:
      return "OperatorTypeMismatch";
    case Errc::stage_failure:
      return "StageFailure";
    case Errc::oversize:
      return "Oversize";
    case Errc::truncated:
      return "Truncated";
    case Errc::malformed_message:
      return "MalformedMessage";
    case Errc::connection_closed:
      return "ConnectionClosed";
    case Errc::connect_refused:
      return "ConnectRefused";
    case Errc::mode_rejected:
      return "ModeRejected";
    case Errc::bad_handshake:
      return "BadHandshake";
    case Errc::out_of_order_step:
      return "OutOfOrderStep";
    case Errc::handler_failure:
      return "HandlerFailure";
    case Errc::step_index_mismatch:
      return "StepIndexMismatch";
    case Errc::server_error:
      return "ServerError";
    case Errc::timeout:
      return "Timeout";
  }
  return "Unknown";
}

std::optional<Errc> parse_errc(std::string_view name) noexcept {
  for (int i = 0; i <= static_cast<int>(Errc::timeout); ++i) {
    auto code = static_cast<Errc>(i);
    if (errc_name(code) == name) return code;
  }
  return std::nullopt;
}

}  // namespace fspm_bridge
