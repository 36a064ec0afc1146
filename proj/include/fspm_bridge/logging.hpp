#pragma once

namespace fspm_bridge {

/// Sends library diagnostics to stderr at the level named by FSPM_BRIDGE_LOG
/// (trace, debug, info, warn, error, critical, off; default warn).
void init_logging();

}  // namespace fspm_bridge
