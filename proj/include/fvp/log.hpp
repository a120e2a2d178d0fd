#pragma once

namespace fvp {

// Sets the spdlog level from FVP_LOG (quiet, info, debug). Unset means warnings only.
// Throws UsageError on an unknown value.
void init_logging();

}  // namespace fvp
