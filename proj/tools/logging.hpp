#pragma once

namespace edc::tools {

/// stderr logger named "edc". EDC_LOG={error,warn,info,debug} wins over
/// the quiet flag when set.
void init_logging(bool quiet);

} // namespace edc::tools
