#pragma once

namespace cfa {

// Engine version, printed by the CLI and echoed into run manifests.
inline constexpr const char* kEngineVersion = "0.1.0";
// Version of the model-file grammar and of the DCR table format.
inline constexpr const char* kFormatVersion = "1";

}  // namespace cfa
