#pragma once

// Operator command line. dispatch() is the whole program minus process
// plumbing so it can be driven from tests.

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

namespace pact::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitFailure = 1;
inline constexpr int kExitUsage = 2;
inline constexpr int kExitUnreachable = 3;

using EnvLookup = std::function<std::optional<std::string>(const std::string&)>;

/// Reads the real process environment.
EnvLookup process_env();

/// args excludes the program name. Endpoints resolve as flags, then
/// PACT_REGISTRY_URL / PACT_NARROWCAST_URL, then the config file
/// (--config or PACT_CONFIG).
int dispatch(const std::vector<std::string>& args, std::ostream& out, std::ostream& err,
             const EnvLookup& env = process_env());

}  // namespace pact::cli
