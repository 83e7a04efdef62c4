#pragma once

#include <iosfwd>
#include <string>

#include "styleswap/encoder.hpp"

namespace styleswap::cli {

inline constexpr int kExitOk = 0;
inline constexpr int kExitInput = 2;
inline constexpr int kExitNumerical = 3;

/// Parses and runs one command. Never throws; library errors map to exit
/// codes.
int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

/// identity | tiny[:channels[:seed]] | vgg | file:PATH
Encoder resolve_encoder(const std::string& spec);

/// Rebuilds a built-in encoder from the name stored in an inverse net.
Encoder encoder_for_paired_name(const std::string& name);

}  // namespace styleswap::cli
