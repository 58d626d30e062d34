#pragma once

namespace xeml::cli {

/// Entry point for the xeml command. Exit codes: 0 success, 1 runtime
/// failure, 2 configuration or usage error.
int run(int argc, char** argv);

}  // namespace xeml::cli
