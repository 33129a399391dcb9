#pragma once

namespace hkq {

// Exit codes: 0 success, 1 domain/validation failure, 2 usage error.
int run_cli(int argc, const char* const* argv);

}  // namespace hkq
