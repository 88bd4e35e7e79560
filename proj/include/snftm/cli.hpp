#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace snftm {

/// Entry point of the command-line tool; args excludes the program name.
/// Returns 0 on success, 1 on domain errors (including failed verification)
/// and 2 on usage errors.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace snftm
