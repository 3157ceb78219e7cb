#pragma once

#include <ostream>
#include <string>
#include <vector>

namespace hiermesh::cli {

// Exit codes: 0 success, 1 stage failure, 2 usage error, 3 partial failure
// (some samples could not be generated).
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace hiermesh::cli
