#pragma once

#include <filesystem>
#include <string>

namespace trialsent::testing {

/// Path under the committed tests/fixtures directory.
inline std::filesystem::path fixture_path(const std::string& relative) {
    return std::filesystem::path(TRIALSENT_FIXTURE_DIR) / relative;
}

/// Fresh empty scratch directory under the build tree.
std::filesystem::path scratch_dir(const std::string& name);

}  // namespace trialsent::testing
