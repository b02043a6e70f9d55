// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <filesystem>
#include <string>
#include <string_view>

namespace hierpath {

/// Whole-file read; throws IoError when the file cannot be opened.
std::string read_file(const std::filesystem::path& path);

/// Creates missing parent directories, then writes `content` byte-for-byte.
void write_file(const std::filesystem::path& path, std::string_view content);

}  // namespace hierpath
