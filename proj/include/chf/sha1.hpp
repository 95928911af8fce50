#pragma once

#include <string>
#include <string_view>

namespace chf {

/// SHA-1 digest as lowercase hex.
std::string sha1_hex(std::string_view data);

/// Hash of file content the way git hashes a blob: sha1("blob <len>\0" + content).
std::string git_blob_sha1(std::string_view content);

}  // namespace chf
