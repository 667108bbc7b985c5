#pragma once

#include <string>
#include <string_view>

namespace drivepoison {

/// SHA-1 over "blob <size>\0<content>", hex encoded; matches `git hash-object`.
std::string git_blob_hash(std::string_view content);

/// First 16 hex digits of SHA-256(content). Used for trigger and config
/// fingerprints.
std::string fingerprint(std::string_view content);

}  // namespace drivepoison
