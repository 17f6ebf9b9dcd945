#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "paraformer/tensor.hpp"

#include <json.hpp>

namespace paraformer {

// Container format shared by weight checkpoints and dataset files:
//   magic (4 bytes) | u64 manifest length | manifest JSON | f32 little-endian blob
// The manifest locates every tensor by byte offset into the blob.
class BlobWriter {
public:
    // Appends tensor data and returns its manifest entry.
    nlohmann::json add(const std::string& name, const Tensor& t);
    const std::vector<float>& blob() const { return blob_; }
    uint64_t byte_size() const { return blob_.size() * sizeof(float); }

private:
    std::vector<float> blob_;
};

class BlobReader {
public:
    BlobReader(std::vector<float> blob) : blob_(std::move(blob)) {}
    // Reads a tensor described by a manifest entry (shape + offset + nbytes).
    TensorPtr read(const nlohmann::json& entry, bool requires_grad = false) const;

private:
    std::vector<float> blob_;
};

// Atomic whole-file write: manifest+blob go to a temp file first, then rename.
void write_container(const std::string& path, const std::string& magic, const nlohmann::json& manifest,
                     const std::vector<float>& blob);

struct Container {
    nlohmann::json manifest;
    std::vector<float> blob;
};

Container read_container(const std::string& path, const std::string& magic);

// FNV-1a hash of a file's bytes as a hex string, for run manifests.
std::string file_hash_hex(const std::string& path);
std::string hash_hex(uint64_t h);

}  // namespace paraformer
