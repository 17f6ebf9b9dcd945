#include "paraformer/serialize.hpp"

#include <cstdio>
#include <cstring>
#include <fstream>
#include <sstream>

namespace paraformer {

nlohmann::json BlobWriter::add(const std::string& name, const Tensor& t) {
    nlohmann::json entry;
    entry["name"] = name;
    entry["shape"] = t.shape;
    entry["offset"] = byte_size();
    entry["nbytes"] = t.data.size() * sizeof(float);
    blob_.insert(blob_.end(), t.data.begin(), t.data.end());
    return entry;
}

TensorPtr BlobReader::read(const nlohmann::json& entry, bool requires_grad) const {
    const auto shape = entry.at("shape").get<std::vector<int64_t>>();
    const uint64_t offset = entry.at("offset").get<uint64_t>();
    const uint64_t nbytes = entry.at("nbytes").get<uint64_t>();
    if (offset % sizeof(float) != 0 || nbytes % sizeof(float) != 0) throw IoError("misaligned tensor entry");
    auto t = Tensor::create(shape, requires_grad);
    if (static_cast<uint64_t>(t->numel()) * sizeof(float) != nbytes) throw IoError("tensor entry size does not match shape");
    const uint64_t start = offset / sizeof(float);
    if (start + t->data.size() > blob_.size()) throw IoError("tensor entry extends past end of blob");
    std::memcpy(t->data.data(), blob_.data() + start, nbytes);
    return t;
}

void write_container(const std::string& path, const std::string& magic, const nlohmann::json& manifest,
                     const std::vector<float>& blob) {
    if (magic.size() != 4) throw ContractError("container magic must be 4 bytes");
    const std::string tmp = path + ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot open for writing: " + path);
        const std::string m = manifest.dump();
        const uint64_t mlen = m.size();
        out.write(magic.data(), 4);
        out.write(reinterpret_cast<const char*>(&mlen), sizeof(mlen));
        out.write(m.data(), static_cast<std::streamsize>(m.size()));
        out.write(reinterpret_cast<const char*>(blob.data()), static_cast<std::streamsize>(blob.size() * sizeof(float)));
        if (!out) {
            out.close();
            std::remove(tmp.c_str());
            throw IoError("write failed: " + path);
        }
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) {
        std::remove(tmp.c_str());
        throw IoError("cannot move temp file into place: " + path);
    }
}

Container read_container(const std::string& path, const std::string& magic) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    char got[4] = {};
    in.read(got, 4);
    if (!in || std::memcmp(got, magic.data(), 4) != 0) throw IoError("bad magic in " + path);
    uint64_t mlen = 0;
    in.read(reinterpret_cast<char*>(&mlen), sizeof(mlen));
    if (!in || mlen > (1ull << 32)) throw IoError("corrupt manifest length in " + path);
    std::string m(mlen, '\0');
    in.read(m.data(), static_cast<std::streamsize>(mlen));
    if (!in) throw IoError("truncated manifest in " + path);
    Container c;
    try {
        c.manifest = nlohmann::json::parse(m);
    } catch (const nlohmann::json::exception& e) {
        throw IoError("corrupt manifest in " + path + ": " + e.what());
    }
    // remainder of the file is the blob
    const auto blob_start = in.tellg();
    in.seekg(0, std::ios::end);
    const auto end = in.tellg();
    const uint64_t blob_bytes = static_cast<uint64_t>(end - blob_start);
    if (blob_bytes % sizeof(float) != 0) throw IoError("blob size not a multiple of 4 in " + path);
    c.blob.resize(blob_bytes / sizeof(float));
    in.seekg(blob_start);
    in.read(reinterpret_cast<char*>(c.blob.data()), static_cast<std::streamsize>(blob_bytes));
    if (!in) throw IoError("truncated blob in " + path);
    const uint64_t declared = c.manifest.value("blob_nbytes", blob_bytes);
    if (declared != blob_bytes) throw IoError("blob size does not match manifest in " + path);
    return c;
}

std::string hash_hex(uint64_t h) {
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
    return buf;
}

std::string file_hash_hex(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open: " + path);
    uint64_t h = 0xcbf29ce484222325ull;
    char buf[65536];
    while (in) {
        in.read(buf, sizeof(buf));
        h = fnv1a(buf, static_cast<size_t>(in.gcount()), h);
    }
    return hash_hex(h);
}

}  // namespace paraformer
