#include "pldiff/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

#include "pldiff/synthdata.hpp"  // crc32, write_f32_blob

using nlohmann::json;

namespace pldiff {

void save_checkpoint(const ParamStore<float>& params, const std::string& prefix) {
    std::vector<float> blob;
    json manifest;
    manifest["format"] = "pldiff-checkpoint-v1";
    manifest["blob"] = prefix.substr(prefix.find_last_of('/') + 1) + ".f32";
    json arrays = json::array();
    for (const auto& [name, p] : params.items) {
        json a;
        a["name"] = name;
        a["shape"] = p.shape();
        a["offset"] = blob.size() * sizeof(float);
        a["crc32"] = crc32(p.data().data(), p.size() * sizeof(float));
        arrays.push_back(a);
        blob.insert(blob.end(), p.data().begin(), p.data().end());
    }
    manifest["params"] = arrays;

    std::ofstream mf(prefix + ".json");
    if (!mf) throw std::runtime_error("cannot write checkpoint manifest: " + prefix + ".json");
    mf << manifest.dump(2) << '\n';
    write_f32_blob(prefix + ".f32", blob);
}

void load_checkpoint(ParamStore<float>& params, const std::string& prefix) {
    json manifest;
    {
        std::ifstream mf(prefix + ".json");
        if (!mf) throw std::runtime_error("cannot open checkpoint manifest: " + prefix + ".json");
        try {
            mf >> manifest;
        } catch (const json::exception& e) {
            throw std::runtime_error(std::string("checkpoint: malformed manifest: ") + e.what());
        }
    }
    std::ifstream bf(prefix + ".f32", std::ios::binary | std::ios::ate);
    if (!bf) throw std::runtime_error("cannot open checkpoint blob: " + prefix + ".f32");
    const std::size_t blob_size = static_cast<std::size_t>(bf.tellg());
    bf.seekg(0);
    std::vector<char> bytes(blob_size);
    bf.read(bytes.data(), static_cast<std::streamsize>(blob_size));
    if (!bf) throw std::runtime_error("checkpoint: short read: " + prefix + ".f32");

    try {
        const json& arrays = manifest.at("params");
        if (arrays.size() != params.items.size())
            throw std::runtime_error("checkpoint: parameter count mismatch");
        for (std::size_t i = 0; i < params.items.size(); ++i) {
            const json& a = arrays[i];
            auto& [name, p] = params.items[i];
            if (a.at("name").get<std::string>() != name)
                throw std::runtime_error("checkpoint: expected parameter '" + name + "', found '" +
                                         a.at("name").get<std::string>() + "'");
            if (a.at("shape").get<std::vector<int>>() != p.shape())
                throw std::runtime_error("checkpoint: shape mismatch for " + name);
            const std::size_t offset = a.at("offset").get<std::size_t>();
            const std::size_t nbytes = p.size() * sizeof(float);
            if (offset + nbytes > blob_size)
                throw std::runtime_error("checkpoint: blob truncated at " + name);
            if (a.at("crc32").get<std::uint32_t>() != crc32(bytes.data() + offset, nbytes))
                throw std::runtime_error("checkpoint: checksum failure for " + name);
            std::memcpy(p.data().data(), bytes.data() + offset, nbytes);
        }
    } catch (const json::exception& e) {
        throw std::runtime_error(std::string("checkpoint: malformed manifest: ") + e.what());
    }
}

}  // namespace pldiff
