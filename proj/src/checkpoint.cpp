#include "glim/checkpoint.hpp"

#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <vector>

namespace glim {

namespace {
const char* dtype_name() { return sizeof(Real) == 8 ? "f64" : "f32"; }
}  // namespace

void save_checkpoint(const std::string& path, const ParamMap& arrays,
                     const nlohmann::json& meta) {
    nlohmann::json header;
    header["version"] = kCheckpointVersion;
    header["dtype"] = dtype_name();
    header["meta"] = meta;
    auto list = nlohmann::json::array();
    for (const auto& [name, a] : arrays)
        list.push_back({{"name", name}, {"shape", a.shape()}});
    header["arrays"] = std::move(list);

    const std::string hs = header.dump();
    const std::string tmp = path + ".tmp";
    {
        std::ofstream f(tmp, std::ios::binary);
        if (!f) throw IoError("cannot open " + tmp + " for writing");
        uint64_t hlen = hs.size();
        f.write(reinterpret_cast<const char*>(&hlen), sizeof(hlen));
        f.write(hs.data(), static_cast<std::streamsize>(hs.size()));
        for (const auto& [name, a] : arrays)
            f.write(reinterpret_cast<const char*>(a.data()),
                    static_cast<std::streamsize>(a.size() * sizeof(Real)));
        if (!f) throw IoError("write failed: " + tmp);
    }
    std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open checkpoint: " + path);
    uint64_t hlen = 0;
    f.read(reinterpret_cast<char*>(&hlen), sizeof(hlen));
    if (!f || hlen == 0 || hlen > (1ull << 30))
        throw IoError("corrupt checkpoint header: " + path);
    std::string hs(hlen, '\0');
    f.read(hs.data(), static_cast<std::streamsize>(hlen));
    if (!f) throw IoError("truncated checkpoint header: " + path);

    nlohmann::json header = nlohmann::json::parse(hs, nullptr, false);
    if (header.is_discarded()) throw IoError("invalid checkpoint header JSON: " + path);
    if (!header.contains("version"))
        throw IoError("checkpoint missing version field: " + path);
    Checkpoint ck;
    ck.version = header["version"].get<int>();
    if (ck.version != kCheckpointVersion)
        throw IoError("unsupported checkpoint version " + std::to_string(ck.version) +
                      " in " + path);
    const std::string dtype = header.value("dtype", "");
    if (dtype != dtype_name())
        throw IoError("checkpoint dtype " + dtype + " does not match build (" +
                      dtype_name() + ")");
    ck.meta = header.value("meta", nlohmann::json::object());

    for (const auto& e : header["arrays"]) {
        const std::string name = e["name"].get<std::string>();
        std::vector<int> shape = e["shape"].get<std::vector<int>>();
        Array a(shape);
        f.read(reinterpret_cast<char*>(a.data()),
               static_cast<std::streamsize>(a.size() * sizeof(Real)));
        if (!f) throw IoError("truncated checkpoint payload at " + name + ": " + path);
        ck.arrays.emplace(name, std::move(a));
    }
    return ck;
}

}  // namespace glim
