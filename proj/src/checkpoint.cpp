#include "cwp/checkpoint.hpp"

#include <cstring>
#include <fstream>
#include <map>

namespace cwp {

namespace {

constexpr char kMagic[4] = {'C', 'W', 'P', 'N'};

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v & 0xff),
                          static_cast<unsigned char>((v >> 8) & 0xff),
                          static_cast<unsigned char>((v >> 16) & 0xff),
                          static_cast<unsigned char>((v >> 24) & 0xff)};
    out.write(reinterpret_cast<const char*>(b), 4);
}

uint32_t get_u32(std::istream& in, const std::string& what) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    if (!in) throw DataError("checkpoint: truncated while reading " + what);
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

void put_f32s(std::ostream& out, const float* data, size_t count) {
    static_assert(sizeof(float) == 4);
    for (size_t i = 0; i < count; ++i) {
        uint32_t bits;
        std::memcpy(&bits, data + i, 4);
        put_u32(out, bits);
    }
}

void get_f32s(std::istream& in, float* data, size_t count, const std::string& what) {
    for (size_t i = 0; i < count; ++i) {
        const uint32_t bits = get_u32(in, what);
        std::memcpy(data + i, &bits, 4);
    }
}

void put_string(std::ostream& out, const std::string& s) {
    put_u32(out, static_cast<uint32_t>(s.size()));
    out.write(s.data(), static_cast<std::streamsize>(s.size()));
}

std::string get_string(std::istream& in, const std::string& what) {
    const uint32_t len = get_u32(in, what + " length");
    std::string s(len, '\0');
    in.read(s.data(), static_cast<std::streamsize>(len));
    if (!in) throw DataError("checkpoint: truncated while reading " + what);
    return s;
}

}  // namespace

void save_checkpoint(const std::string& path, CwpNet& net, const RunConfig& cfg) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("checkpoint: cannot write '" + path + "'");
    out.write(kMagic, 4);
    put_u32(out, kCheckpointVersion);
    put_string(out, run_config_to_string(cfg));

    std::vector<NamedParam> params = net.parameters();
    put_u32(out, static_cast<uint32_t>(params.size()));
    for (const auto& p : params) {
        put_string(out, p.name);
        put_u32(out, static_cast<uint32_t>(p.tensor.rank()));
        for (int i = 0; i < p.tensor.rank(); ++i)
            put_u32(out, static_cast<uint32_t>(p.tensor.dim(i)));
        put_f32s(out, p.tensor.data(), p.tensor.size());
    }

    const ClusterModel& cm = net.cluster;
    put_u32(out, cm.fitted ? 1u : 0u);
    put_u32(out, static_cast<uint32_t>(cm.k));
    put_u32(out, static_cast<uint32_t>(cm.dim));
    put_u32(out, cm.seed);
    put_f32s(out, cm.centroids.data(), cm.centroids.size());
    if (!out) throw DataError("checkpoint: short write to '" + path + "'");
}

LoadedCheckpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError("checkpoint: cannot open '" + path + "'");
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, kMagic, 4) != 0)
        throw DataError("checkpoint: bad magic in '" + path + "'");
    const uint32_t version = get_u32(in, "version");
    if (version != kCheckpointVersion)
        throw DataError("checkpoint: unsupported format version " + std::to_string(version) +
                        " (expected " + std::to_string(kCheckpointVersion) + ")");

    LoadedCheckpoint lc;
    lc.cfg = parse_run_config_string(get_string(in, "config echo"));
    lc.net = make_cwp_net(lc.cfg.model, 0);

    std::map<std::string, std::pair<std::vector<int>, std::vector<float>>> table;
    const uint32_t count = get_u32(in, "tensor count");
    for (uint32_t t = 0; t < count; ++t) {
        const std::string name = get_string(in, "tensor name");
        const uint32_t rank = get_u32(in, "tensor rank");
        if (rank == 0 || rank > 8) throw DataError("checkpoint: implausible rank for '" + name + "'");
        std::vector<int> dims(rank);
        size_t n = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            dims[i] = static_cast<int>(get_u32(in, "tensor dims"));
            if (dims[i] <= 0) throw DataError("checkpoint: bad dims for '" + name + "'");
            n *= static_cast<size_t>(dims[i]);
        }
        std::vector<float> values(n);
        get_f32s(in, values.data(), n, "tensor payload of '" + name + "'");
        table[name] = {std::move(dims), std::move(values)};
    }

    for (auto& p : lc.net.parameters()) {
        const auto it = table.find(p.name);
        if (it == table.end())
            throw DataError("checkpoint: missing tensor '" + p.name + "'");
        if (it->second.first != p.tensor.dims())
            throw DataError("checkpoint: tensor '" + p.name + "' has dims " +
                            dims_to_string(it->second.first) + ", model expects " +
                            dims_to_string(p.tensor.dims()));
        p.tensor.values() = it->second.second;
        table.erase(it);
    }
    if (!table.empty())
        throw DataError("checkpoint: unexpected tensor '" + table.begin()->first + "'");

    ClusterModel cm;
    cm.fitted = get_u32(in, "cluster fitted flag") != 0;
    cm.k = static_cast<int>(get_u32(in, "cluster count"));
    cm.dim = static_cast<int>(get_u32(in, "cluster dim"));
    cm.seed = get_u32(in, "cluster seed");
    cm.centroids.resize(static_cast<size_t>(cm.k) * static_cast<size_t>(cm.dim));
    get_f32s(in, cm.centroids.data(), cm.centroids.size(), "cluster centroids");
    lc.net.cluster = cm;
    return lc;
}

}  // namespace cwp
