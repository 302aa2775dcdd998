#include "soilgen/nn/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>

#include "soilgen/common.hpp"

namespace soilgen::nn {

static_assert(std::endian::native == std::endian::little,
              "checkpoint payloads are little-endian; big-endian hosts need byte swaps");

namespace {

constexpr char kMagic[8] = {'S', 'G', 'C', 'K', '0', '0', '0', '1'};

void write_u64(std::ostream& os, uint64_t v) {
    char buf[8];
    std::memcpy(buf, &v, 8);
    os.write(buf, 8);
}

uint64_t read_u64(std::istream& is) {
    char buf[8];
    is.read(buf, 8);
    SG_CHECK(is.good(), io_error, "checkpoint truncated while reading header");
    uint64_t v;
    std::memcpy(&v, buf, 8);
    return v;
}

void write_block(std::ostream& os, const Tensor& t) {
    os.write(reinterpret_cast<const char*>(t.data()),
             static_cast<std::streamsize>(t.numel()) * 8);
}

void read_block(std::istream& is, Tensor& t) {
    is.read(reinterpret_cast<char*>(t.data()), static_cast<std::streamsize>(t.numel()) * 8);
    SG_CHECK(is.good(), io_error, "checkpoint truncated while reading payload");
}

nlohmann::json read_manifest_stream(std::istream& is, const std::filesystem::path& path) {
    char magic[8];
    is.read(magic, 8);
    SG_CHECK(is.good() && std::memcmp(magic, kMagic, 8) == 0, io_error,
             "not a checkpoint file: ", path.string());
    uint64_t len = read_u64(is);
    SG_CHECK(len > 0 && len < (1ull << 30), io_error, "checkpoint manifest length implausible: ",
             len);
    std::string text(len, '\0');
    is.read(text.data(), static_cast<std::streamsize>(len));
    SG_CHECK(is.good(), io_error, "checkpoint truncated while reading manifest");
    nlohmann::json m = nlohmann::json::parse(text, nullptr, false);
    SG_CHECK(!m.is_discarded(), io_error, "checkpoint manifest is not valid JSON");
    return m;
}

}  // namespace

void save_checkpoint(const std::filesystem::path& path, const ParameterStore& ps,
                     const nlohmann::json& extra) {
    nlohmann::json manifest;
    manifest["format"] = 1;
    manifest["step"] = ps.step_count;
    manifest["extra"] = extra;
    auto& plist = manifest["params"] = nlohmann::json::array();
    for (const auto& p : ps.all()) {
        plist.push_back({{"name", p->name}, {"shape", p->value.shape()}});
    }
    std::string text = manifest.dump();  // nlohmann orders keys, so this is stable

    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream os(path, std::ios::binary | std::ios::trunc);
    SG_CHECK(os.is_open(), io_error, "cannot open for writing: ", path.string());
    os.write(kMagic, 8);
    write_u64(os, text.size());
    os.write(text.data(), static_cast<std::streamsize>(text.size()));
    for (const auto& p : ps.all()) {
        write_block(os, p->value);
        write_block(os, p->m);
        write_block(os, p->v);
    }
    os.flush();
    SG_CHECK(os.good(), io_error, "write failed: ", path.string());
}

nlohmann::json read_checkpoint_manifest(const std::filesystem::path& path) {
    std::ifstream is(path, std::ios::binary);
    SG_CHECK(is.is_open(), io_error, "cannot open checkpoint: ", path.string());
    return read_manifest_stream(is, path);
}

void load_checkpoint(const std::filesystem::path& path, ParameterStore& ps) {
    std::ifstream is(path, std::ios::binary);
    SG_CHECK(is.is_open(), io_error, "cannot open checkpoint: ", path.string());
    nlohmann::json manifest = read_manifest_stream(is, path);

    const auto& plist = manifest.at("params");
    const auto& live = ps.all();
    SG_CHECK(plist.size() == live.size(), io_error, "checkpoint has ", plist.size(),
             " parameters, store has ", live.size());
    for (size_t i = 0; i < live.size(); ++i) {
        const auto& entry = plist[i];
        SG_CHECK(entry.at("name").get<std::string>() == live[i]->name, io_error,
                 "checkpoint parameter order mismatch at index ", i, ": ",
                 entry.at("name").get<std::string>(), " vs ", live[i]->name);
        auto shape = entry.at("shape").get<std::vector<int64_t>>();
        SG_CHECK(shape == live[i]->value.shape(), io_error, "shape mismatch for ", live[i]->name);
    }
    for (const auto& p : live) {
        read_block(is, p->value);
        read_block(is, p->m);
        read_block(is, p->v);
    }
    ps.step_count = manifest.at("step").get<int64_t>();
}

}  // namespace soilgen::nn
