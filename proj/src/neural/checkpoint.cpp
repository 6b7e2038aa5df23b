#include <array>
#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <json.hpp>

#include "stepcount/error.hpp"
#include "stepcount/neural.hpp"

namespace stepcount::neural {

namespace {

constexpr std::array<char, 4> kMagic{'S', 'C', 'K', '1'};
constexpr int kFormatVersion = 1;

void put_u64(std::string& out, std::uint64_t value)
{
    for (int k = 0; k < 8; ++k) out.push_back(static_cast<char>((value >> (8 * k)) & 0xFF));
}

std::uint64_t get_u64(const unsigned char* p)
{
    std::uint64_t value = 0;
    for (int k = 7; k >= 0; --k) value = (value << 8) | p[k];
    return value;
}

void put_doubles(std::string& out, std::span<const double> values)
{
    for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
}

struct ArrayEntry {
    std::string name;
    std::int64_t rows;
    std::int64_t cols;
};

[[noreturn]] void corrupt(const std::string& why) { fail(Errc::CorruptCheckpoint, why); }

}  // namespace

void save_checkpoint(const Checkpoint& checkpoint, const std::filesystem::path& path)
{
    const auto& model = checkpoint.model;
    nlohmann::json manifest;
    manifest["format_version"] = kFormatVersion;
    manifest["shape"] = {{"input", model.shape().input},
                         {"hidden1", model.shape().hidden1},
                         {"hidden2", model.shape().hidden2}};
    manifest["dropout_rate"] = model.dropout_rate();
    manifest["metadata"] = checkpoint.metadata;

    std::vector<ArrayEntry> arrays;
    std::string payload;
    for (const auto& blk : model.blocks()) {
        arrays.push_back({blk.name, blk.rows, blk.cols});
        put_doubles(payload, model.parameters().subspan(blk.offset, blk.size()));
    }
    if (checkpoint.optimizer) {
        const auto& opt = *checkpoint.optimizer;
        if (opt.first_moment.size() != model.parameters().size() ||
            opt.second_moment.size() != model.parameters().size()) {
            fail(Errc::ShapeMismatch, "optimizer state does not mirror the model");
        }
        manifest["optimizer_step"] = opt.step;
        const auto n = static_cast<std::int64_t>(opt.first_moment.size());
        arrays.push_back({"adam.first_moment", n, 1});
        put_doubles(payload, opt.first_moment);
        arrays.push_back({"adam.second_moment", n, 1});
        put_doubles(payload, opt.second_moment);
    } else {
        manifest["optimizer_step"] = nullptr;
    }
    for (const auto& [name, values] : checkpoint.extras) {
        arrays.push_back({"extra." + name, static_cast<std::int64_t>(values.size()), 1});
        put_doubles(payload, values);
    }

    manifest["arrays"] = nlohmann::json::array();
    for (const auto& a : arrays) manifest["arrays"].push_back({{"name", a.name}, {"rows", a.rows}, {"cols", a.cols}});

    const std::string text = manifest.dump();
    std::string bytes(kMagic.begin(), kMagic.end());
    put_u64(bytes, text.size());
    bytes += text;
    bytes += payload;

    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(Errc::IoFailure, "cannot open " + path.string() + " for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) fail(Errc::IoFailure, "failed writing " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(Errc::IoFailure, "cannot open " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const auto* data = reinterpret_cast<const unsigned char*>(bytes.data());

    if (bytes.size() < 12 || std::memcmp(bytes.data(), kMagic.data(), kMagic.size()) != 0) {
        corrupt("bad magic in " + path.string());
    }
    const std::uint64_t manifest_len = get_u64(data + 4);
    if (manifest_len > bytes.size() - 12) corrupt("manifest length exceeds file size");

    nlohmann::json manifest;
    try {
        manifest = nlohmann::json::parse(bytes.substr(12, manifest_len));
    } catch (const nlohmann::json::exception& e) {
        corrupt(std::string("unreadable manifest: ") + e.what());
    }

    try {
        if (manifest.at("format_version").get<int>() != kFormatVersion) corrupt("unsupported format version");
        LstmShape shape{manifest.at("shape").at("input").get<Index>(), manifest.at("shape").at("hidden1").get<Index>(),
                        manifest.at("shape").at("hidden2").get<Index>()};
        Checkpoint cp{LstmModel(shape, manifest.at("dropout_rate").get<double>()), std::nullopt, {}, {}};
        cp.metadata = manifest.at("metadata").get<std::map<std::string, std::string>>();

        std::size_t cursor = 12 + manifest_len;
        auto read_array = [&](const nlohmann::json& entry, std::span<double> dest) {
            const auto rows = entry.at("rows").get<std::int64_t>();
            const auto cols = entry.at("cols").get<std::int64_t>();
            if (rows < 0 || cols < 0 || static_cast<std::size_t>(rows * cols) != dest.size()) {
                corrupt("array " + entry.at("name").get<std::string>() + " has unexpected shape");
            }
            if (bytes.size() - cursor < 8 * dest.size()) corrupt("truncated array data");
            for (auto& v : dest) {
                v = std::bit_cast<double>(get_u64(data + cursor));
                cursor += 8;
            }
        };

        const auto& arrays = manifest.at("arrays");
        std::size_t idx = 0;
        auto params = cp.model.mutable_parameters();
        for (const auto& blk : cp.model.blocks()) {
            if (idx >= arrays.size() || arrays[idx].at("name").get<std::string>() != blk.name) {
                corrupt("expected array " + blk.name);
            }
            read_array(arrays[idx++], params.subspan(blk.offset, blk.size()));
        }
        if (!manifest.at("optimizer_step").is_null()) {
            auto state = AdamState::zeros(params.size());
            state.step = manifest.at("optimizer_step").get<std::uint64_t>();
            for (auto* target : {&state.first_moment, &state.second_moment}) {
                if (idx >= arrays.size()) corrupt("missing optimizer arrays");
                read_array(arrays[idx++], *target);
            }
            cp.optimizer = std::move(state);
        }
        for (; idx < arrays.size(); ++idx) {
            const auto name = arrays[idx].at("name").get<std::string>();
            if (name.rfind("extra.", 0) != 0) corrupt("unexpected array " + name);
            const auto rows = arrays[idx].at("rows").get<std::int64_t>();
            if (rows < 0 || static_cast<std::uint64_t>(rows) > (bytes.size() - cursor) / 8) corrupt("truncated array data");
            std::vector<double> values(static_cast<std::size_t>(rows));
            read_array(arrays[idx], values);
            cp.extras.emplace(name.substr(6), std::move(values));
        }
        if (cursor != bytes.size()) corrupt("trailing bytes after array data");
        return cp;
    } catch (const nlohmann::json::exception& e) {
        corrupt(std::string("malformed manifest: ") + e.what());
    } catch (const Error& e) {
        if (e.code() == Errc::CorruptCheckpoint) throw;
        corrupt(e.what());
    }
}

}  // namespace stepcount::neural
