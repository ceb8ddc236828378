#include "dnetpad/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <nlohmann/json.hpp>

#include "dnetpad/error.hpp"

namespace dnetpad {
namespace {

static_assert(std::endian::native == std::endian::little, "checkpoint I/O assumes a little-endian host");

class Writer {
public:
    void bytes(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        out_.insert(out_.end(), b, b + n);
    }
    void u32(std::uint32_t v) { bytes(&v, sizeof v); }
    void u64(std::uint64_t v) { bytes(&v, sizeof v); }
    void str(const std::string& s) {
        u32(static_cast<std::uint32_t>(s.size()));
        bytes(s.data(), s.size());
    }
    std::vector<std::uint8_t> take() { return std::move(out_); }

private:
    std::vector<std::uint8_t> out_;
};

class Reader {
public:
    explicit Reader(std::span<const std::uint8_t> in) : in_(in) {}

    void bytes(void* p, std::size_t n, const std::string& field) {
        if (in_.size() - pos_ < n) {
            throw FormatError("checkpoint truncated while reading " + field + " at offset " + std::to_string(pos_));
        }
        std::memcpy(p, in_.data() + pos_, n);
        pos_ += n;
    }
    std::uint32_t u32(const std::string& field) {
        std::uint32_t v;
        bytes(&v, sizeof v, field);
        return v;
    }
    std::uint64_t u64(const std::string& field) {
        std::uint64_t v;
        bytes(&v, sizeof v, field);
        return v;
    }
    std::string str(const std::string& field) {
        const auto n = u32(field + " length");
        std::string s(n, '\0');
        bytes(s.data(), n, field);
        return s;
    }
    bool at_end() const { return pos_ == in_.size(); }

private:
    std::span<const std::uint8_t> in_;
    std::size_t pos_ = 0;
};

} // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Model& model, const TrainingMeta& meta) {
    nlohmann::json j;
    j["model"] = nlohmann::json::parse(model.config().to_json());
    j["training"] = {{"epoch", meta.epoch}, {"seed", meta.seed}};

    Writer w;
    w.bytes(kCheckpointMagic, sizeof kCheckpointMagic);
    w.u32(kCheckpointVersion);
    w.str(j.dump());
    w.u32(static_cast<std::uint32_t>(model.params().size()));
    for (const auto& param : model.params()) {
        w.str(param.name);
        const auto& shape = param.value.shape();
        w.u32(static_cast<std::uint32_t>(shape.size()));
        for (auto d : shape) w.u64(d);
        w.bytes(param.value.raw(), param.value.size() * sizeof(double));
    }
    return w.take();
}

LoadedCheckpoint deserialize_checkpoint(std::span<const std::uint8_t> bytes, const ModelConfig* expected) {
    Reader r(bytes);
    char magic[8];
    r.bytes(magic, sizeof magic, "magic");
    if (std::memcmp(magic, kCheckpointMagic, sizeof magic) != 0) {
        throw FormatError("checkpoint field 'magic': expected DNPADCKP");
    }
    const auto version = r.u32("version");
    if (version != kCheckpointVersion) {
        throw FormatError("checkpoint field 'version': got " + std::to_string(version) + ", expected " +
                          std::to_string(kCheckpointVersion));
    }
    const std::string meta_text = r.str("metadata");
    ModelConfig config;
    TrainingMeta meta;
    try {
        const auto j = nlohmann::json::parse(meta_text);
        config = ModelConfig::from_json(j.at("model").dump());
        meta.epoch = j.at("training").at("epoch").get<std::uint64_t>();
        meta.seed = j.at("training").at("seed").get<std::uint64_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("checkpoint field 'metadata': ") + e.what());
    }
    try {
        config.validate();
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint field 'metadata': ") + e.what());
    }

    Model model = Model::build(config, 0);
    auto& params = model.params();
    const auto count = r.u32("parameter count");
    if (count != params.size()) {
        throw FormatError("checkpoint field 'parameter count': got " + std::to_string(count) + ", config implies " +
                          std::to_string(params.size()));
    }
    for (auto& param : params) {
        const std::string name = r.str("parameter name");
        if (name != param.name) {
            throw FormatError("checkpoint parameter name: got '" + name + "', expected '" + param.name + "'");
        }
        const auto rank = r.u32(name + " rank");
        Shape shape(rank);
        for (auto& d : shape) d = r.u64(name + " dims");
        if (shape != param.value.shape()) {
            throw FormatError("checkpoint parameter '" + name + "' shape " + shape_string(shape) + ", expected " +
                              shape_string(param.value.shape()));
        }
        r.bytes(param.value.raw(), param.value.size() * sizeof(double), "parameter '" + name + "' payload");
    }
    if (!r.at_end()) throw FormatError("checkpoint has trailing bytes after the last parameter");

    LoadedCheckpoint loaded{std::move(model), meta, std::nullopt};
    if (expected) loaded.config_matches = (*expected == config);
    return loaded;
}

void save_checkpoint(const Model& model, const TrainingMeta& meta, const std::filesystem::path& path) {
    const auto bytes = serialize_checkpoint(model, meta);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot open checkpoint for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw Error("failed writing checkpoint: " + path.string());
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path, const ModelConfig* expected) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open checkpoint: " + path.string());
    const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return deserialize_checkpoint(bytes, expected);
}

} // namespace dnetpad
