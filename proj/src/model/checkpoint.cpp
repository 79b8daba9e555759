#include "corridor_twin/model/checkpoint.hpp"

#include "corridor_twin/errors.hpp"

#include <json.hpp>

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>

namespace ctwin::model {

using nlohmann::json;

namespace {

constexpr char magic[8] = {'C', 'T', 'W', 'C', 'K', 'P', 'T', '\0'};

std::uint64_t fnv1a(const std::string& bytes, std::size_t len)
{
    std::uint64_t h = 0xcbf29ce484222325ull;
    for (std::size_t i = 0; i < len; ++i) {
        h ^= static_cast<unsigned char>(bytes[i]);
        h *= 0x100000001b3ull;
    }
    return h;
}

class Writer {
public:
    template <typename T>
    void put(T v)
    {
        std::uint64_t bits = 0;
        if constexpr (std::is_same_v<T, double>)
            bits = std::bit_cast<std::uint64_t>(v);
        else
            bits = static_cast<std::uint64_t>(v);
        for (std::size_t i = 0; i < sizeof(T); ++i)
            out_.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
    }
    void bytes(std::string_view s) { out_.append(s); }
    std::string& buffer() { return out_; }

private:
    std::string out_;
};

class Reader {
public:
    Reader(const std::string& bytes, std::size_t end, std::string path) : in_(bytes), end_(end), path_(std::move(path))
    {
    }

    template <typename T>
    T get()
    {
        need(sizeof(T));
        std::uint64_t bits = 0;
        for (std::size_t i = 0; i < sizeof(T); ++i)
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(in_[pos_ + i])) << (8 * i);
        pos_ += sizeof(T);
        if constexpr (std::is_same_v<T, double>)
            return std::bit_cast<double>(bits);
        else
            return static_cast<T>(bits);
    }
    std::string bytes(std::uint64_t n)
    {
        need(n);
        std::string s = in_.substr(pos_, n);
        pos_ += n;
        return s;
    }
    bool done() const { return pos_ == end_; }

private:
    void need(std::uint64_t n) const
    {
        if (n > end_ - pos_)
            throw CheckpointCorruptError("checkpoint " + path_ + " ends early at byte " + std::to_string(pos_));
    }

    const std::string& in_;
    std::size_t pos_ = 0;
    std::size_t end_;
    std::string path_;
};

std::vector<std::pair<std::string, Tensor*>> named_arrays(TgdtModel& model)
{
    std::vector<std::pair<std::string, Tensor*>> out;
    for (auto* prm : model.parameters())
        out.emplace_back(prm->name, &prm->value);
    for (auto& entry : model.norm.arrays())
        out.push_back(entry);
    return out;
}

json config_json(const ModelConfig& c)
{
    return {{"intersections", c.intersections}, {"intervals", c.intervals}, {"heads", c.heads}, {"init_seed", c.init_seed}};
}

struct Parsed {
    json meta;
    std::map<std::string, Tensor> arrays;
};

Parsed parse_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in)
        throw IoError("cannot open checkpoint: " + path.string());
    const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    const std::string where = path.string();
    if (bytes.size() < sizeof magic + 4 || std::memcmp(bytes.data(), magic, sizeof magic) != 0)
        throw CheckpointCorruptError("not a checkpoint file (bad magic): " + where);
    {
        Reader head(bytes, bytes.size(), where);
        head.bytes(sizeof magic);
        const auto version = head.get<std::uint32_t>();
        if (version != checkpoint_version)
            throw CheckpointVersionError("checkpoint " + where + " has format version " + std::to_string(version) +
                                         ", this build reads version " + std::to_string(checkpoint_version));
    }
    if (bytes.size() < sizeof magic + 4 + 8 + 8 + 8)
        throw CheckpointCorruptError("checkpoint " + where + " is truncated");
    const std::size_t body = bytes.size() - 8;
    Reader tail(bytes, bytes.size(), where);
    tail.bytes(body);
    if (tail.get<std::uint64_t>() != fnv1a(bytes, body))
        throw CheckpointCorruptError("checkpoint " + where + " fails its checksum (truncated or modified)");

    Reader r(bytes, body, where);
    r.bytes(sizeof magic);
    r.get<std::uint32_t>();
    Parsed out;
    try {
        out.meta = json::parse(r.bytes(r.get<std::uint64_t>()));
    } catch (const json::parse_error& e) {
        throw CheckpointCorruptError("checkpoint " + where + " has unreadable metadata: " + e.what());
    }
    const auto count = r.get<std::uint64_t>();
    for (std::uint64_t a = 0; a < count; ++a) {
        std::string name = r.bytes(r.get<std::uint32_t>());
        const auto rank = r.get<std::uint32_t>();
        ad::Shape shape(rank);
        std::uint64_t size = 1;
        for (auto& d : shape) {
            d = r.get<std::uint64_t>();
            size *= d;
        }
        if (size > (body / 8))
            throw CheckpointCorruptError("checkpoint " + where + ": array '" + name + "' claims more data than the file holds");
        std::vector<double> data(size);
        for (auto& v : data)
            v = r.get<double>();
        if (!out.arrays.emplace(name, Tensor(std::move(shape), std::move(data))).second)
            throw CheckpointCorruptError("checkpoint " + where + " repeats array '" + name + "'");
    }
    if (!r.done())
        throw CheckpointCorruptError("checkpoint " + where + " has trailing bytes after the arrays");
    return out;
}

void assign(TgdtModel& model, std::map<std::string, Tensor>& arrays, const std::string& where)
{
    auto targets = named_arrays(model);
    for (auto& [name, tensor] : targets) {
        auto it = arrays.find(name);
        if (it == arrays.end())
            throw CheckpointShapeError("checkpoint " + where + " has no array for parameter '" + name + "'");
        if (it->second.shape() != tensor->shape())
            throw CheckpointShapeError("parameter '" + name + "' has shape " + ad::shape_string(it->second.shape()) +
                                       " in checkpoint " + where + ", model expects " +
                                       ad::shape_string(tensor->shape()));
    }
    if (arrays.size() != targets.size())
        for (const auto& [name, tensor] : arrays)
            if (std::none_of(targets.begin(), targets.end(), [&](const auto& t) { return t.first == name; }))
                throw CheckpointShapeError("checkpoint " + where + " has array '" + name + "' unknown to the model");
    for (auto& [name, tensor] : targets)
        *tensor = std::move(arrays.at(name));
}

}  // namespace

void save_checkpoint(TgdtModel& model, const std::filesystem::path& path, const std::string& meta_json)
{
    json meta;
    try {
        meta = meta_json.empty() ? json::object() : json::parse(meta_json);
    } catch (const json::parse_error& e) {
        throw ContractError(std::string("checkpoint metadata is not valid JSON: ") + e.what());
    }
    if (!meta.is_object())
        throw ContractError("checkpoint metadata must be a JSON object");
    meta["model"] = config_json(model.config());

    Writer w;
    w.bytes(std::string_view(magic, sizeof magic));
    w.put<std::uint32_t>(checkpoint_version);
    const std::string meta_text = meta.dump();
    w.put<std::uint64_t>(meta_text.size());
    w.bytes(meta_text);
    const auto arrays = named_arrays(model);
    w.put<std::uint64_t>(arrays.size());
    for (const auto& [name, tensor] : arrays) {
        w.put<std::uint32_t>(static_cast<std::uint32_t>(name.size()));
        w.bytes(name);
        w.put<std::uint32_t>(static_cast<std::uint32_t>(tensor->shape().size()));
        for (auto d : tensor->shape())
            w.put<std::uint64_t>(d);
        for (double v : tensor->data())
            w.put<double>(v);
    }
    w.put<std::uint64_t>(fnv1a(w.buffer(), w.buffer().size()));

    if (path.has_parent_path()) {
        std::error_code ec;
        std::filesystem::create_directories(path.parent_path(), ec);
        if (ec)
            throw IoError("cannot create directory " + path.parent_path().string() + ": " + ec.message());
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out)
        throw IoError("cannot open checkpoint for writing: " + path.string());
    out.write(w.buffer().data(), static_cast<std::streamsize>(w.buffer().size()));
    if (!out)
        throw IoError("failed writing checkpoint: " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path& path)
{
    auto parsed = parse_file(path);
    ModelConfig config;
    try {
        const auto& m = parsed.meta.at("model");
        config.intersections = m.at("intersections").get<std::size_t>();
        config.intervals = m.at("intervals").get<std::size_t>();
        config.heads = m.at("heads").get<std::size_t>();
        config.init_seed = m.at("init_seed").get<std::uint64_t>();
    } catch (const json::exception& e) {
        throw CheckpointCorruptError("checkpoint " + path.string() + " lacks a model config: " + e.what());
    }
    Checkpoint ck{TgdtModel(config), parsed.meta.dump()};
    assign(ck.model, parsed.arrays, path.string());
    return ck;
}

std::string load_parameters(const std::filesystem::path& path, TgdtModel& model)
{
    auto parsed = parse_file(path);
    assign(model, parsed.arrays, path.string());
    return parsed.meta.dump();
}

}  // namespace ctwin::model
