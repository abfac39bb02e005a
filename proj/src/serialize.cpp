#include "oiqa/serialize.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "json.hpp"
#include "oiqa/error.hpp"
#include "oiqa/fourier.hpp"
#include "oiqa/hash.hpp"

namespace oiqa {
namespace {

using json = nlohmann::ordered_json;

template <class U>
void put_le(std::string& out, U v) {
    for (std::size_t i = 0; i < sizeof(U); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class U>
U get_le(std::string_view bytes, std::size_t offset) {
    U v = 0;
    for (std::size_t i = 0; i < sizeof(U); ++i)
        v |= static_cast<U>(static_cast<unsigned char>(bytes[offset + i])) << (8 * i);
    return v;
}

void put_real(std::string& out, double v) { put_le(out, std::bit_cast<std::uint64_t>(v)); }
double get_real(std::string_view bytes, std::size_t offset) {
    return std::bit_cast<double>(get_le<std::uint64_t>(bytes, offset));
}

void require_bytes(std::string_view bytes, std::size_t need, const char* what) {
    if (bytes.size() < need)
        throw FormatError(std::string(what) + ": truncated at byte " + std::to_string(bytes.size()) + ", need " +
                          std::to_string(need));
}

json layer_to_json(const LayerSpec& l) {
    json j;
    j["kind"] = std::string(to_string(l.kind));
    j["out_channels"] = l.out_channels;
    j["kernel"] = l.kernel;
    j["stride"] = l.stride;
    j["padding"] = l.padding;
    j["dilation"] = l.dilation;
    j["mid_channels"] = l.mid_channels;
    j["params"] = l.param_ids;
    j["fresh"] = l.fresh;
    j["masked_channels"] = l.masked_channels;
    return j;
}

LayerSpec layer_from_json(const json& j) {
    LayerSpec l;
    const std::string kind = j.at("kind").get<std::string>();
    try {
        l.kind = layer_kind_from_string(kind);
    } catch (const Error&) {
        throw FormatError("checkpoint: unknown layer kind '" + kind + "'");
    }
    l.out_channels = j.at("out_channels").get<std::size_t>();
    l.kernel = j.at("kernel").get<std::size_t>();
    l.stride = j.at("stride").get<std::size_t>();
    l.padding = j.at("padding").get<std::size_t>();
    l.dilation = j.at("dilation").get<std::size_t>();
    l.mid_channels = j.at("mid_channels").get<std::size_t>();
    l.param_ids = j.at("params").get<std::vector<std::string>>();
    l.fresh = j.at("fresh").get<bool>();
    l.masked_channels = j.at("masked_channels").get<std::vector<std::size_t>>();
    return l;
}

}  // namespace

std::string encode_checkpoint(const ModelGraph& model) {
    validate_model(model);
    std::string payload;
    json dir = json::array();
    for (const auto& [id, t] : model.params) {
        if (!t.is_real()) throw TypeError("checkpoint: parameter '" + id + "' is not real64");
        const std::size_t offset = payload.size();
        for (double v : t.values()) put_real(payload, v);
        dir.push_back({{"id", id}, {"shape", t.shape()}, {"offset", offset}, {"length", payload.size() - offset}});
    }
    json header;
    header["format"] = std::string(kCheckpointMagic);
    header["version"] = kCheckpointVersion;
    header["dtype"] = "real64";
    header["byte_order"] = "little";
    header["dft_convention"] = std::string(kDftConvention);
    header["input_shape"] = model.input_shape;
    header["score_range"] = model.score_range ? json{{"lo", model.score_range->lo}, {"hi", model.score_range->hi}}
                                              : json(nullptr);
    json layers = json::array();
    for (const auto& l : model.layers) layers.push_back(layer_to_json(l));
    header["layers"] = std::move(layers);
    header["tensors"] = std::move(dir);
    header["payload_bytes"] = payload.size();
    header["payload_sha256"] = sha256_hex(payload);

    const std::string text = header.dump();
    std::string out(kCheckpointMagic);
    put_le<std::uint64_t>(out, text.size());
    out += text;
    out += payload;
    return out;
}

ModelGraph decode_checkpoint(std::string_view bytes) {
    const std::size_t m = kCheckpointMagic.size();
    require_bytes(bytes, m + 8, "checkpoint");
    if (bytes.substr(0, m) != kCheckpointMagic) throw FormatError("checkpoint: bad magic at byte 0");
    const auto header_len = get_le<std::uint64_t>(bytes, m);
    if (header_len > bytes.size() - m - 8)
        throw FormatError("checkpoint: header length " + std::to_string(header_len) + " at byte " +
                          std::to_string(m) + " exceeds file size");
    json header;
    try {
        header = json::parse(bytes.substr(m + 8, header_len));
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
    }
    const std::string_view payload = bytes.substr(m + 8 + header_len);

    ModelGraph model;
    try {
        if (header.at("version").get<int>() != kCheckpointVersion)
            throw FormatError("checkpoint: unsupported version " + header.at("version").dump());
        if (header.at("dtype") != "real64" || header.at("byte_order") != "little")
            throw FormatError("checkpoint: unsupported dtype or byte order");
        if (header.at("dft_convention") != kDftConvention)
            throw FormatError("checkpoint: DFT convention mismatch: " + header.at("dft_convention").dump());
        if (header.at("payload_bytes").get<std::size_t>() != payload.size())
            throw FormatError("checkpoint: payload is " + std::to_string(payload.size()) + " bytes, header declares " +
                              header.at("payload_bytes").dump());
        if (sha256_hex(payload) != header.at("payload_sha256").get<std::string>())
            throw FormatError("checkpoint: payload hash mismatch (file corrupted)");

        model.input_shape = header.at("input_shape").get<Shape>();
        if (!header.at("score_range").is_null())
            model.score_range = ScoreRange{header["score_range"].at("lo").get<double>(),
                                           header["score_range"].at("hi").get<double>()};
        for (const auto& l : header.at("layers")) model.layers.push_back(layer_from_json(l));
        for (const auto& t : header.at("tensors")) {
            const Shape shape = t.at("shape").get<Shape>();
            const auto offset = t.at("offset").get<std::size_t>();
            const auto length = t.at("length").get<std::size_t>();
            if (length != shape_size(shape) * 8 || offset > payload.size() || length > payload.size() - offset)
                throw FormatError("checkpoint: tensor '" + t.at("id").get<std::string>() + "' directory entry at offset " +
                                  std::to_string(offset) + " is inconsistent");
            std::vector<double> values(shape_size(shape));
            for (std::size_t i = 0; i < values.size(); ++i) values[i] = get_real(payload, offset + 8 * i);
            model.params.emplace(t.at("id").get<std::string>(), Tensor(shape, std::move(values)));
        }
    } catch (const json::exception& e) {
        throw FormatError(std::string("checkpoint: malformed header: ") + e.what());
    }
    try {
        validate_model(model);
    } catch (const ConfigError& e) {
        throw FormatError(std::string("checkpoint: ") + e.what());
    }
    return model;
}

std::string read_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw InputError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_file(const std::filesystem::path& path, std::string_view bytes) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw InputError("cannot write " + tmp.string());
        out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
        if (!out) throw InputError("write failed: " + tmp.string());
    }
    std::filesystem::rename(tmp, path);
}

void save_checkpoint(const ModelGraph& model, const std::filesystem::path& path) {
    write_file(path, encode_checkpoint(model));
}

ModelGraph load_checkpoint(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    try {
        return decode_checkpoint(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

std::string encode_tensor(const Tensor& t) {
    if (!t.is_real()) throw TypeError("raw tensor: only real64 tensors are supported");
    std::string out(kTensorMagic);
    put_le<std::uint32_t>(out, static_cast<std::uint32_t>(t.rank()));
    for (std::size_t d : t.shape()) put_le<std::uint64_t>(out, d);
    for (double v : t.values()) put_real(out, v);
    return out;
}

Tensor decode_tensor(std::string_view bytes) {
    const std::size_t m = kTensorMagic.size();
    require_bytes(bytes, m + 4, "raw tensor");
    if (bytes.substr(0, m) != kTensorMagic) throw FormatError("raw tensor: bad magic at byte 0");
    const auto rank = get_le<std::uint32_t>(bytes, m);
    if (rank > 8) throw FormatError("raw tensor: implausible rank " + std::to_string(rank) + " at byte " + std::to_string(m));
    require_bytes(bytes, m + 4 + 8 * std::size_t{rank}, "raw tensor");
    Shape shape(rank);
    std::size_t count = 1;
    for (std::uint32_t i = 0; i < rank; ++i) {
        shape[i] = get_le<std::uint64_t>(bytes, m + 4 + 8 * i);
        if (shape[i] > (std::size_t{1} << 32)) throw FormatError("raw tensor: dimension too large at byte " + std::to_string(m + 4 + 8 * i));
        count *= shape[i];
    }
    const std::size_t start = m + 4 + 8 * std::size_t{rank};
    if (bytes.size() != start + 8 * count)
        throw FormatError("raw tensor: payload at byte " + std::to_string(start) + " has " +
                          std::to_string(bytes.size() - start) + " bytes, expected " + std::to_string(8 * count));
    std::vector<double> values(count);
    for (std::size_t i = 0; i < count; ++i) values[i] = get_real(bytes, start + 8 * i);
    return Tensor(shape, std::move(values));
}

void save_tensor(const Tensor& t, const std::filesystem::path& path) { write_file(path, encode_tensor(t)); }

Tensor load_tensor(const std::filesystem::path& path) {
    const std::string bytes = read_file(path);
    try {
        return decode_tensor(bytes);
    } catch (const FormatError& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

}  // namespace oiqa
