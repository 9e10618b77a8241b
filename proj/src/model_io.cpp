#include <bit>
#include <cstring>
#include <fstream>
#include <sstream>

#include "ildnet/model.hpp"
#include "ildnet/parse.hpp"

namespace ildnet {

namespace {

constexpr const char* kMagic = "ILDNET-CKPT";
constexpr const char* kVersion = "v1";

void append_f32le(std::vector<unsigned char>& buf, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    buf.push_back(static_cast<unsigned char>(bits & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 8) & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 16) & 0xff));
    buf.push_back(static_cast<unsigned char>((bits >> 24) & 0xff));
}

float read_f32le(const unsigned char* p) {
    std::uint32_t bits = static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
                         (static_cast<std::uint32_t>(p[2]) << 16) |
                         (static_cast<std::uint32_t>(p[3]) << 24);
    if constexpr (std::endian::native == std::endian::big) bits = __builtin_bswap32(bits);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

}  // namespace

void save_checkpoint(NetworkF& net, const CheckpointMeta& meta, const std::string& path) {
    const ArchitectureSpec& spec = net.spec();
    std::ostringstream header;
    header << kMagic << " " << kVersion << "\n";
    header << "arch.blocks " << format_blocks(spec.conv_blocks) << "\n";
    header << "arch.dense " << format_size_list(spec.dense_units) << "\n";
    header << "arch.dropout " << format_double_list(spec.dropout_rates) << "\n";
    header << "arch.classes " << spec.num_classes << "\n";
    header << "arch.input " << spec.input_height << "x" << spec.input_width << "x"
           << spec.input_channels << "\n";
    header << "seed " << meta.seed << "\n";
    header << "epoch " << meta.epoch << "\n";
    header << "config_hash " << (meta.config_hash.empty() ? "-" : meta.config_hash) << "\n";

    std::vector<unsigned char> payload;
    for (auto& blob : net.parameter_blobs()) {
        std::size_t n = 0;
        for (const TensorF* t : blob.tensors) n += t->size();
        header << "blob " << blob.name << " " << n << "\n";
        for (const TensorF* t : blob.tensors)
            for (std::size_t i = 0; i < t->size(); ++i) append_f32le(payload, (*t)[i]);
    }
    header << "payload f32le " << payload.size() / 4 << "\n";

    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError(path + ": cannot open checkpoint for writing");
    const std::string head = header.str();
    out.write(head.data(), static_cast<std::streamsize>(head.size()));
    out.write(reinterpret_cast<const char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (!out) throw DataError(path + ": failed writing checkpoint");
}

Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw DataError(path + ": cannot open checkpoint");

    std::string line;
    if (!std::getline(in, line)) throw DataError(path + ": empty file");
    {
        std::istringstream first(line);
        std::string magic, version;
        first >> magic >> version;
        if (magic != kMagic) throw DataError(path + ": not a checkpoint file");
        if (version != kVersion)
            throw DataError(path + ": unsupported checkpoint version '" + version + "'");
    }

    ArchitectureSpec spec;
    CheckpointMeta meta;
    std::vector<std::pair<std::string, std::size_t>> blobs;
    std::size_t payload_floats = 0;
    bool saw_payload = false;
    while (!saw_payload && std::getline(in, line)) {
        std::istringstream ss(line);
        std::string key;
        ss >> key;
        std::string rest;
        ss >> rest;
        if (key == "arch.blocks") spec.conv_blocks = parse_blocks(rest, path);
        else if (key == "arch.dense") spec.dense_units = parse_size_list(rest, path);
        else if (key == "arch.dropout") spec.dropout_rates = parse_double_list(rest, path);
        else if (key == "arch.classes") spec.num_classes = parse_u64(rest, path);
        else if (key == "arch.input") {
            const std::vector<std::string> dims = split_list(rest, 'x');
            if (dims.size() != 3) throw DataError(path + ": bad input shape '" + rest + "'");
            spec.input_height = parse_u64(dims[0], path);
            spec.input_width = parse_u64(dims[1], path);
            spec.input_channels = parse_u64(dims[2], path);
        } else if (key == "seed") meta.seed = parse_u64(rest, path);
        else if (key == "epoch") meta.epoch = parse_u64(rest, path);
        else if (key == "config_hash") meta.config_hash = rest == "-" ? "" : rest;
        else if (key == "blob") {
            std::string count;
            ss >> count;
            blobs.emplace_back(rest, parse_u64(count, path));
        } else if (key == "payload") {
            std::string count;
            ss >> count;
            if (rest != "f32le") throw DataError(path + ": unsupported payload encoding '" + rest + "'");
            payload_floats = parse_u64(count, path);
            saw_payload = true;
        } else {
            throw DataError(path + ": unrecognized header line '" + line + "'");
        }
    }
    if (!saw_payload) throw DataError(path + ": header ends without a payload line");

    Checkpoint ckpt;
    try {
        ckpt.net = NetworkF::build(spec, meta.seed);
    } catch (const ConfigError& e) {
        throw DataError(path + ": invalid architecture: " + e.what());
    }
    ckpt.meta = meta;

    std::vector<typename NetworkF::LayerBlob> net_blobs = ckpt.net.parameter_blobs();
    if (net_blobs.size() != blobs.size())
        throw DataError(path + ": payload lists " + std::to_string(blobs.size()) + " layers, network has " +
                        std::to_string(net_blobs.size()));
    std::size_t expected_floats = 0;
    for (std::size_t i = 0; i < blobs.size(); ++i) {
        std::size_t n = 0;
        for (const TensorF* t : net_blobs[i].tensors) n += t->size();
        if (net_blobs[i].name != blobs[i].first || n != blobs[i].second)
            throw DataError(path + ": blob '" + blobs[i].first + "' holds " +
                            std::to_string(blobs[i].second) + " values, layer '" + net_blobs[i].name +
                            "' needs " + std::to_string(n));
        expected_floats += n;
    }
    if (payload_floats != expected_floats)
        throw DataError(path + ": payload declares " + std::to_string(payload_floats) +
                        " values, layers need " + std::to_string(expected_floats));

    std::vector<unsigned char> payload(payload_floats * 4);
    in.read(reinterpret_cast<char*>(payload.data()), static_cast<std::streamsize>(payload.size()));
    if (static_cast<std::size_t>(in.gcount()) != payload.size())
        throw DataError(path + ": truncated payload");
    if (in.get() != EOF) throw DataError(path + ": trailing bytes after payload");

    const unsigned char* p = payload.data();
    for (auto& blob : net_blobs)
        for (TensorF* t : blob.tensors)
            for (std::size_t i = 0; i < t->size(); ++i, p += 4) (*t)[i] = read_f32le(p);
    return ckpt;
}

}  // namespace ildnet
