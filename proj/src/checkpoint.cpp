#include "gpas/checkpoint.hpp"

#include <algorithm>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <set>
#include <sstream>

#include "gpas/errors.hpp"

namespace gpas {

namespace {

constexpr std::string_view kEndHeader = "end-header";
constexpr std::string_view kStatePrefix = "optimizer/";

void write_block(std::ostream &out, const std::string &name, const ad::Parameter &p) {
    out << "block " << name << ' ' << p.shape.rows << ' ' << p.shape.cols << '\n';
    std::vector<unsigned char> bytes(p.value.size() * 8);
    for (std::size_t i = 0; i < p.value.size(); ++i) {
        const auto bits = std::bit_cast<std::uint64_t>(p.value[i]);
        for (int b = 0; b < 8; ++b) bytes[i * 8 + b] = static_cast<unsigned char>(bits >> (8 * b));
    }
    out.write(reinterpret_cast<const char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
}

} // namespace

void save_checkpoint(const std::filesystem::path &path, const ModelConfig &config, const ModelParams &params,
                     const kv::Pairs &extra, const BlockList &state_blocks) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw Error("cannot write checkpoint " + path.string());
    out << kCheckpointMagic << ' ' << kCheckpointVersion << '\n';
    out << kv::format(config.to_pairs()) << kv::format(extra) << kEndHeader << '\n';
    for (const auto &[name, p] : params.named()) write_block(out, name, *p);
    for (const auto &[name, p] : state_blocks) {
        if (!name.starts_with(kStatePrefix)) throw SchemaError("state block '" + name + "' lacks the optimizer/ prefix");
        write_block(out, name, *p);
    }
    if (!out) throw Error("failed writing checkpoint " + path.string());
}

Checkpoint load_checkpoint(const std::filesystem::path &path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw SchemaError("cannot open checkpoint " + path.string());
    std::string line;
    if (!std::getline(in, line) || line != std::string(kCheckpointMagic) + " " + std::to_string(kCheckpointVersion))
        throw SchemaError("not a version " + std::to_string(kCheckpointVersion) + " checkpoint: " + path.string());

    std::ostringstream header;
    bool closed = false;
    while (std::getline(in, line)) {
        if (line == kEndHeader) {
            closed = true;
            break;
        }
        header << line << '\n';
    }
    if (!closed) throw SchemaError("checkpoint header is not terminated");
    std::istringstream hs(header.str());
    const kv::Pairs pairs = kv::parse(hs);

    Checkpoint ck;
    const auto unknown = ck.config.apply(pairs);
    ck.extra.clear();
    for (const auto &kvp : pairs)
        if (std::find(unknown.begin(), unknown.end(), kvp.first) != unknown.end()) ck.extra.push_back(kvp);
    try {
        ck.params = ModelParams::zeros(ck.config);
    } catch (const ConfigError &e) {
        throw SchemaError(std::string("checkpoint config is invalid: ") + e.what());
    }

    std::map<std::string, ad::Parameter *> expected;
    for (auto &np : ck.params.named()) expected.emplace(np.name, np.param);
    std::set<std::string> seen;

    while (std::getline(in, line)) {
        std::istringstream ls(line);
        std::string tag, name;
        std::size_t rows = 0, cols = 0;
        if (!(ls >> tag >> name >> rows >> cols) || tag != "block")
            throw SchemaError("malformed block header '" + line + "'");
        if (!seen.insert(name).second) throw SchemaError("duplicate block '" + name + "'");

        ad::Parameter *dest = nullptr;
        if (auto it = expected.find(name); it != expected.end()) {
            dest = it->second;
            if (dest->shape != ad::Shape{rows, cols})
                throw SchemaError("block '" + name + "' has shape " + ad::Shape{rows, cols}.str() + ", expected " +
                                  dest->shape.str());
        } else if (name.starts_with(kStatePrefix)) {
            dest = &ck.state.emplace(name, ad::Parameter({rows, cols})).first->second;
        } else {
            throw SchemaError("unexpected block '" + name + "'");
        }

        std::vector<unsigned char> bytes(rows * cols * 8);
        in.read(reinterpret_cast<char *>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
        if (static_cast<std::size_t>(in.gcount()) != bytes.size())
            throw SchemaError("checkpoint truncated inside block '" + name + "'");
        for (std::size_t i = 0; i < rows * cols; ++i) {
            std::uint64_t bits = 0;
            for (int b = 0; b < 8; ++b) bits |= static_cast<std::uint64_t>(bytes[i * 8 + b]) << (8 * b);
            dest->value[i] = std::bit_cast<double>(bits);
        }
    }
    for (const auto &[name, p] : expected)
        if (!seen.contains(name)) throw SchemaError("checkpoint is missing block '" + name + "'");
    return ck;
}

} // namespace gpas
