#include "fedmmx/snapshot.hpp"

#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include <json.hpp>

namespace fedmmx {

namespace {

void write_le_doubles(std::ofstream& out, const std::vector<double>& values) {
    for (const double v : values) {
        std::uint64_t bits;
        std::memcpy(&bits, &v, sizeof(bits));
        char bytes[8];
        for (int i = 0; i < 8; ++i) bytes[i] = static_cast<char>((bits >> (8 * i)) & 0xff);
        out.write(bytes, 8);
    }
}

std::vector<double> read_le_doubles(std::ifstream& in, std::size_t count) {
    std::vector<double> values(count);
    for (auto& v : values) {
        char bytes[8];
        in.read(bytes, 8);
        if (!in) throw std::runtime_error("load_params: truncated parameter data");
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<unsigned char>(bytes[i])) << (8 * i);
        }
        std::memcpy(&v, &bits, sizeof(v));
    }
    return values;
}

}  // namespace

void save_params(const NamParams& params, const std::string& path) {
    const auto& layout = params.layout();
    nlohmann::ordered_json header;
    header["format"] = "fedmmx-nam";
    header["version"] = 1;
    header["modalities"] = nlohmann::ordered_json::array();
    for (const auto& m : layout.modalities) {
        header["modalities"].push_back({{"id", m.id}, {"dim", m.dim}});
    }
    header["hidden"] = layout.hidden;
    header["classes"] = layout.classes;
    header["count"] = layout.total_size();

    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("save_params: cannot open '" + path + "'");
    out << header.dump() << '\n';
    write_le_doubles(out, params.flatten());
    if (!out) throw std::runtime_error("save_params: write failed for '" + path + "'");
}

NamParams load_params(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw std::runtime_error("load_params: cannot open '" + path + "'");
    std::string header_line;
    if (!std::getline(in, header_line))
        throw std::runtime_error("load_params: missing header line");
    const auto header = nlohmann::json::parse(header_line);
    if (header.at("format").get<std::string>() != "fedmmx-nam")
        throw std::runtime_error("load_params: unexpected format tag");
    if (header.at("version").get<int>() != 1)
        throw std::runtime_error("load_params: unsupported version");

    NamLayout layout;
    for (const auto& m : header.at("modalities")) {
        layout.modalities.push_back({m.at("id").get<std::string>(), m.at("dim").get<int>()});
    }
    layout.hidden = header.at("hidden").get<int>();
    layout.classes = header.at("classes").get<int>();
    const auto count = header.at("count").get<std::size_t>();
    if (count != layout.total_size())
        throw std::runtime_error("load_params: count does not match layout");

    const auto flat = read_le_doubles(in, count);
    return NamParams::unflatten(layout, flat);
}

}  // namespace fedmmx
