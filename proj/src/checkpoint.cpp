// SPDX-License-Identifier: Apache-2.0
#include "dfpo/checkpoint.hpp"

#include <chrono>
#include <ctime>
#include <fstream>
#include <sstream>

#include "dfpo/binary_io.hpp"
#include "dfpo/error.hpp"

namespace dfpo {

namespace {

constexpr char kMagic[] = "DFPO1\n";
constexpr std::size_t kMagicLen = sizeof kMagic - 1;
constexpr std::uint64_t kMaxHeader = 1u << 20;

std::string utc_now()
{
    const auto t = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
    std::tm tm{};
    gmtime_r(&t, &tm);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
    return buf;
}

const std::string& lookup(const ConfigEntries& header, const std::string& key, const std::string& path)
{
    for (const auto& [k, v] : header)
        if (k == key) return v;
    throw ChecksumError(path + ": header is missing " + key);
}

bool is_meta(const std::string& key)
{
    return key.rfind("ckpt.", 0) == 0;
}

}  // namespace

std::string render_shapes(const std::vector<std::vector<std::size_t>>& shapes)
{
    std::string out;
    for (std::size_t i = 0; i < shapes.size(); ++i) {
        if (i) out += ';';
        for (std::size_t j = 0; j < shapes[i].size(); ++j) {
            if (j) out += 'x';
            out += std::to_string(shapes[i][j]);
        }
    }
    return out;
}

std::vector<std::vector<std::size_t>> parse_shapes(const std::string& text)
{
    std::vector<std::vector<std::size_t>> out;
    std::stringstream blocks(text);
    std::string block;
    while (std::getline(blocks, block, ';')) {
        std::vector<std::size_t> dims;
        std::stringstream ds(block);
        std::string d;
        while (std::getline(ds, d, 'x')) {
            std::size_t pos = 0;
            unsigned long long v = 0;
            try {
                v = std::stoull(d, &pos);
            } catch (const std::exception&) {
                pos = std::string::npos;
            }
            if (pos != d.size() || v == 0) throw ShapeError("malformed shape '" + block + "'");
            dims.push_back(static_cast<std::size_t>(v));
        }
        if (dims.empty() || dims.size() > 2) throw ShapeError("malformed shape '" + block + "'");
        out.push_back(std::move(dims));
    }
    return out;
}

RunConfig Checkpoint::config() const
{
    ConfigEntries echo;
    for (const auto& kv : header)
        if (!is_meta(kv.first)) echo.push_back(kv);
    return config_from_entries(echo, "checkpoint header");
}

Checkpoint make_checkpoint(const RunConfig& config, const ScoreNet& net, std::size_t stage, bool final)
{
    Checkpoint c;
    c.stage = stage;
    c.final = final;
    c.created = utc_now();
    c.net = net;
    c.header = config_entries(config);
    return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::string& path)
{
    ConfigEntries header;
    for (const auto& kv : ckpt.header)
        if (!is_meta(kv.first)) header.push_back(kv);
    header.emplace_back("ckpt.stage", std::to_string(ckpt.stage));
    header.emplace_back("ckpt.final", ckpt.final ? "true" : "false");
    header.emplace_back("ckpt.activation", to_string(ckpt.net.activation()));
    header.emplace_back("ckpt.shapes", render_shapes(ckpt.net.parameter_shapes()));
    header.emplace_back("ckpt.created", ckpt.created);
    const std::string text = render_entries(header);

    // write to a sibling and rename so a crash never leaves a half-written file
    const std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary | std::ios::trunc);
        if (!os) throw IoError("cannot open '" + tmp + "' for writing");
        os.write(kMagic, kMagicLen);
        binary::put_u64(os, text.size());
        os.write(text.data(), static_cast<std::streamsize>(text.size()));

        const auto params = ckpt.net.parameters();
        binary::Fnv1a hash;
        hash.update_u64(params.size());
        binary::put_u64(os, params.size());
        for (double v : params) {
            hash.update_u64(std::bit_cast<std::uint64_t>(v));
            binary::put_f64(os, v);
        }
        binary::put_u64(os, hash.digest());
        if (!os) throw IoError("write to '" + tmp + "' failed");
    }
    if (std::rename(tmp.c_str(), path.c_str()) != 0) throw IoError("cannot move checkpoint into '" + path + "'");
}

Checkpoint load_checkpoint(const std::string& path)
{
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("cannot open checkpoint '" + path + "'");
    char magic[kMagicLen] = {};
    if (!is.read(magic, kMagicLen) || std::string(magic, kMagicLen) != kMagic)
        throw ChecksumError(path + ": not a DFPO1 checkpoint");

    const auto header_len = binary::get_u64(is, path);
    if (header_len > kMaxHeader) throw ChecksumError(path + ": implausible header length");
    std::string text(header_len, '\0');
    if (!is.read(text.data(), static_cast<std::streamsize>(header_len)))
        throw ChecksumError(path + ": unexpected end of file in header");

    Checkpoint c;
    try {
        c.header = parse_entries(text, path);
    } catch (const ConfigError& e) {
        throw ChecksumError(std::string("corrupt header: ") + e.what());
    }
    const auto shapes = parse_shapes(lookup(c.header, "ckpt.shapes", path));
    Activation act{};
    try {
        act = parse_activation(lookup(c.header, "ckpt.activation", path));
        c.stage = std::stoull(lookup(c.header, "ckpt.stage", path));
    } catch (const ChecksumError&) {
        throw;
    } catch (const std::exception& e) {
        throw ChecksumError(path + ": corrupt header metadata: " + e.what());
    }
    c.created = lookup(c.header, "ckpt.created", path);
    c.final = lookup(c.header, "ckpt.final", path) == "true";

    // alternating W (out x in) and b (out) blocks ending in a scalar output
    if (shapes.size() < 2 || shapes.size() % 2 != 0) throw ShapeError(path + ": shape list has wrong block count");
    std::vector<std::size_t> widths{0};
    std::size_t declared = 0;
    for (std::size_t l = 0; l < shapes.size(); l += 2) {
        const auto& w = shapes[l];
        const auto& b = shapes[l + 1];
        if (w.size() != 2 || b.size() != 1 || b[0] != w[0])
            throw ShapeError(path + ": inconsistent layer " + std::to_string(l / 2));
        if (l == 0)
            widths[0] = w[1];
        else if (w[1] != widths.back())
            throw ShapeError(path + ": layer " + std::to_string(l / 2) + " input width does not chain");
        widths.push_back(w[0]);
        declared += w[0] * w[1] + b[0];
    }
    if (widths.back() != 1) throw ShapeError(path + ": output width must be 1");

    const auto count = binary::get_u64(is, path);
    if (count != declared)
        throw ShapeError(path + ": header shapes declare " + std::to_string(declared) + " parameters, block holds "
                         + std::to_string(count));

    c.net = ScoreNet(widths, act);
    auto params = c.net.parameters();
    binary::Fnv1a hash;
    hash.update_u64(count);
    for (auto& v : params) {
        const auto bits = binary::get_u64(is, path);
        hash.update_u64(bits);
        v = std::bit_cast<double>(bits);
    }
    const auto digest = binary::get_u64(is, path);
    if (digest != hash.digest()) throw ChecksumError(path + ": parameter checksum mismatch");
    if (is.peek() != std::char_traits<char>::eof()) throw ChecksumError(path + ": trailing bytes after checksum");

    RunConfig cfg;
    try {
        cfg = c.config();
    } catch (const ConfigError& e) {
        throw ChecksumError(path + ": corrupt config echo: " + e.what());
    }
    c.net.weight_bound = cfg.net.weight_bound;
    return c;
}

}  // namespace dfpo
