#pragma once

#include <bit>
#include <cstdint>
#include <cstddef>
#include <cstring>
#include <fstream>
#include <iterator>
#include <map>
#include <stdexcept>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "mvpl/tensorlab/tensor.hpp"

namespace mvpl::container {

using json = nlohmann::json;
using tensorlab::Shape;
using tensorlab::Tensor;

inline constexpr char kMagic[4] = {'M', 'V', 'P', 'L'};
inline constexpr std::uint32_t kVersion = 1;

enum class ErrorCode { io, bad_magic, bad_version, truncated, bad_header };

inline std::string_view error_name(ErrorCode c) {
    switch (c) {
        case ErrorCode::io: return "io";
        case ErrorCode::bad_magic: return "bad_magic";
        case ErrorCode::bad_version: return "bad_version";
        case ErrorCode::truncated: return "truncated";
        case ErrorCode::bad_header: return "bad_header";
    }
    return "?";
}

class ContainerError : public std::runtime_error {
   public:
    ContainerError(ErrorCode code, const std::string& what)
        : std::runtime_error("container " + std::string(error_name(code)) + ": " + what), code_(code) {}
    ErrorCode code() const noexcept { return code_; }

   private:
    ErrorCode code_;
};

/// Named float64 tensors plus a free-form JSON header.
struct Container {
    json header = json::object();
    std::map<std::string, Tensor> blocks;
};

namespace detail {

template <class T>
void put_le(std::string& out, T v) {
    for (std::size_t i = 0; i < sizeof(T); ++i) out.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

template <class T>
T get_le(const char* p) {
    T v = 0;
    for (std::size_t i = 0; i < sizeof(T); ++i) v |= static_cast<T>(static_cast<unsigned char>(p[i])) << (8 * i);
    return v;
}

inline void put_double(std::string& out, double d) { put_le(out, std::bit_cast<std::uint64_t>(d)); }

}  // namespace detail

/// Layout: "MVPL", u32 version, u64 header length, header JSON, then the
/// blocks as little-endian float64 at the offsets listed under "blocks".
inline std::string serialize(const Container& c) {
    json header = c.header;
    json index = json::array();
    std::uint64_t offset = 0;
    for (const auto& [name, t] : c.blocks) {
        index.push_back({{"name", name}, {"shape", t.shape()}, {"offset", offset}});
        offset += t.size() * sizeof(double);
    }
    header["blocks"] = index;
    const std::string text = header.dump();
    std::string out(kMagic, 4);
    detail::put_le(out, kVersion);
    detail::put_le(out, static_cast<std::uint64_t>(text.size()));
    out += text;
    out.reserve(out.size() + offset);
    for (const auto& [name, t] : c.blocks)
        for (double v : t.values()) detail::put_double(out, v);
    return out;
}

inline Container deserialize(std::string_view bytes) {
    if (bytes.size() < 4) throw ContainerError(ErrorCode::truncated, "file shorter than the magic");
    if (std::memcmp(bytes.data(), kMagic, 4) != 0) throw ContainerError(ErrorCode::bad_magic, "not an MVPL container");
    if (bytes.size() < 16) throw ContainerError(ErrorCode::truncated, "incomplete preamble");
    const auto version = detail::get_le<std::uint32_t>(bytes.data() + 4);
    if (version != kVersion)
        throw ContainerError(ErrorCode::bad_version, "version " + std::to_string(version) + " is not supported");
    const auto header_len = detail::get_le<std::uint64_t>(bytes.data() + 8);
    if (header_len > bytes.size() - 16) throw ContainerError(ErrorCode::truncated, "header extends past end of file");
    Container c;
    try {
        c.header = json::parse(bytes.substr(16, header_len));
    } catch (const json::exception& e) {
        throw ContainerError(ErrorCode::bad_header, e.what());
    }
    const std::string_view payload = bytes.substr(16 + header_len);
    try {
        for (const json& b : c.header.at("blocks")) {
            const Shape shape = b.at("shape").get<Shape>();
            const std::uint64_t offset = b.at("offset").get<std::uint64_t>();
            const std::size_t n = tensorlab::element_count(shape);
            if (offset > payload.size() || n * sizeof(double) > payload.size() - offset)
                throw ContainerError(ErrorCode::truncated, "block '" + b.at("name").get<std::string>() + "' is cut short");
            std::vector<double> values(n);
            for (std::size_t i = 0; i < n; ++i)
                values[i] = std::bit_cast<double>(detail::get_le<std::uint64_t>(payload.data() + offset + 8 * i));
            c.blocks.emplace(b.at("name").get<std::string>(), Tensor(shape, std::move(values)));
        }
    } catch (const json::exception& e) {
        throw ContainerError(ErrorCode::bad_header, e.what());
    } catch (const std::invalid_argument& e) {
        throw ContainerError(ErrorCode::bad_header, e.what());
    }
    c.header.erase("blocks");
    return c;
}

inline void write_file(const std::string& path, const Container& c) {
    const std::string bytes = serialize(c);
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ContainerError(ErrorCode::io, "cannot open '" + path + "' for writing");
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw ContainerError(ErrorCode::io, "write to '" + path + "' failed");
}

inline std::string read_bytes(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ContainerError(ErrorCode::io, "cannot open '" + path + "'");
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

inline Container read_file(const std::string& path) { return deserialize(read_bytes(path)); }

}  // namespace mvpl::container
