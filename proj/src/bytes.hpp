#pragma once

// Little-endian packing and checked unpacking shared by the binary formats.

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "flowlens/errors.hpp"

namespace flowlens::detail {

inline void put_u32le(std::string& out, std::uint32_t v) {
    out.push_back(static_cast<char>(v & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 24) & 0xff));
}

inline void put_f64le(std::string& out, double v) {
    std::uint64_t bits = std::bit_cast<std::uint64_t>(v);
    for (int i = 0; i < 8; ++i) out.push_back(static_cast<char>((bits >> (8 * i)) & 0xff));
}

inline void write_bytes(const std::filesystem::path& path, const std::string& bytes) {
    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + path.string() + "' for writing");
    f.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write failed for '" + path.string() + "'");
}

inline std::string read_bytes(const std::filesystem::path& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("cannot open '" + path.string() + "' for reading");
    std::ostringstream buf;
    buf << f.rdbuf();
    return std::move(buf).str();
}

class ByteReader {
public:
    ByteReader(std::string data, std::filesystem::path path)
        : data_(std::move(data)), path_(std::move(path)) {}

    std::uint8_t u8(const char* field) {
        need(1, field);
        return static_cast<std::uint8_t>(data_[pos_++]);
    }

    std::uint32_t u32le(const char* field) {
        need(4, field);
        std::uint32_t v = 0;
        for (int i = 0; i < 4; ++i) {
            v |= static_cast<std::uint32_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 4;
        return v;
    }

    double f64le(const char* field) {
        need(8, field);
        std::uint64_t bits = 0;
        for (int i = 0; i < 8; ++i) {
            bits |= static_cast<std::uint64_t>(static_cast<std::uint8_t>(data_[pos_ + i])) << (8 * i);
        }
        pos_ += 8;
        return std::bit_cast<double>(bits);
    }

    void expect_magic(const char* magic, std::size_t len) {
        need(len, "magic");
        if (std::memcmp(data_.data() + pos_, magic, len) != 0) {
            throw FormatError("bad magic in '" + path_.string() + "'");
        }
        pos_ += len;
    }

    void expect_end() {
        if (pos_ != data_.size()) {
            throw FormatError("trailing bytes after payload in '" + path_.string() + "'");
        }
    }

    const std::filesystem::path& path() const { return path_; }

private:
    void need(std::size_t n, const char* field) {
        if (pos_ + n > data_.size()) {
            throw FormatError("truncated file '" + path_.string() + "': " + field);
        }
    }

    std::string data_;
    std::filesystem::path path_;
    std::size_t pos_ = 0;
};

} // namespace flowlens::detail
