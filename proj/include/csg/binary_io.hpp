// SPDX-License-Identifier: Apache-2.0
#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace csg::io {

/// Little-endian byte sink backed by memory; flushed to disk in one write.
class Writer {
public:
    void bytes(std::string_view raw);
    void u32(std::uint32_t v);
    void u64(std::uint64_t v);
    void f64(double v);
    void f64s(std::span<const double> v);
    void u32s(std::span<const std::uint32_t> v);

    const std::vector<std::uint8_t>& buffer() const { return buf_; }
    void save(const std::filesystem::path& path) const;

private:
    std::vector<std::uint8_t> buf_;
};

/// Bounds-checked little-endian reader; short reads raise ErrorKind::truncated.
class Reader {
public:
    explicit Reader(std::vector<std::uint8_t> data) : buf_(std::move(data)) {}
    static Reader open(const std::filesystem::path& path);

    std::string bytes(std::size_t n);
    std::uint32_t u32();
    std::uint64_t u64();
    double f64();
    void f64s(std::span<double> out);
    void u32s(std::span<std::uint32_t> out);

    std::size_t remaining() const { return buf_.size() - pos_; }
    std::size_t position() const { return pos_; }
    const std::vector<std::uint8_t>& buffer() const { return buf_; }

private:
    void need(std::size_t n) const;

    std::vector<std::uint8_t> buf_;
    std::size_t pos_ = 0;
};

/// FNV-1a 64-bit over a byte range.
std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t h = 0xcbf29ce484222325ULL);

/// Full-precision decimal rendering of a double (round-trips exactly).
std::string format_double(double v);

}  // namespace csg::io
