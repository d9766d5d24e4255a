// SPDX-License-Identifier: Apache-2.0
#include "csg/binary_io.hpp"

#include "csg/errors.hpp"

#include <bit>
#include <cstdio>
#include <fstream>
#include <iterator>

namespace csg::io {

void Writer::bytes(std::string_view raw) {
    buf_.insert(buf_.end(), raw.begin(), raw.end());
}

void Writer::u32(std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::u64(std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf_.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void Writer::f64(double v) { u64(std::bit_cast<std::uint64_t>(v)); }

void Writer::f64s(std::span<const double> v) {
    buf_.reserve(buf_.size() + 8 * v.size());
    for (double d : v) f64(d);
}

void Writer::u32s(std::span<const std::uint32_t> v) {
    buf_.reserve(buf_.size() + 4 * v.size());
    for (auto x : v) u32(x);
}

void Writer::save(const std::filesystem::path& path) const {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) fail(ErrorKind::io, "cannot open for writing: " + path.string());
    out.write(reinterpret_cast<const char*>(buf_.data()), static_cast<std::streamsize>(buf_.size()));
    if (!out) fail(ErrorKind::io, "write failed: " + path.string());
}

Reader Reader::open(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) fail(ErrorKind::io, "cannot open for reading: " + path.string());
    std::vector<std::uint8_t> data((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    return Reader(std::move(data));
}

void Reader::need(std::size_t n) const {
    if (buf_.size() - pos_ < n)
        fail(ErrorKind::truncated, "needed " + std::to_string(n) + " bytes at offset " +
                                       std::to_string(pos_) + ", have " + std::to_string(buf_.size() - pos_));
}

std::string Reader::bytes(std::size_t n) {
    need(n);
    std::string s(buf_.begin() + static_cast<std::ptrdiff_t>(pos_),
                  buf_.begin() + static_cast<std::ptrdiff_t>(pos_ + n));
    pos_ += n;
    return s;
}

std::uint32_t Reader::u32() {
    need(4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 4;
    return v;
}

std::uint64_t Reader::u64() {
    need(8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(buf_[pos_ + i]) << (8 * i);
    pos_ += 8;
    return v;
}

double Reader::f64() { return std::bit_cast<double>(u64()); }

void Reader::f64s(std::span<double> out) {
    need(8 * out.size());
    for (auto& d : out) d = f64();
}

void Reader::u32s(std::span<std::uint32_t> out) {
    need(4 * out.size());
    for (auto& x : out) x = u32();
}

std::uint64_t fnv1a(std::span<const std::uint8_t> data, std::uint64_t h) {
    for (auto b : data) {
        h ^= b;
        h *= 0x100000001b3ULL;
    }
    return h;
}

std::string format_double(double v) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", v);
    return buf;
}

}  // namespace csg::io
