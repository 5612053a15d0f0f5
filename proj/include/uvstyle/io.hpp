/**
 * @file io.hpp
 * @brief Little-endian byte streams, file helpers and content hashing
 */
#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <sstream>
#include <string>
#include <string_view>
#include <vector>

#include "uvstyle/errors.hpp"

namespace uvstyle {

static_assert(std::endian::native == std::endian::little,
              "binary formats are written in host order and assume a little-endian host");

using Bytes = std::vector<std::uint8_t>;

class ByteWriter {
public:
    void magic(std::string_view m) { raw(m.data(), m.size()); }
    void u32(std::uint32_t v) { raw(&v, sizeof v); }
    void u64(std::uint64_t v) { raw(&v, sizeof v); }
    void f32(float v) { raw(&v, sizeof v); }
    void f64(double v) { raw(&v, sizeof v); }
    void str(std::string_view s) {
        u32(static_cast<std::uint32_t>(s.size()));
        raw(s.data(), s.size());
    }
    void raw(const void* p, std::size_t n) {
        const auto* b = static_cast<const std::uint8_t*>(p);
        buf_.insert(buf_.end(), b, b + n);
    }
    const Bytes& bytes() const& { return buf_; }
    Bytes bytes() && { return std::move(buf_); }

private:
    Bytes buf_;
};

/// Reads fields in order, reporting the failing byte offset on truncation.
class ByteReader {
public:
    explicit ByteReader(const Bytes& b) : data_(b.data()), size_(b.size()) {}
    ByteReader(const std::uint8_t* p, std::size_t n) : data_(p), size_(n) {}

    void expect_magic(std::string_view m) {
        need(m.size(), "magic");
        if (std::memcmp(data_ + pos_, m.data(), m.size()) != 0)
            throw ParseError("bad magic at byte offset " + std::to_string(pos_) + ": expected \"" +
                             std::string(m) + "\"");
        pos_ += m.size();
    }
    std::uint32_t u32(const char* field) { return pod<std::uint32_t>(field); }
    std::uint64_t u64(const char* field) { return pod<std::uint64_t>(field); }
    float f32(const char* field) { return pod<float>(field); }
    double f64(const char* field) { return pod<double>(field); }
    std::string str(const char* field) {
        const auto n = u32(field);
        need(n, field);
        std::string s(reinterpret_cast<const char*>(data_ + pos_), n);
        pos_ += n;
        return s;
    }
    void read_f32(float* out, std::size_t count, const char* field) {
        need(count * sizeof(float), field);
        std::memcpy(out, data_ + pos_, count * sizeof(float));
        pos_ += count * sizeof(float);
    }

    std::size_t offset() const { return pos_; }
    std::size_t remaining() const { return size_ - pos_; }
    void expect_end() const {
        if (pos_ != size_)
            throw ParseError("trailing bytes at byte offset " + std::to_string(pos_));
    }

private:
    template <class T>
    T pod(const char* field) {
        need(sizeof(T), field);
        T v;
        std::memcpy(&v, data_ + pos_, sizeof(T));
        pos_ += sizeof(T);
        return v;
    }
    void need(std::size_t n, const char* field) const {
        if (size_ - pos_ < n)
            throw ParseError("unexpected end of input at byte offset " + std::to_string(pos_) +
                             " while reading " + field);
    }

    const std::uint8_t* data_;
    std::size_t size_;
    std::size_t pos_ = 0;
};

inline Bytes read_file(const std::filesystem::path& p) {
    std::ifstream in(p, std::ios::binary);
    if (!in) throw Error("cannot open " + p.string());
    return Bytes(std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>());
}

inline void write_file(const std::filesystem::path& p, const Bytes& b) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out.write(reinterpret_cast<const char*>(b.data()), static_cast<std::streamsize>(b.size()));
}

inline void write_text(const std::filesystem::path& p, const std::string& s) {
    std::ofstream out(p, std::ios::binary | std::ios::trunc);
    if (!out) throw Error("cannot write " + p.string());
    out << s;
}

inline std::string read_text(const std::filesystem::path& p) {
    const auto b = read_file(p);
    return std::string(b.begin(), b.end());
}

/// FNV-1a, 64-bit.
inline std::uint64_t fnv1a(const void* p, std::size_t n, std::uint64_t h = 0xcbf29ce484222325ULL) {
    const auto* b = static_cast<const std::uint8_t*>(p);
    for (std::size_t i = 0; i < n; ++i) {
        h ^= b[i];
        h *= 0x100000001b3ULL;
    }
    return h;
}

inline std::string hex64(std::uint64_t v) {
    std::ostringstream os;
    os << std::hex << std::setw(16) << std::setfill('0') << v;
    return os.str();
}

/// splitmix64 finalizer; used to derive order-independent child seeds.
inline std::uint64_t mix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

inline std::uint64_t derive_seed(std::uint64_t base, std::string_view tag) {
    return mix64(base ^ fnv1a(tag.data(), tag.size()));
}

}  // namespace uvstyle
