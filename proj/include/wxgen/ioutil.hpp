#pragma once

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <vector>

namespace wxgen {

// Little-endian byte appenders for the binary file formats.
void put_u32(std::vector<std::byte>& out, uint32_t v);
void put_u8(std::vector<std::byte>& out, uint8_t v);
void put_f32(std::vector<std::byte>& out, float v);
void put_bytes(std::vector<std::byte>& out, const void* data, size_t n);

// Cursor-based readers; each throws IoError on a short buffer.
class ByteReader {
public:
    ByteReader(std::span<const std::byte> buf, std::string source)
        : buf_(buf), source_(std::move(source)) {}

    uint32_t u32();
    uint8_t u8();
    float f32();
    std::string str(size_t n);
    void raw(void* dst, size_t n);
    size_t remaining() const { return buf_.size() - pos_; }
    const std::string& source() const { return source_; }

private:
    void need(size_t n) const;
    std::span<const std::byte> buf_;
    size_t pos_ = 0;
    std::string source_;
};

std::vector<std::byte> read_file_bytes(const std::filesystem::path& path);

// Writes to "<path>.tmp" then renames, so readers never observe a partial file.
void write_file_atomic(const std::filesystem::path& path, std::span<const std::byte> bytes);
void write_file_atomic(const std::filesystem::path& path, const std::string& text);

// FNV-1a 64-bit digest, used for file provenance (not security).
uint64_t fnv1a64(std::span<const std::byte> bytes);
std::string fnv1a64_hex(std::span<const std::byte> bytes);
std::string file_digest_hex(const std::filesystem::path& path);

// Full-precision float formatting: shortest text that parses back exactly.
std::string format_double(double v);

}  // namespace wxgen
