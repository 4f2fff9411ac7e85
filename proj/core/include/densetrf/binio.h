#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "densetrf/errors.h"

namespace dtrf::binio {

// Little-endian primitives for the DTRF binary formats. The in-memory
// representation on every supported target is little-endian already; memcpy
// keeps the aliasing rules happy.

inline void write_u16(std::ostream& os, uint16_t v) { os.write(reinterpret_cast<const char*>(&v), 2); }
inline void write_u32(std::ostream& os, uint32_t v) { os.write(reinterpret_cast<const char*>(&v), 4); }
inline void write_f32(std::ostream& os, float v) { os.write(reinterpret_cast<const char*>(&v), 4); }

inline uint16_t read_u16(std::istream& is) {
    uint16_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 2);
    if (!is) throw ParseError("unexpected end of file reading u16");
    return v;
}

inline uint32_t read_u32(std::istream& is) {
    uint32_t v = 0;
    is.read(reinterpret_cast<char*>(&v), 4);
    if (!is) throw ParseError("unexpected end of file reading u32");
    return v;
}

inline void write_magic(std::ostream& os, const char* magic) { os.write(magic, std::streamsize(std::strlen(magic))); }

inline void expect_magic(std::istream& is, const char* magic, const std::string& what) {
    size_t n = std::strlen(magic);
    std::vector<char> buf(n);
    is.read(buf.data(), std::streamsize(n));
    if (!is || std::memcmp(buf.data(), magic, n) != 0) {
        throw ParseError("bad magic in " + what + " (expected " + magic + ")");
    }
}

inline void write_f32_array(std::ostream& os, const float* p, size_t n) {
    os.write(reinterpret_cast<const char*>(p), std::streamsize(n * 4));
}

inline void read_f32_array(std::istream& is, float* p, size_t n, const std::string& what) {
    is.read(reinterpret_cast<char*>(p), std::streamsize(n * 4));
    if (size_t(is.gcount()) != n * 4) throw ShapeError("truncated payload in " + what);
}

} // namespace dtrf::binio
