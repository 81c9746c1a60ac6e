#pragma once

#include <cctype>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>

#include "resdens/errors.hpp"
#include "resdens/image.hpp"

namespace resdens {

namespace detail {

// Header tokens are separated by whitespace; '#' starts a comment running
// to end of line. `pos` tracks the byte offset for error reporting.
inline int pgm_get(std::istream& in, long long& pos) {
    const int c = in.get();
    if (c != EOF) ++pos;
    return c;
}

inline std::string pgm_token(std::istream& in, long long& pos, const std::string& what) {
    int c = pgm_get(in, pos);
    while (c != EOF && (std::isspace(c) || c == '#')) {
        if (c == '#')
            while (c != EOF && c != '\n') c = pgm_get(in, pos);
        c = pgm_get(in, pos);
    }
    if (c == EOF) throw ParseError("pgm: missing " + what, pos);
    std::string tok;
    while (c != EOF && !std::isspace(c) && c != '#') {
        tok.push_back(static_cast<char>(c));
        c = pgm_get(in, pos);
    }
    if (c == '#') {
        in.unget();
        --pos;
    }
    return tok;
}

inline std::size_t pgm_number(std::istream& in, long long& pos, const std::string& what,
                              std::size_t max_value) {
    const long long start = pos;
    const std::string tok = pgm_token(in, pos, what);
    std::size_t value = 0;
    for (char ch : tok) {
        if (ch < '0' || ch > '9') throw ParseError("pgm: bad " + what + " '" + tok + "'", start);
        value = value * 10 + static_cast<std::size_t>(ch - '0');
        if (value > max_value) throw ParseError("pgm: " + what + " out of range", start);
    }
    if (tok.empty()) throw ParseError("pgm: empty " + what, start);
    return value;
}

} // namespace detail

// Binary PGM (P5). Samples are 1 byte up to maxval 255, else 2 bytes
// big-endian. Pixels are scaled by 1/maxval into [0,1].
inline Image read_pgm(std::istream& in) {
    long long pos = 0;
    const std::string magic = detail::pgm_token(in, pos, "magic");
    if (magic != "P5") throw ParseError("pgm: expected P5 magic, got '" + magic + "'", 0);
    const std::size_t w = detail::pgm_number(in, pos, "width", 1u << 20);
    const std::size_t h = detail::pgm_number(in, pos, "height", 1u << 20);
    const std::size_t maxval = detail::pgm_number(in, pos, "maxval", 65535);
    if (w == 0 || h == 0) throw ParseError("pgm: zero dimension", pos);
    if (maxval == 0) throw ParseError("pgm: maxval must be positive", pos);
    // The single whitespace byte after maxval was already consumed by the
    // token reader; binary payload starts here.

    Image img(h, w);
    const bool wide = maxval > 255;
    const double scale = 1.0 / static_cast<double>(maxval);
    for (std::size_t i = 0; i < img.size(); ++i) {
        const int b0 = detail::pgm_get(in, pos);
        if (b0 == EOF) throw ParseError("pgm: truncated payload", pos);
        std::size_t sample = static_cast<std::size_t>(b0);
        if (wide) {
            const int b1 = detail::pgm_get(in, pos);
            if (b1 == EOF) throw ParseError("pgm: truncated payload", pos);
            sample = (sample << 8) | static_cast<std::size_t>(b1);
        }
        if (sample > maxval) throw ParseError("pgm: sample exceeds maxval", pos);
        img.px[i] = static_cast<double>(sample) * scale;
    }
    return img;
}

inline Image read_pgm(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ParseError("pgm: cannot open '" + path + "'");
    try {
        return read_pgm(in);
    } catch (const ParseError& e) {
        throw ParseError("pgm: '" + path + "': " + e.what(), e.byte_offset);
    }
}

inline void write_pgm(std::ostream& out, const Image& img, std::size_t maxval = 255) {
    require_nonempty(img, "write_pgm");
    if (maxval == 0 || maxval > 65535) throw UsageError("write_pgm: maxval must be in [1,65535]");
    out << "P5\n" << img.w << " " << img.h << "\n" << maxval << "\n";
    const bool wide = maxval > 255;
    for (double v : img.px) {
        double q = std::nearbyint(v * static_cast<double>(maxval));
        if (q < 0) q = 0;
        if (q > static_cast<double>(maxval)) q = static_cast<double>(maxval);
        const std::uint16_t s = static_cast<std::uint16_t>(q);
        if (wide) out.put(static_cast<char>(s >> 8));
        out.put(static_cast<char>(s & 0xff));
    }
    if (!out) throw ParseError("pgm: write failed");
}

inline void write_pgm(const std::string& path, const Image& img, std::size_t maxval = 255) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw ParseError("pgm: cannot open '" + path + "' for writing");
    write_pgm(out, img, maxval);
    out.close();
    if (!out) throw ParseError("pgm: write failed for '" + path + "'");
}

} // namespace resdens
