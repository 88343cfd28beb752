#include "cwp/image_io.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>
#include <sstream>

namespace cwp {

namespace {

struct PpmReader {
    std::ifstream in;
    std::string path;
    size_t offset = 0;

    explicit PpmReader(const std::string& p) : in(p, std::ios::binary), path(p) {
        if (!in) throw DataError("ppm: cannot open '" + p + "'");
    }

    [[noreturn]] void fail(const std::string& what) {
        throw DataError("ppm: " + what + " in '" + path + "' at byte offset " +
                        std::to_string(offset));
    }

    int get() {
        const int c = in.get();
        if (c != EOF) ++offset;
        return c;
    }

    // Skips whitespace and '#' comment lines, then reads one unsigned integer.
    long next_int() {
        int c = get();
        while (true) {
            if (c == '#') {
                while (c != EOF && c != '\n') c = get();
            } else if (c == ' ' || c == '\t' || c == '\r' || c == '\n') {
                c = get();
                continue;
            } else {
                break;
            }
        }
        if (c == EOF) fail("unexpected end of header");
        if (c < '0' || c > '9') fail(std::string("expected a digit, got '") + static_cast<char>(c) + "'");
        long v = 0;
        while (c >= '0' && c <= '9') {
            v = v * 10 + (c - '0');
            if (v > 1000000000L) fail("header value too large");
            c = get();
        }
        if (c != EOF && c != ' ' && c != '\t' && c != '\r' && c != '\n' && c != '#')
            fail("malformed header token");
        if (c == '#') {
            while (c != EOF && c != '\n') c = get();
        }
        return v;
    }
};

}  // namespace

Tensor read_ppm(const std::string& path) {
    PpmReader r(path);
    const int m0 = r.get();
    const int m1 = r.get();
    if (m0 != 'P' || (m1 != '5' && m1 != '6')) r.fail("bad magic (want P5 or P6)");
    const int channels = (m1 == '6') ? 3 : 1;
    const long w = r.next_int();
    const long h = r.next_int();
    const long maxval = r.next_int();
    if (w <= 0 || h <= 0) r.fail("non-positive image dimensions");
    if (maxval != 255) r.fail("unsupported maxval " + std::to_string(maxval) + " (want 255)");
    // exactly one whitespace byte separates the header from the payload and
    // next_int has already consumed it
    const size_t count = static_cast<size_t>(w) * static_cast<size_t>(h) * channels;
    std::vector<unsigned char> raw(count);
    r.in.read(reinterpret_cast<char*>(raw.data()), static_cast<std::streamsize>(count));
    if (static_cast<size_t>(r.in.gcount()) != count) {
        r.offset += static_cast<size_t>(std::max<std::streamsize>(r.in.gcount(), 0));
        r.fail("truncated payload (expected " + std::to_string(count) + " bytes)");
    }
    Tensor img({1, channels, static_cast<int>(h), static_cast<int>(w)});
    float* p = img.data();
    const size_t hw = static_cast<size_t>(h) * static_cast<size_t>(w);
    for (size_t i = 0; i < hw; ++i)
        for (int c = 0; c < channels; ++c)
            p[static_cast<size_t>(c) * hw + i] = static_cast<float>(raw[i * channels + c]) / 255.0f;
    return img;
}

void write_ppm(const Tensor& img, const std::string& path) {
    if (img.rank() != 4 || img.dim(0) != 1 || (img.dim(1) != 1 && img.dim(1) != 3))
        throw DataError("ppm: can only write 1 x {1|3} x H x W images, got " +
                        dims_to_string(img.dims()));
    const int C = img.dim(1), H = img.dim(2), W = img.dim(3);
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("ppm: cannot write '" + path + "'");
    out << (C == 3 ? "P6" : "P5") << "\n" << W << " " << H << "\n255\n";
    const size_t hw = static_cast<size_t>(H) * W;
    std::vector<unsigned char> raw(hw * static_cast<size_t>(C));
    const float* p = img.data();
    for (size_t i = 0; i < hw; ++i)
        for (int c = 0; c < C; ++c) {
            const float v = std::clamp(p[static_cast<size_t>(c) * hw + i], 0.0f, 1.0f);
            raw[i * static_cast<size_t>(C) + c] =
                static_cast<unsigned char>(std::lround(v * 255.0f));
        }
    out.write(reinterpret_cast<const char*>(raw.data()), static_cast<std::streamsize>(raw.size()));
    if (!out) throw DataError("ppm: short write to '" + path + "'");
}

std::string csv_join(const std::vector<std::string>& fields) {
    std::string line;
    for (size_t i = 0; i < fields.size(); ++i) {
        if (i) line += ',';
        line += fields[i];
    }
    line += '\n';
    return line;
}

std::string format_double(double v) {
    if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
    char buf[64];
    std::snprintf(buf, sizeof(buf), "%.6g", v);
    return buf;
}

void write_text_file(const std::string& path, const std::string& contents) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw DataError("cannot write '" + path + "'");
    out << contents;
    if (!out) throw DataError("short write to '" + path + "'");
}

}  // namespace cwp
