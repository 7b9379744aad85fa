// Copyright 2026 The depthgan Authors.
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// Disparity and mask file formats.
//
//   PGM  P5, 16-bit big-endian, value = round(d * scale), "# scale=S" comment.
//        Pixel 0 marks an invalid disparity.
//   PFM  "Pf" (1 channel) or "PF" (3 channels), float32 little-endian
//        (negative scale), rows stored bottom to top. Invalid pixels are +inf.

#pragma once

#include <bit>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <limits>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "depthgan/errors.hpp"
#include "depthgan/image.hpp"
#include "depthgan/tensor.hpp"

namespace depthgan::io {

namespace fs = std::filesystem;

inline std::string read_file(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

inline void write_file(const fs::path& path, const std::string& bytes) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out.write(bytes.data(), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw IoError("short write to " + path.string());
}

namespace detail {

inline std::uint32_t bswap32(std::uint32_t v) {
    return (v >> 24) | ((v >> 8) & 0xff00u) | ((v << 8) & 0xff0000u) | (v << 24);
}

/// Whitespace-separated header tokens over a byte buffer.
class HeaderReader {
public:
    explicit HeaderReader(const std::string& bytes) : b_(bytes) {}

    std::size_t offset() const { return pos_; }

    /// Skips whitespace and '#' comment lines; comment bodies go to `comments`.
    void skip_space(std::vector<std::string>* comments = nullptr) {
        while (pos_ < b_.size()) {
            const char c = b_[pos_];
            if (c == '#') {
                const std::size_t end = b_.find('\n', pos_);
                const std::size_t stop = end == std::string::npos ? b_.size() : end;
                if (comments) comments->push_back(b_.substr(pos_ + 1, stop - pos_ - 1));
                pos_ = stop;
            } else if (std::isspace(static_cast<unsigned char>(c))) {
                ++pos_;
            } else {
                break;
            }
        }
    }

    std::string token(const char* what, std::vector<std::string>* comments = nullptr) {
        skip_space(comments);
        const std::size_t start = pos_;
        while (pos_ < b_.size() && !std::isspace(static_cast<unsigned char>(b_[pos_])) && b_[pos_] != '#') ++pos_;
        if (pos_ == start) throw ParseError(std::string("missing ") + what, start);
        return b_.substr(start, pos_ - start);
    }

    std::size_t positive(const char* what, std::vector<std::string>* comments = nullptr) {
        skip_space(comments);
        const std::size_t start = pos_;
        const std::string t = token(what, comments);
        std::size_t v = 0;
        for (char c : t) {
            if (c < '0' || c > '9') throw ParseError(std::string("bad ") + what + " '" + t + "'", start);
            v = v * 10 + static_cast<std::size_t>(c - '0');
            if (v > (1u << 24)) throw ParseError(std::string(what) + " too large", start);
        }
        if (v == 0) throw ParseError(std::string(what) + " must be positive", start);
        return v;
    }

    double real(const char* what) {
        skip_space();
        const std::size_t start = pos_;
        const std::string t = token(what);
        try {
            std::size_t used = 0;
            const double v = std::stod(t, &used);
            if (used != t.size()) throw std::invalid_argument(t);
            return v;
        } catch (const std::exception&) {
            throw ParseError(std::string("bad ") + what + " '" + t + "'", start);
        }
    }

    /// The single whitespace byte that ends a binary-format header.
    void end_of_header() {
        if (pos_ >= b_.size() || !std::isspace(static_cast<unsigned char>(b_[pos_])))
            throw ParseError("expected whitespace after header", pos_);
        ++pos_;
    }

    void need(std::size_t n) const {
        if (b_.size() - pos_ < n)
            throw ParseError("truncated payload: need " + std::to_string(n) + " bytes, have " +
                                 std::to_string(b_.size() - pos_),
                             b_.size());
    }

private:
    const std::string& b_;
    std::size_t pos_ = 0;
};

}  // namespace detail

// ---- PGM ---------------------------------------------------------------

struct Pgm16 {
    std::size_t height = 0, width = 0;
    std::vector<std::uint16_t> pixels;
    double scale = 1.0;  // from "# scale=" when present
};

inline std::string encode_pgm16(const Pgm16& img) {
    if (img.pixels.size() != img.height * img.width) throw DimensionError("pgm: pixel count does not match size");
    std::ostringstream h;
    h << "P5\n# scale=" << img.scale << "\n" << img.width << ' ' << img.height << "\n65535\n";
    std::string out = h.str();
    out.reserve(out.size() + 2 * img.pixels.size());
    for (std::uint16_t p : img.pixels) {
        out.push_back(static_cast<char>(p >> 8));
        out.push_back(static_cast<char>(p & 0xff));
    }
    return out;
}

inline Pgm16 decode_pgm16(const std::string& bytes) {
    detail::HeaderReader r(bytes);
    std::vector<std::string> comments;
    const std::string magic = r.token("magic", &comments);
    if (magic != "P5") throw ParseError("not a binary PGM (magic '" + magic + "')", 0);
    Pgm16 img;
    img.width = r.positive("width", &comments);
    img.height = r.positive("height", &comments);
    const std::size_t maxval_at = r.offset();
    const std::size_t maxval = r.positive("maxval", &comments);
    if (maxval > 65535) throw ParseError("maxval above 65535", maxval_at);
    r.end_of_header();
    for (const auto& c : comments) {
        const auto at = c.find("scale=");
        if (at != std::string::npos) {
            try {
                img.scale = std::stod(c.substr(at + 6));
            } catch (const std::exception&) {
                throw ParseError("bad scale comment '" + c + "'", 0);
            }
            if (!(img.scale > 0.0)) throw ParseError("scale must be positive", 0);
        }
    }
    const std::size_t bpp = maxval > 255 ? 2 : 1;
    const std::size_t n = img.height * img.width;
    r.need(n * bpp);
    img.pixels.resize(n);
    const auto* p = reinterpret_cast<const unsigned char*>(bytes.data() + r.offset());
    for (std::size_t k = 0; k < n; ++k)
        img.pixels[k] = bpp == 2 ? static_cast<std::uint16_t>((p[2 * k] << 8) | p[2 * k + 1]) : p[k];
    return img;
}

/// round(d * scale) per pixel; invalid pixels are stored as 0.
inline Pgm16 quantize(const DisparityImage& d, double scale = 256.0) {
    if (!(scale > 0.0)) throw SpecError("pgm scale must be positive");
    Pgm16 img{d.height, d.width, std::vector<std::uint16_t>(d.size()), scale};
    for (std::size_t k = 0; k < d.size(); ++k) {
        if (!d.valid[k]) continue;
        const double q = std::round(d.values[k] * scale);
        if (!(q >= 0.0) || q > 65535.0)
            throw DomainError("pgm: disparity " + std::to_string(d.values[k]) + " not representable at scale " +
                              std::to_string(scale));
        img.pixels[k] = static_cast<std::uint16_t>(q);
    }
    return img;
}

inline DisparityImage dequantize(const Pgm16& img) {
    DisparityImage d(img.height, img.width);
    for (std::size_t k = 0; k < d.size(); ++k) {
        d.values[k] = img.pixels[k] / img.scale;
        d.valid[k] = img.pixels[k] != 0;
    }
    return d;
}

inline void write_pgm16(const fs::path& path, const DisparityImage& d, double scale = 256.0) {
    write_file(path, encode_pgm16(quantize(d, scale)));
}

inline DisparityImage read_pgm16(const fs::path& path) { return dequantize(decode_pgm16(read_file(path))); }

/// p > 0 -> (p - 1) / 256, p == 0 -> invalid.
inline DisparityImage decode_cityscapes_disparity(std::size_t height, std::size_t width,
                                                  std::span<const std::uint16_t> raw) {
    if (raw.size() != height * width) throw DimensionError("cityscapes: pixel count does not match size");
    DisparityImage d(height, width);
    for (std::size_t k = 0; k < raw.size(); ++k) {
        d.valid[k] = raw[k] != 0;
        d.values[k] = raw[k] != 0 ? (static_cast<double>(raw[k]) - 1.0) / 256.0 : 0.0;
    }
    return d;
}

// ---- PFM ---------------------------------------------------------------

inline std::string encode_pfm(const Tensor& t) {
    if (t.rank() != 3 || (t.dim(0) != 1 && t.dim(0) != 3))
        throw DimensionError("pfm: expected [1,H,W] or [3,H,W], got " + shape_str(t.shape()));
    const std::size_t C = t.dim(0), H = t.dim(1), W = t.dim(2);
    std::ostringstream h;
    h << (C == 1 ? "Pf" : "PF") << '\n' << W << ' ' << H << "\n-1.0\n";
    std::string out = h.str();
    const std::size_t head = out.size();
    out.resize(head + 4 * C * H * W);
    char* p = out.data() + head;
    for (std::size_t i = H; i-- > 0;)
        for (std::size_t j = 0; j < W; ++j)
            for (std::size_t c = 0; c < C; ++c) {
                const float v = static_cast<float>(t.at(c, i, j));
                std::uint32_t bits = std::bit_cast<std::uint32_t>(v);
                if constexpr (std::endian::native == std::endian::big) bits = detail::bswap32(bits);
                std::memcpy(p, &bits, 4);
                p += 4;
            }
    return out;
}

inline Tensor decode_pfm(const std::string& bytes) {
    detail::HeaderReader r(bytes);
    const std::string magic = r.token("magic");
    std::size_t C = 0;
    if (magic == "Pf") C = 1;
    else if (magic == "PF") C = 3;
    else throw ParseError("not a PFM (magic '" + magic + "')", 0);
    const std::size_t W = r.positive("width");
    const std::size_t H = r.positive("height");
    const std::size_t scale_at = r.offset();
    const double scale = r.real("scale");
    if (scale == 0.0 || !std::isfinite(scale)) throw ParseError("bad scale", scale_at);
    const bool little = scale < 0.0;
    r.end_of_header();
    r.need(4 * C * H * W);
    Tensor t(Shape{C, H, W});
    const char* p = bytes.data() + r.offset();
    const bool swap = little != (std::endian::native == std::endian::little);
    for (std::size_t i = H; i-- > 0;)
        for (std::size_t j = 0; j < W; ++j)
            for (std::size_t c = 0; c < C; ++c) {
                std::uint32_t bits;
                std::memcpy(&bits, p, 4);
                p += 4;
                if (swap) bits = detail::bswap32(bits);
                t.at(c, i, j) = static_cast<double>(std::bit_cast<float>(bits));
            }
    return t;
}

/// Invalid pixels are written as +inf.
inline std::string encode_pfm(const DisparityImage& d) {
    Tensor t = d.to_tensor();
    for (std::size_t k = 0; k < d.size(); ++k)
        if (!d.valid[k]) t[k] = std::numeric_limits<double>::infinity();
    return encode_pfm(t);
}

inline DisparityImage disparity_from_pfm(const Tensor& t) {
    if (t.dim(0) != 1) throw DimensionError("pfm: expected a single-channel disparity map");
    DisparityImage d = DisparityImage::from_tensor(t);
    for (std::size_t k = 0; k < d.size(); ++k)
        if (!std::isfinite(d.values[k])) {
            d.valid[k] = 0;
            d.values[k] = 0.0;
        }
    return d;
}

inline void write_pfm(const fs::path& path, const Tensor& t) { write_file(path, encode_pfm(t)); }
inline void write_pfm(const fs::path& path, const DisparityImage& d) { write_file(path, encode_pfm(d)); }
inline Tensor read_pfm_tensor(const fs::path& path) { return decode_pfm(read_file(path)); }
inline DisparityImage read_pfm(const fs::path& path) { return disparity_from_pfm(read_pfm_tensor(path)); }

// ---- by extension ------------------------------------------------------

inline std::string lower_extension(const fs::path& path) {
    std::string e = path.extension().string();
    for (char& c : e) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
    return e;
}

inline DisparityImage read_disparity(const fs::path& path) {
    const std::string e = lower_extension(path);
    if (e == ".pfm") return read_pfm(path);
    if (e == ".pgm") return read_pgm16(path);
    throw IoError("unsupported disparity format '" + e + "' for " + path.string());
}

inline void write_disparity(const fs::path& path, const DisparityImage& d) {
    const std::string e = lower_extension(path);
    if (e == ".pfm") return write_pfm(path, d);
    if (e == ".pgm") return write_pgm16(path, d);
    throw IoError("unsupported disparity format '" + e + "' for " + path.string());
}

// ---- masks -------------------------------------------------------------

/// 8-bit P5, 255 for hole pixels.
inline void write_mask(const fs::path& path, const HoleMask& m) {
    std::ostringstream h;
    h << "P5\n" << m.width << ' ' << m.height << "\n255\n";
    std::string out = h.str();
    for (auto v : m.hole) out.push_back(static_cast<char>(v ? 255 : 0));
    write_file(path, out);
}

/// Any nonzero pixel is a hole. Accepts 8- and 16-bit P5.
inline HoleMask read_mask(const fs::path& path) {
    const Pgm16 img = decode_pgm16(read_file(path));
    HoleMask m(img.height, img.width);
    for (std::size_t k = 0; k < img.pixels.size(); ++k) m.hole[k] = img.pixels[k] != 0;
    return m;
}

// ---- manifest ----------------------------------------------------------

struct ManifestEntry {
    fs::path disparity;
    fs::path mask;
};

/// One "disparity mask" pair per line; '#' starts a comment. Relative paths
/// resolve against the manifest's directory.
inline std::vector<ManifestEntry> read_manifest(const fs::path& path) {
    const std::string text = read_file(path);
    const fs::path base = path.parent_path();
    std::vector<ManifestEntry> out;
    std::istringstream in(text);
    std::string line;
    std::size_t offset = 0;
    while (std::getline(in, line)) {
        const std::size_t line_at = offset;
        offset += line.size() + 1;
        if (const auto h = line.find('#'); h != std::string::npos) line.resize(h);
        std::istringstream ls(line);
        std::string a, b, extra;
        if (!(ls >> a)) continue;
        if (!(ls >> b)) throw ParseError("manifest line needs a disparity and a mask path", line_at);
        if (ls >> extra) throw ParseError("manifest line has more than two paths", line_at);
        auto resolve = [&](const std::string& s) { return fs::path(s).is_absolute() ? fs::path(s) : base / s; };
        out.push_back({resolve(a), resolve(b)});
    }
    return out;
}

inline void write_manifest(const fs::path& path, const std::vector<ManifestEntry>& entries,
                           const std::string& header_comment = {}) {
    std::ostringstream os;
    if (!header_comment.empty()) os << "# " << header_comment << '\n';
    for (const auto& e : entries) os << e.disparity.generic_string() << ' ' << e.mask.generic_string() << '\n';
    write_file(path, os.str());
}

}  // namespace depthgan::io
