#include "acdet/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <png.h>

#include "acdet/errors.hpp"

namespace acdet {

namespace {

// Separable FIR with replicate borders; the interior runs clamp-free so the
// compiler can vectorize it.
void smooth_axis(const Plane& src, Plane& dst, int radius, bool horizontal) {
    const int n = 2 * radius + 1;
    std::vector<float> k(n);
    float norm = float((radius + 1) * (radius + 1));
    for (int i = 0; i < n; ++i) k[i] = float(radius + 1 - std::abs(i - radius)) / norm;

    dst = Plane(src.h, src.w);
    if (horizontal) {
        const int lo = std::min(radius, src.w);
        const int hi = std::max(lo, src.w - radius);
        for (int y = 0; y < src.h; ++y) {
            const float* in = src.row(y);
            float* out = dst.row(y);
            for (int x = 0; x < lo; ++x) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[i + radius] * in[std::clamp(x + i, 0, src.w - 1)];
                out[x] = acc;
            }
            for (int x = lo; x < hi; ++x) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i) acc += k[i + radius] * in[x + i];
                out[x] = acc;
            }
            for (int x = hi; x < src.w; ++x) {
                float acc = 0.f;
                for (int i = -radius; i <= radius; ++i)
                    acc += k[i + radius] * in[std::clamp(x + i, 0, src.w - 1)];
                out[x] = acc;
            }
        }
    } else {
        for (int y = 0; y < src.h; ++y) {
            float* out = dst.row(y);
            const float* first = src.row(std::clamp(y - radius, 0, src.h - 1));
            std::copy(first, first + src.w, out);
            for (int x = 0; x < src.w; ++x) out[x] *= k[0];
            for (int i = -radius + 1; i <= radius; ++i) {
                const float* in = src.row(std::clamp(y + i, 0, src.h - 1));
                const float kv = k[i + radius];
                for (int x = 0; x < src.w; ++x) out[x] += kv * in[x];
            }
        }
    }
}

}  // namespace

Plane triangle_smooth(const Plane& p, int radius) {
    if (radius <= 0) return p;
    Plane tmp, out;
    smooth_axis(p, tmp, radius, true);
    smooth_axis(tmp, out, radius, false);
    return out;
}

Image resample_bilinear(const Image& img, int out_h, int out_w) {
    if (out_h < 1 || out_w < 1) throw DataError("resample: output dims must be positive");
    Image out(out_h, out_w);
    const double sy = double(img.h) / out_h;
    const double sx = double(img.w) / out_w;
    // per-column source indices and weights, reused for every row and channel
    std::vector<int> x0(size_t(out_w)), x1(size_t(out_w));
    std::vector<float> wx(size_t(out_w));
    for (int x = 0; x < out_w; ++x) {
        double fx = (x + 0.5) * sx - 0.5;
        int xi = int(std::floor(fx));
        wx[size_t(x)] = float(fx - xi);
        x0[size_t(x)] = std::clamp(xi, 0, img.w - 1);
        x1[size_t(x)] = std::clamp(xi + 1, 0, img.w - 1);
    }
    for (int c = 0; c < 3; ++c) {
        const Plane& src = img.rgb[c];
        Plane& dst = out.rgb[c];
        for (int y = 0; y < out_h; ++y) {
            double fy = (y + 0.5) * sy - 0.5;
            int y0 = int(std::floor(fy));
            float wy = float(fy - y0);
            const float* r0 = src.row(std::clamp(y0, 0, img.h - 1));
            const float* r1 = src.row(std::clamp(y0 + 1, 0, img.h - 1));
            float* o = dst.row(y);
            for (int x = 0; x < out_w; ++x) {
                float top = r0[x0[size_t(x)]] + wx[size_t(x)] * (r0[x1[size_t(x)]] - r0[x0[size_t(x)]]);
                float bot = r1[x0[size_t(x)]] + wx[size_t(x)] * (r1[x1[size_t(x)]] - r1[x0[size_t(x)]]);
                o[x] = top + wy * (bot - top);
            }
        }
    }
    return out;
}

namespace {

Image load_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot open image: " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw DataError("not a binary PPM (P6): " + path);
    auto next_int = [&f, &path]() {
        // skip whitespace and '#' comments
        int c = f.get();
        while (c == '#' || std::isspace(c)) {
            if (c == '#')
                while (c != '\n' && c != EOF) c = f.get();
            c = f.get();
        }
        if (c == EOF) throw DataError("truncated PPM header: " + path);
        f.unget();
        long v;
        f >> v;
        return v;
    };
    long w = next_int(), h = next_int(), maxval = next_int();
    if (w < 1 || h < 1 || maxval < 1 || maxval > 65535) throw DataError("bad PPM header: " + path);
    f.get();  // single whitespace after maxval
    Image img{int(h), int(w)};
    const int bytes = maxval > 255 ? 2 : 1;
    std::vector<unsigned char> row(size_t(w) * 3 * bytes);
    const float scale = 1.f / float(maxval);
    for (long y = 0; y < h; ++y) {
        f.read(reinterpret_cast<char*>(row.data()), std::streamsize(row.size()));
        if (!f) throw DataError("truncated PPM data: " + path);
        for (long x = 0; x < w; ++x) {
            for (int c = 0; c < 3; ++c) {
                unsigned v;
                if (bytes == 1) {
                    v = row[size_t(x) * 3 + c];
                } else {
                    size_t i = (size_t(x) * 3 + c) * 2;
                    v = (unsigned(row[i]) << 8) | row[i + 1];
                }
                img.rgb[c].at(int(y), int(x)) = float(v) * scale;
            }
        }
    }
    return img;
}

Image load_png(const std::string& path) {
    FILE* fp = std::fopen(path.c_str(), "rb");
    if (!fp) throw DataError("cannot open image: " + path);
    png_structp png = png_create_read_struct(PNG_LIBPNG_VER_STRING, nullptr, nullptr, nullptr);
    png_infop info = png ? png_create_info_struct(png) : nullptr;
    if (!png || !info) {
        if (png) png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("libpng init failed");
    }
    if (setjmp(png_jmpbuf(png))) {
        png_destroy_read_struct(&png, &info, nullptr);
        std::fclose(fp);
        throw DataError("failed to decode PNG: " + path);
    }
    png_init_io(png, fp);
    png_read_info(png, info);

    png_uint_32 w, h;
    int bit_depth, color_type;
    png_get_IHDR(png, info, &w, &h, &bit_depth, &color_type, nullptr, nullptr, nullptr);
    if (color_type == PNG_COLOR_TYPE_PALETTE) png_set_palette_to_rgb(png);
    if (color_type == PNG_COLOR_TYPE_GRAY && bit_depth < 8) png_set_expand_gray_1_2_4_to_8(png);
    if (png_get_valid(png, info, PNG_INFO_tRNS)) png_set_tRNS_to_alpha(png);
    if (color_type == PNG_COLOR_TYPE_GRAY || color_type == PNG_COLOR_TYPE_GRAY_ALPHA)
        png_set_gray_to_rgb(png);
    png_set_strip_alpha(png);
    if (bit_depth == 16) png_set_strip_16(png);
    png_read_update_info(png, info);

    Image img{int(h), int(w)};
    std::vector<unsigned char> row(size_t(w) * 3);
    for (png_uint_32 y = 0; y < h; ++y) {
        png_read_row(png, row.data(), nullptr);
        for (png_uint_32 x = 0; x < w; ++x)
            for (int c = 0; c < 3; ++c)
                img.rgb[c].at(int(y), int(x)) = float(row[size_t(x) * 3 + c]) / 255.f;
    }
    png_read_end(png, nullptr);
    png_destroy_read_struct(&png, &info, nullptr);
    std::fclose(fp);
    return img;
}

}  // namespace

Image load_image(const std::string& path) {
    std::ifstream probe(path, std::ios::binary);
    if (!probe) throw DataError("cannot open image: " + path);
    unsigned char sig[8] = {0};
    probe.read(reinterpret_cast<char*>(sig), 8);
    probe.close();
    if (sig[0] == 0x89 && sig[1] == 'P' && sig[2] == 'N' && sig[3] == 'G') return load_png(path);
    if (sig[0] == 'P' && sig[1] == '6') return load_ppm(path);
    throw DataError("unsupported image format (need PPM P6 or PNG): " + path);
}

void save_ppm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw DataError("cannot write image: " + path);
    f << "P6\n" << img.w << " " << img.h << "\n255\n";
    std::vector<unsigned char> row(size_t(img.w) * 3);
    for (int y = 0; y < img.h; ++y) {
        for (int x = 0; x < img.w; ++x)
            for (int c = 0; c < 3; ++c) {
                float v = std::clamp(img.rgb[c].at(y, x), 0.f, 1.f);
                row[size_t(x) * 3 + c] = (unsigned char)(std::lround(v * 255.f));
            }
        f.write(reinterpret_cast<const char*>(row.data()), std::streamsize(row.size()));
    }
    if (!f) throw DataError("short write: " + path);
}

}  // namespace acdet
