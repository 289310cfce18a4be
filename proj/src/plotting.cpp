#include "comwin/plotting.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <limits>
#include <sstream>
#include <stdexcept>

#include <zlib.h>

#include <nlohmann/json.hpp>

namespace comwin {

namespace {

// ---------------------------------------------------------------------------
// PNG
// ---------------------------------------------------------------------------

void put_be32(std::string& out, uint32_t v) {
    out.push_back(static_cast<char>((v >> 24) & 0xff));
    out.push_back(static_cast<char>((v >> 16) & 0xff));
    out.push_back(static_cast<char>((v >> 8) & 0xff));
    out.push_back(static_cast<char>(v & 0xff));
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_be32(out, static_cast<uint32_t>(payload.size()));
    const size_t start = out.size();
    out.append(type, 4);
    out += payload;
    uint32_t crc = crc32(0L, Z_NULL, 0);
    crc = crc32(crc, reinterpret_cast<const Bytef*>(out.data() + start),
                static_cast<uInt>(out.size() - start));
    put_be32(out, crc);
}

}  // namespace

void write_png(const Raster& img, const std::filesystem::path& path) {
    std::string raw;
    raw.reserve(static_cast<size_t>(img.h) * (1 + 3 * img.w));
    for (int y = 0; y < img.h; ++y) {
        raw.push_back('\0');  // filter type 0
        raw.append(reinterpret_cast<const char*>(img.rgb.data() + static_cast<size_t>(y) * img.w * 3),
                   static_cast<size_t>(img.w) * 3);
    }

    uLongf bound = compressBound(static_cast<uLong>(raw.size()));
    std::vector<Bytef> compressed(bound);
    if (compress2(compressed.data(), &bound, reinterpret_cast<const Bytef*>(raw.data()),
                  static_cast<uLong>(raw.size()), 6) != Z_OK)
        throw std::runtime_error("png deflate failed");

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_be32(ihdr, static_cast<uint32_t>(img.w));
    put_be32(ihdr, static_cast<uint32_t>(img.h));
    ihdr.push_back(8);   // bit depth
    ihdr.push_back(2);   // truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT",
              std::string(reinterpret_cast<const char*>(compressed.data()), bound));
    put_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary | std::ios::trunc);
    if (!f) throw std::runtime_error("cannot write " + path.string());
    f.write(out.data(), static_cast<std::streamsize>(out.size()));
}

// ---------------------------------------------------------------------------
// Chart rendering
// ---------------------------------------------------------------------------

namespace {

// 5x7 glyphs, bit 4 is the leftmost column.
struct Glyph {
    char ch;
    uint8_t rows[7];
};
constexpr Glyph kGlyphs[] = {
    {'0', {0x0E, 0x11, 0x13, 0x15, 0x19, 0x11, 0x0E}},
    {'1', {0x04, 0x0C, 0x04, 0x04, 0x04, 0x04, 0x0E}},
    {'2', {0x0E, 0x11, 0x01, 0x02, 0x04, 0x08, 0x1F}},
    {'3', {0x1F, 0x02, 0x04, 0x02, 0x01, 0x11, 0x0E}},
    {'4', {0x02, 0x06, 0x0A, 0x12, 0x1F, 0x02, 0x02}},
    {'5', {0x1F, 0x10, 0x1E, 0x01, 0x01, 0x11, 0x0E}},
    {'6', {0x06, 0x08, 0x10, 0x1E, 0x11, 0x11, 0x0E}},
    {'7', {0x1F, 0x01, 0x02, 0x04, 0x08, 0x08, 0x08}},
    {'8', {0x0E, 0x11, 0x11, 0x0E, 0x11, 0x11, 0x0E}},
    {'9', {0x0E, 0x11, 0x11, 0x0F, 0x01, 0x02, 0x0C}},
    {'.', {0x00, 0x00, 0x00, 0x00, 0x00, 0x0C, 0x0C}},
    {'-', {0x00, 0x00, 0x00, 0x1F, 0x00, 0x00, 0x00}},
    {'+', {0x00, 0x04, 0x04, 0x1F, 0x04, 0x04, 0x00}},
    {'e', {0x00, 0x00, 0x0E, 0x11, 0x1F, 0x10, 0x0E}},
};

void draw_text(Raster& img, int x, int y, const std::string& text) {
    for (char ch : text) {
        const Glyph* g = nullptr;
        for (const auto& cand : kGlyphs)
            if (cand.ch == ch) {
                g = &cand;
                break;
            }
        if (g) {
            for (int ry = 0; ry < 7; ++ry)
                for (int rx = 0; rx < 5; ++rx)
                    if (g->rows[ry] & (1 << (4 - rx))) img.set(x + rx, y + ry, 40, 40, 40);
        }
        x += 6;
    }
}

void draw_line(Raster& img, int x0, int y0, int x1, int y1, uint8_t r, uint8_t g, uint8_t b) {
    const int dx = std::abs(x1 - x0), dy = -std::abs(y1 - y0);
    const int sx = x0 < x1 ? 1 : -1, sy = y0 < y1 ? 1 : -1;
    int err = dx + dy;
    while (true) {
        img.set(x0, y0, r, g, b);
        if (x0 == x1 && y0 == y1) break;
        const int e2 = 2 * err;
        if (e2 >= dy) {
            err += dy;
            x0 += sx;
        }
        if (e2 <= dx) {
            err += dx;
            y0 += sy;
        }
    }
}

std::string tick_label(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%g", v);
    return buf;
}

}  // namespace

Raster render_line_chart(const std::vector<Series>& series, int width, int height) {
    Raster img(width, height);
    const int ml = 48, mr = 12, mt = 12, mb = 26;
    const int px0 = ml, px1 = width - mr, py0 = height - mb, py1 = mt;

    double xmin = std::numeric_limits<double>::infinity(), xmax = -xmin;
    double ymin = xmin, ymax = -xmin;
    for (const auto& s : series)
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) continue;
            xmin = std::min(xmin, s.x[i]);
            xmax = std::max(xmax, s.x[i]);
            ymin = std::min(ymin, s.y[i]);
            ymax = std::max(ymax, s.y[i]);
        }
    if (!std::isfinite(xmin)) {
        xmin = 0;
        xmax = 1;
        ymin = 0;
        ymax = 1;
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) {
        ymax = ymin + 0.5;
        ymin -= 0.5;
    }
    const double ypad = 0.05 * (ymax - ymin);
    ymin -= ypad;
    ymax += ypad;

    auto to_px = [&](double x) {
        return px0 + static_cast<int>(std::lround((x - xmin) / (xmax - xmin) * (px1 - px0)));
    };
    auto to_py = [&](double y) {
        return py0 - static_cast<int>(std::lround((y - ymin) / (ymax - ymin) * (py0 - py1)));
    };

    // gridlines + ticks
    for (int t = 0; t <= 4; ++t) {
        const double xv = xmin + (xmax - xmin) * t / 4.0;
        const double yv = ymin + (ymax - ymin) * t / 4.0;
        const int xp = to_px(xv), yp = to_py(yv);
        draw_line(img, xp, py0, xp, py1, 225, 225, 225);
        draw_line(img, px0, yp, px1, yp, 225, 225, 225);
        draw_text(img, xp - 10, py0 + 6, tick_label(xv));
        draw_text(img, 4, yp - 3, tick_label(yv));
    }
    draw_line(img, px0, py0, px1, py0, 0, 0, 0);
    draw_line(img, px0, py0, px0, py1, 0, 0, 0);

    for (const auto& s : series) {
        bool have_prev = false;
        int prev_x = 0, prev_y = 0;
        for (size_t i = 0; i < s.x.size(); ++i) {
            if (!std::isfinite(s.y[i])) {
                have_prev = false;
                continue;
            }
            const int xp = to_px(s.x[i]), yp = to_py(s.y[i]);
            if (have_prev) draw_line(img, prev_x, prev_y, xp, yp, s.r, s.g, s.b);
            have_prev = true;
            prev_x = xp;
            prev_y = yp;
        }
    }

    // legend: one swatch per series in the top-right corner
    int lx = px1 - 18, ly = py1 + 4;
    for (const auto& s : series) {
        for (int dy = 0; dy < 6; ++dy)
            for (int dx = 0; dx < 12; ++dx) img.set(lx + dx, ly + dy, s.r, s.g, s.b);
        ly += 9;
    }
    return img;
}

// ---------------------------------------------------------------------------
// Log parsing and plot emission
// ---------------------------------------------------------------------------

TrainLog load_train_log(const std::filesystem::path& csv_path) {
    std::ifstream f(csv_path);
    if (!f) throw std::runtime_error("cannot open log: " + csv_path.string());
    std::string line;
    if (!std::getline(f, line)) throw std::runtime_error("empty log: " + csv_path.string());

    std::vector<std::string> header;
    {
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) header.push_back(cell);
    }
    if (header.size() < 2 || header[0] != "iter" || (header.size() - 2) % 8 != 0)
        throw std::runtime_error("malformed log header in " + csv_path.string());

    TrainLog log;
    log.models = static_cast<int>((header.size() - 2) / 8);
    log.loss_total.resize(log.models);
    log.pl_precision.resize(log.models);
    log.pl_recall.resize(log.models);
    log.win_conf.resize(log.models);

    std::vector<double> cells;
    while (std::getline(f, line)) {
        if (line.empty()) continue;
        cells.clear();
        std::stringstream ss(line);
        std::string cell;
        while (std::getline(ss, cell, ',')) cells.push_back(std::strtod(cell.c_str(), nullptr));
        if (cells.size() != header.size())
            throw std::runtime_error("malformed log row in " + csv_path.string());
        log.iter.push_back(cells[0]);
        log.lr.push_back(cells[1]);
        for (int m = 0; m < log.models; ++m) {
            const size_t base = 2 + static_cast<size_t>(m) * 8;
            log.loss_total[m].push_back(cells[base]);
            log.pl_precision[m].push_back(cells[base + 5]);
            log.pl_recall[m].push_back(cells[base + 6]);
            log.win_conf[m].push_back(cells[base + 7]);
        }
    }
    return log;
}

double decile_mean(const std::vector<double>& values, bool first_decile) {
    if (values.empty()) return std::numeric_limits<double>::quiet_NaN();
    const size_t n = std::max<size_t>(1, values.size() / 10);
    const size_t begin = first_decile ? 0 : values.size() - n;
    double sum = 0.0;
    size_t count = 0;
    for (size_t i = begin; i < begin + n; ++i) {
        if (!std::isfinite(values[i])) continue;
        sum += values[i];
        ++count;
    }
    if (count == 0) return std::numeric_limits<double>::quiet_NaN();
    return sum / static_cast<double>(count);
}

namespace {

constexpr uint8_t kPalette[][3] = {
    {220, 50, 47}, {38, 139, 210}, {133, 153, 0}, {211, 54, 130}, {42, 161, 152}, {203, 75, 22},
};

void emit_metric(const std::filesystem::path& dir, const std::string& name, const TrainLog& log,
                 const std::vector<std::vector<double>>& per_model) {
    std::vector<Series> series;
    for (int m = 0; m < log.models; ++m) {
        Series s;
        s.name = "m" + std::to_string(m + 1);
        s.x = log.iter;
        s.y = per_model[m];
        const auto& c = kPalette[m % 6];
        s.r = c[0];
        s.g = c[1];
        s.b = c[2];
        series.push_back(std::move(s));
    }
    write_png(render_line_chart(series), dir / (name + ".png"));

    std::ofstream csv(dir / (name + ".csv"), std::ios::trunc);
    csv << "iter";
    for (int m = 0; m < log.models; ++m) csv << ",m" << m + 1;
    csv << "\n";
    char buf[40];
    for (size_t i = 0; i < log.iter.size(); ++i) {
        csv << static_cast<long long>(log.iter[i]);
        for (int m = 0; m < log.models; ++m) {
            std::snprintf(buf, sizeof(buf), "%.9g", per_model[m][i]);
            csv << "," << buf;
        }
        csv << "\n";
    }
}

}  // namespace

void emit_plots(const std::filesystem::path& run_dir) {
    const auto log_path = run_dir / "log.csv";
    const TrainLog log = load_train_log(log_path);
    const auto plot_dir = run_dir / "plots";
    std::filesystem::create_directories(plot_dir);

    emit_metric(plot_dir, "precision", log, log.pl_precision);
    emit_metric(plot_dir, "recall", log, log.pl_recall);
    emit_metric(plot_dir, "win_conf", log, log.win_conf);

    std::ofstream sum(plot_dir / "summary.csv", std::ios::trunc);
    sum << "model,pl_precision_final,pl_recall_final,win_conf_first,win_conf_final\n";
    char buf[40];
    auto fmt = [&](double v) {
        std::snprintf(buf, sizeof(buf), "%.9g", v);
        return std::string(buf);
    };
    for (int m = 0; m < log.models; ++m) {
        sum << m + 1 << "," << fmt(decile_mean(log.pl_precision[m], false)) << ","
            << fmt(decile_mean(log.pl_recall[m], false)) << ","
            << fmt(decile_mean(log.win_conf[m], true)) << ","
            << fmt(decile_mean(log.win_conf[m], false)) << "\n";
    }

    // Dice summary from any eval reports already in the run directory.
    const auto eval_dir = run_dir / "eval";
    if (std::filesystem::is_directory(eval_dir)) {
        std::vector<std::filesystem::path> reports;
        for (const auto& e : std::filesystem::directory_iterator(eval_dir))
            if (e.path().extension() == ".json") reports.push_back(e.path());
        std::sort(reports.begin(), reports.end());
        if (!reports.empty()) {
            sum << "eval_report,dice_mean,dice_std\n";
            for (const auto& p : reports) {
                std::ifstream jf(p);
                nlohmann::json j;
                jf >> j;
                const auto& mean = j.at("aggregate").at("dice").at("mean");
                sum << p.stem().string() << "," << fmt(mean.at("mean").get<double>()) << ","
                    << fmt(mean.at("std").get<double>()) << "\n";
            }
        }
    }
}

}  // namespace comwin
