#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

namespace comwin {

// Headless plotting from training logs: everything is replayed from log.csv,
// never from live training state.

struct Raster {
    int w = 0, h = 0;
    std::vector<uint8_t> rgb;  // 3 bytes per pixel, row-major

    Raster(int w_, int h_, uint8_t fill = 255)
        : w(w_), h(h_), rgb(static_cast<size_t>(w_) * h_ * 3, fill) {}

    void set(int x, int y, uint8_t r, uint8_t g, uint8_t b) {
        if (x < 0 || x >= w || y < 0 || y >= h) return;
        const size_t k = (static_cast<size_t>(y) * w + x) * 3;
        rgb[k] = r;
        rgb[k + 1] = g;
        rgb[k + 2] = b;
    }
};

void write_png(const Raster& img, const std::filesystem::path& path);

struct Series {
    std::string name;
    std::vector<double> x, y;  // NaN y values are skipped
    uint8_t r = 0, g = 0, b = 0;
};

/// Axes, ticks with numeric labels, one polyline per series.
Raster render_line_chart(const std::vector<Series>& series, int width = 640, int height = 400);

/// Parsed training log (see csv_header for the column layout).
struct TrainLog {
    int models = 0;
    std::vector<double> iter, lr;
    // [model][row]
    std::vector<std::vector<double>> loss_total, pl_precision, pl_recall, win_conf;
};

TrainLog load_train_log(const std::filesystem::path& csv_path);

/// Mean over the first or last 10% of entries, NaN entries skipped.
/// Returns NaN when nothing is defined in the window.
double decile_mean(const std::vector<double>& values, bool first_decile);

/// Emits precision/recall/winning-confidence charts (PNG), their data CSVs,
/// and summary.csv under <run_dir>/plots. Pure function of log.csv plus any
/// eval reports already present in the run directory.
void emit_plots(const std::filesystem::path& run_dir);

}  // namespace comwin
