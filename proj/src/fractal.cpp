#include "harmonize/fractal.hpp"

#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <limits>

#include <nlohmann/json.hpp>

#include "harmonize/errors.hpp"
#include "harmonize/parallel.hpp"
#include "harmonize/rng.hpp"

namespace harmonize {

namespace {
constexpr int32_t kMagic = 0x47584F56;  // "VOXG" little-endian
constexpr int32_t kVersion = 1;
}  // namespace

VoxelGrid VoxelGrid::zeros(int nx, int ny, int nz) {
    if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("grid dimensions must be >= 1");
    VoxelGrid g;
    g.nx = nx;
    g.ny = ny;
    g.nz = nz;
    g.occupancy.assign(static_cast<size_t>(nx) * ny * nz, 0);
    return g;
}

int64_t VoxelGrid::occupied_count() const {
    int64_t n = 0;
    for (uint8_t v : occupancy) n += v != 0;
    return n;
}

VoxelGrid load_voxel_grid(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ValidationError("cannot open grid file '" + path + "'");
    int32_t header[6];
    in.read(reinterpret_cast<char*>(header), sizeof(header));
    if (!in) throw ValidationError("truncated grid header in '" + path + "'");
    if (header[0] != kMagic) throw ValidationError("'" + path + "' is not a voxel grid file");
    if (header[1] != kVersion)
        throw ValidationError("unsupported grid version " + std::to_string(header[1]));
    const int nx = header[2], ny = header[3], nz = header[4];
    if (nx < 1 || ny < 1 || nz < 1) throw ValidationError("invalid grid dimensions");
    VoxelGrid g = VoxelGrid::zeros(nx, ny, nz);
    in.read(reinterpret_cast<char*>(g.occupancy.data()),
            static_cast<std::streamsize>(g.occupancy.size()));
    if (!in || in.gcount() != static_cast<std::streamsize>(g.occupancy.size()))
        throw ValidationError("truncated voxel data in '" + path + "'");
    for (auto& v : g.occupancy) v = v != 0 ? 1 : 0;
    return g;
}

void save_voxel_grid(const VoxelGrid& grid, const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw ValidationError("cannot write grid file '" + path + "'");
    const int32_t header[6] = {kMagic, kVersion, grid.nx, grid.ny, grid.nz, 0};
    out.write(reinterpret_cast<const char*>(header), sizeof(header));
    out.write(reinterpret_cast<const char*>(grid.occupancy.data()),
              static_cast<std::streamsize>(grid.occupancy.size()));
    if (!out) throw ValidationError("write failed for '" + path + "'");
}

namespace {

void occupied_coordinates(const VoxelGrid& grid, std::vector<int32_t>& xs,
                          std::vector<int32_t>& ys, std::vector<int32_t>& zs) {
    for (int z = 0; z < grid.nz; ++z)
        for (int y = 0; y < grid.ny; ++y) {
            const uint8_t* row = grid.occupancy.data() + grid.index(0, y, z);
            for (int x = 0; x < grid.nx; ++x)
                if (row[x]) {
                    xs.push_back(x);
                    ys.push_back(y);
                    zs.push_back(z);
                }
        }
}

int64_t count_boxes_coords(const std::vector<int32_t>& xs, const std::vector<int32_t>& ys,
                           const std::vector<int32_t>& zs, int nx, int ny, int nz, int exponent,
                           const std::array<int, 3>& offset) {
    if (exponent == 0) return static_cast<int64_t>(xs.size());  // unit boxes = occupied voxels
    const int s_bits = exponent;
    const int nbx = ((nx - 1 + offset[0]) >> s_bits) + 1;
    const int nby = ((ny - 1 + offset[1]) >> s_bits) + 1;
    const int nbz = ((nz - 1 + offset[2]) >> s_bits) + 1;
    std::vector<uint8_t> marks(static_cast<size_t>(nbx) * nby * nbz, 0);
    int64_t count = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        const int bx = (xs[i] + offset[0]) >> s_bits;
        const int by = (ys[i] + offset[1]) >> s_bits;
        const int bz = (zs[i] + offset[2]) >> s_bits;
        uint8_t& m = marks[static_cast<size_t>(bx) +
                           static_cast<size_t>(nbx) *
                               (static_cast<size_t>(by) + static_cast<size_t>(nby) * bz)];
        count += m == 0;
        m = 1;
    }
    return count;
}

}  // namespace

int64_t count_boxes(const VoxelGrid& grid, int exponent, const std::array<int, 3>& offset) {
    if (exponent < 0) throw ValidationError("exponent must be >= 0");
    for (int d = 0; d < 3; ++d)
        if (offset[d] < 0 || offset[d] >= (1 << exponent))
            throw ValidationError("offset outside [0, 2^k)");
    std::vector<int32_t> xs, ys, zs;
    occupied_coordinates(grid, xs, ys, zs);
    if (xs.empty()) throw ValidationError("empty grid has no box-counting dimension");
    return count_boxes_coords(xs, ys, zs, grid.nx, grid.ny, grid.nz, exponent, offset);
}

BoxCountCurve box_count(const VoxelGrid& grid, int n_offsets, uint64_t seed, int max_exponent,
                        int threads) {
    if (n_offsets < 1) throw ValidationError("offset count must be >= 1");
    if (max_exponent < 0) throw ValidationError("max exponent must be >= 0");

    // Occupied voxel coordinates, extracted once.
    std::vector<int32_t> xs, ys, zs;
    occupied_coordinates(grid, xs, ys, zs);
    if (xs.empty()) throw ValidationError("empty grid has no box-counting dimension");

    const int n_scales = max_exponent + 1;
    // Offsets are drawn per scale up front so the counting loop can run on
    // any thread layout without touching shared RNG state.
    std::vector<std::array<int, 3>> offsets(static_cast<size_t>(n_scales) * n_offsets);
    for (int k = 0; k < n_scales; ++k) {
        Rng rng(derive_seed(seed, static_cast<uint64_t>(k)));
        const uint64_t s = 1ULL << k;
        for (int o = 0; o < n_offsets; ++o)
            offsets[static_cast<size_t>(k) * n_offsets + o] = {
                static_cast<int>(rng.next_below(s)), static_cast<int>(rng.next_below(s)),
                static_cast<int>(rng.next_below(s))};
    }

    std::vector<double> per_unit(static_cast<size_t>(n_scales) * n_offsets, 0.0);
    parallel_for(per_unit.size(), threads, [&](size_t unit) {
        const int k = static_cast<int>(unit) / n_offsets;
        per_unit[unit] = static_cast<double>(count_boxes_coords(
            xs, ys, zs, grid.nx, grid.ny, grid.nz, k, offsets[unit]));
    });

    BoxCountCurve curve;
    curve.offsets = n_offsets;
    for (int k = 0; k < n_scales; ++k) {
        double sum = 0.0;
        for (int o = 0; o < n_offsets; ++o) sum += per_unit[static_cast<size_t>(k) * n_offsets + o];
        curve.exponents.push_back(k);
        curve.scales.push_back(static_cast<double>(1ULL << k));
        curve.counts.push_back(sum / n_offsets);
    }
    return curve;
}

namespace {

struct FitLine {
    double slope = 0.0;
    double intercept = 0.0;
    double r2 = 1.0;
};

// Least squares of y on x; constant y counts as a perfect fit.
FitLine fit_loglog(const std::vector<double>& x, const std::vector<double>& y, int lo, int hi) {
    const int m = hi - lo + 1;
    double sx = 0.0, sy = 0.0;
    for (int i = lo; i <= hi; ++i) {
        sx += x[i];
        sy += y[i];
    }
    const double mx = sx / m, my = sy / m;
    double sxx = 0.0, sxy = 0.0, syy = 0.0;
    for (int i = lo; i <= hi; ++i) {
        const double dx = x[i] - mx, dy = y[i] - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    FitLine fit;
    fit.slope = sxx > 0.0 ? sxy / sxx : 0.0;
    fit.intercept = my - fit.slope * mx;
    if (syy > 0.0) {
        double ss_res = 0.0;
        for (int i = lo; i <= hi; ++i) {
            const double e = y[i] - (fit.intercept + fit.slope * x[i]);
            ss_res += e * e;
        }
        fit.r2 = 1.0 - ss_res / syy;
    }
    return fit;
}

}  // namespace

ScalingWindow select_scaling_window(const BoxCountCurve& curve, int round_digits) {
    const int n = static_cast<int>(curve.counts.size());
    if (n < 3) throw ValidationError("scaling window needs at least 3 scales");
    std::vector<double> log_s(n), log_n(n);
    for (int i = 0; i < n; ++i) {
        if (!(curve.counts[i] > 0.0) || !std::isfinite(curve.counts[i]))
            throw ValidationError("box counts must be positive and finite");
        log_s[i] = std::log(curve.scales[i]);
        log_n[i] = std::log(curve.counts[i]);
    }

    const double rounding = std::pow(10.0, round_digits);
    ScalingWindow best;
    best.r2_adj_rounded = -std::numeric_limits<double>::infinity();
    int best_len = 0;
    for (int lo = 0; lo + 2 < n; ++lo) {
        for (int hi = lo + 2; hi < n; ++hi) {
            const int m = hi - lo + 1;
            const FitLine fit = fit_loglog(log_s, log_n, lo, hi);
            const double r2_adj = 1.0 - (1.0 - fit.r2) * (m - 1) / static_cast<double>(m - 2);
            const double rounded = std::round(r2_adj * rounding) / rounding;
            const int len = m;
            const bool better = rounded > best.r2_adj_rounded ||
                                (rounded == best.r2_adj_rounded && len > best_len);
            // Equal score and width keep the earlier (smaller-scale) window.
            if (better) {
                best.lo = lo;
                best.hi = hi;
                best.r2_adj_rounded = rounded;
                best_len = len;
            }
        }
    }
    return best;
}

FdEstimate fractal_dimension(const VoxelGrid& grid, int n_offsets, uint64_t seed, int threads) {
    FdEstimate est;
    est.curve = box_count(grid, n_offsets, seed, 8, threads);
    est.window = select_scaling_window(est.curve);

    const int n = static_cast<int>(est.curve.counts.size());
    std::vector<double> log_s(n), log_n(n);
    for (int i = 0; i < n; ++i) {
        log_s[i] = std::log(est.curve.scales[i]);
        log_n[i] = std::log(est.curve.counts[i]);
    }
    const FitLine fit = fit_loglog(log_s, log_n, est.window.lo, est.window.hi);
    const int m = est.window.hi - est.window.lo + 1;
    est.slope = fit.slope;
    est.fd = std::abs(fit.slope);
    est.r2_adj = 1.0 - (1.0 - fit.r2) * (m - 1) / static_cast<double>(m - 2);
    return est;
}

std::string fd_estimate_to_json(const FdEstimate& estimate) {
    nlohmann::json j;
    j["curve"] = {{"exponents", estimate.curve.exponents},
                  {"scales", estimate.curve.scales},
                  {"counts", estimate.curve.counts},
                  {"offsets", estimate.curve.offsets}};
    j["window"] = {{"lo_exponent", estimate.curve.exponents[estimate.window.lo]},
                   {"hi_exponent", estimate.curve.exponents[estimate.window.hi]},
                   {"r2_adj_rounded", estimate.window.r2_adj_rounded}};
    j["r2_adj"] = estimate.r2_adj;
    j["slope"] = estimate.slope;
    j["fd"] = estimate.fd;
    return j.dump(2);
}

}  // namespace harmonize
