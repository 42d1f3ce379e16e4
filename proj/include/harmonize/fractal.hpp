#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace harmonize {

/// Binary occupancy grid with isotropic unit voxels, x-fastest layout.
struct VoxelGrid {
    int nx = 0, ny = 0, nz = 0;
    std::vector<uint8_t> occupancy;

    static VoxelGrid zeros(int nx, int ny, int nz);
    bool at(int x, int y, int z) const { return occupancy[index(x, y, z)] != 0; }
    void set(int x, int y, int z, bool on = true) { occupancy[index(x, y, z)] = on ? 1 : 0; }
    size_t index(int x, int y, int z) const {
        return static_cast<size_t>(x) +
               static_cast<size_t>(nx) * (static_cast<size_t>(y) + static_cast<size_t>(ny) * z);
    }
    int64_t occupied_count() const;
};

/// Raster file: six little-endian int32 header values
/// (magic "VOXG", version, nx, ny, nz, reserved) followed by nx*ny*nz
/// occupancy bytes.
VoxelGrid load_voxel_grid(const std::string& path);
void save_voxel_grid(const VoxelGrid& grid, const std::string& path);

/// Mean box counts over random grid offsets at scales s = 2^k.
struct BoxCountCurve {
    std::vector<int> exponents;   // k values
    std::vector<double> scales;   // 2^k
    std::vector<double> counts;   // mean N(s) over offsets
    int offsets = 0;
};

/// Boxes of side 2^exponent containing at least one occupied voxel, for one
/// grid placement shifted by `offset` (componentwise in [0, 2^exponent)).
int64_t count_boxes(const VoxelGrid& grid, int exponent, const std::array<int, 3>& offset);

/// Counts boxes of side 2^k (k = 0..max_exponent) containing at least one
/// occupied voxel, averaged over n_offsets uniform integer grid offsets in
/// [0, s)^3 drawn fresh per scale.
BoxCountCurve box_count(const VoxelGrid& grid, int n_offsets, uint64_t seed, int max_exponent = 8,
                        int threads = 1);

struct ScalingWindow {
    int lo = 0, hi = 0;            // inclusive indices into the curve
    double r2_adj_rounded = 0.0;
};

struct FdEstimate {
    BoxCountCurve curve;
    ScalingWindow window;
    double fd = 0.0;       // |slope| of log N vs log s inside the window
    double slope = 0.0;
    double r2_adj = 0.0;   // unrounded, for the selected window
};

/// Best linear log-log window of length >= 3 by rounded adjusted R².
/// Ties prefer the widest window, then the one starting at the smallest
/// scale. Deterministic, seed-independent.
ScalingWindow select_scaling_window(const BoxCountCurve& curve, int round_digits = 4);

FdEstimate fractal_dimension(const VoxelGrid& grid, int n_offsets = 20, uint64_t seed = 0,
                             int threads = 1);

std::string fd_estimate_to_json(const FdEstimate& estimate);

}  // namespace harmonize
