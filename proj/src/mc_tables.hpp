#pragma once

#include <cstdint>

namespace npull::detail
{
    // (x, y, z) offset of each cell corner in the table's numbering; corners
    // 0-3 form the y = 0 face, 4-7 the y = 1 face.
    inline constexpr int mc_corner_offset[8][3] = {
        {0, 0, 0}, {1, 0, 0}, {1, 0, 1}, {0, 0, 1}, {0, 1, 0}, {1, 1, 0}, {1, 1, 1}, {0, 1, 1},
    };

    inline constexpr int mc_edge_corners[12][2] = {
        {0, 1}, {1, 2}, {2, 3}, {3, 0}, {4, 5}, {5, 6}, {6, 7}, {7, 4}, {0, 4}, {1, 5}, {2, 6}, {3, 7},
    };

    extern const std::int8_t mc_triangles[256][16];
}
