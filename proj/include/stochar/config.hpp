#pragma once

#include <cstddef>
#include <cstdint>

namespace stochar {

struct SimConfig {
    double dt = 1e-3;
    double horizon = 100.0; // censoring time
    std::uint64_t seed = 0x5eed;
    bool bridge_correction = true;
    bool store_path = false;
    std::size_t path_stride = 1;
    std::size_t threads = 1;

    void validate() const;
};

} // namespace stochar
