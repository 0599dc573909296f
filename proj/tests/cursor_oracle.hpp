#pragma once

#include <cstddef>
#include <vector>

namespace oracle {

// Literal cursor walk of the stepped sampler pseudocode: push items until m
// have accumulated, emit, clear, rewind the cursor by m - n.
inline std::vector<std::size_t> simulate_cursor(std::size_t L, std::size_t m, std::size_t n) {
    std::vector<std::size_t> starts;
    std::vector<std::size_t> buf;
    std::size_t idx = 0;
    while (idx < L) {
        buf.push_back(idx);
        idx += 1;
        if (buf.size() == m) {
            starts.push_back(buf.front());
            buf.clear();
            idx = idx - m + n;
        }
    }
    return starts;
}

}  // namespace oracle
