#include "flowlens/components.hpp"

#include <algorithm>

namespace flowlens {

std::vector<std::vector<Pixel>> label_components(const BinaryMask& mask) {
    const int w = mask.width();
    const int h = mask.height();
    std::vector<bool> visited(static_cast<std::size_t>(w) * h, false);
    std::vector<std::vector<Pixel>> components;
    std::vector<Pixel> stack;

    for (int y = 0; y < h; ++y) {
        for (int x = 0; x < w; ++x) {
            std::size_t idx = static_cast<std::size_t>(y) * w + x;
            if (!mask.at(x, y) || visited[idx]) continue;

            std::vector<Pixel> comp;
            stack.clear();
            stack.emplace_back(x, y);
            visited[idx] = true;
            while (!stack.empty()) {
                auto [cx, cy] = stack.back();
                stack.pop_back();
                comp.emplace_back(cx, cy);
                for (int dy = -1; dy <= 1; ++dy) {
                    for (int dx = -1; dx <= 1; ++dx) {
                        if (dx == 0 && dy == 0) continue;
                        int nx = cx + dx;
                        int ny = cy + dy;
                        if (nx < 0 || nx >= w || ny < 0 || ny >= h) continue;
                        std::size_t nidx = static_cast<std::size_t>(ny) * w + nx;
                        if (!visited[nidx] && mask.at(nx, ny)) {
                            visited[nidx] = true;
                            stack.emplace_back(nx, ny);
                        }
                    }
                }
            }
            std::sort(comp.begin(), comp.end(), [w](const Pixel& a, const Pixel& b) {
                return a.second * w + a.first < b.second * w + b.first;
            });
            components.push_back(std::move(comp));
        }
    }
    return components;
}

} // namespace flowlens
