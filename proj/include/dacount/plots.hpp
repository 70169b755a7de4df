#pragma once

#include <string>
#include <vector>

#include "dacount/tensor.hpp"
#include "dacount/train.hpp"

namespace dacount {

// Line chart of the per-step loss components. Colors: counting loss blue,
// total black, discriminator losses red, adversarial terms orange,
// pyramid term green.
void plot_loss_curves(const std::vector<StepLog>& log, const std::string& path);

// Tiles equally sized maps into a grid PNG (one row per entry), each row
// normalized by its own maximum and rendered with a heat colormap.
void plot_map_grid(const std::vector<std::vector<Tensor>>& rows, const std::string& path,
                   int zoom = 2);

}  // namespace dacount
