#pragma once

#include <string>
#include <string_view>
#include <vector>

#include "rnet/network.hpp"

namespace rnet {

const std::vector<std::string>& preset_names();

/// SGD rate used when none is configured. The branchy and residual presets
/// blow up in the first epoch at 0.05 and never recover (dead ReLUs), so they
/// get 0.01; unknown names get the conservative value too.
double preset_learning_rate(std::string_view name);

/// Desk-scale analogue of a classic architecture family. The returned spec
/// ends at the feature layer; class_count only has to be >= 2 since heads
/// are attached separately. Input spatial dims must be >= 32.
NetworkSpec preset(std::string_view name, const Shape& input_shape, std::size_t class_count);

}  // namespace rnet
