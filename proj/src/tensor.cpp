#include "spyflow/flow_field.hpp"
#include "spyflow/tensor.hpp"

namespace spyflow {

std::string shape_to_string(std::span<const int> shape) {
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

std::string resolution_string(int height, int width) {
    return std::to_string(height) + "x" + std::to_string(width);
}

}  // namespace spyflow
