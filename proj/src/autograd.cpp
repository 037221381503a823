#include "pfan/tensor.hpp"

#include <sstream>

namespace pfan {

Index shape_numel(const Shape& shape) {
  Index n = 1;
  for (Index e : shape) {
    if (e < 1) throw ShapeError("shape " + shape_str(shape) + " has a non-positive extent");
    n *= e;
  }
  return n;
}

std::string shape_str(const Shape& shape) {
  std::ostringstream os;
  os << '[';
  for (std::size_t i = 0; i < shape.size(); ++i) os << (i ? "x" : "") << shape[i];
  os << ']';
  return os.str();
}

namespace detail {
bool& grad_mode_flag() {
  thread_local bool enabled = true;
  return enabled;
}
}  // namespace detail

}  // namespace pfan
