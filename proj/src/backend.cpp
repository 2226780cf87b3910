#include "rpna/backend.hpp"

#include "rpna/error.hpp"

namespace rpna {

void check_states_shape(const HiddenStates& states, const BackendDescriptor& descriptor) {
  if (states.layers() != descriptor.layers || states.dims() != descriptor.dims) {
    throw ShapeMismatchError("backend '" + descriptor.name + "' declared (L=" +
                             std::to_string(descriptor.layers) + ", d=" +
                             std::to_string(descriptor.dims) + ") but activations have (L=" +
                             std::to_string(states.layers()) + ", d=" +
                             std::to_string(states.dims()) + ")");
  }
}

}  // namespace rpna
