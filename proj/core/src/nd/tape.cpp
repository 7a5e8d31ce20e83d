#include "higraph/nd/tape.hpp"

namespace higraph::nd {

void Tape::backward(Tensor loss) {
  if (steps_.empty()) throw NoTape("backward called on an empty tape");
  if (loss.size() != 1)
    throw ShapeMismatch("backward requires a scalar loss, got shape " +
                        shape_str(loss.shape()));
  loss.grad()[0] += 1.0;
  for (auto it = steps_.rbegin(); it != steps_.rend(); ++it) (*it)();
}

}  // namespace higraph::nd
