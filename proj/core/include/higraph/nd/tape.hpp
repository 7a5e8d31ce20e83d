#pragma once

#include <functional>
#include <vector>

#include "higraph/nd/tensor.hpp"

namespace higraph::nd {

/// Reverse-mode tape. Ops push one backward step per recorded node in
/// forward order; `backward` seeds the loss cotangent and replays the
/// steps in reverse. Single-writer: one forward/backward pass at a time.
class Tape {
 public:
  void record(std::function<void()> backward_step) {
    if (recording_) steps_.push_back(std::move(backward_step));
  }

  bool recording() const { return recording_; }
  void set_recording(bool on) { recording_ = on; }
  std::size_t size() const { return steps_.size(); }
  void reset() { steps_.clear(); }

  /// Seeds d(loss)/d(loss) = 1 and accumulates gradients into every
  /// requires_grad tensor reachable from `loss`.
  void backward(Tensor loss);

 private:
  std::vector<std::function<void()>> steps_;
  bool recording_ = true;
};

}  // namespace higraph::nd
