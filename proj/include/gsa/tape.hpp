#pragma once

#include <cstdint>
#include <functional>
#include <map>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "gsa/tensor.hpp"

namespace gsa {

// Ordered record of executed operations for reverse-mode differentiation.
//
// Each entry holds its inputs, its output and a backward rule that receives
// the output gradient and accumulates into the inputs' gradient buffers.
// A tape in inference mode records nothing and its outputs never require
// gradients.
class GradientTape {
 public:
  enum class Mode { kRecord, kInference };
  using BackwardFn = std::function<void(std::span<const real> grad_out)>;

  explicit GradientTape(Mode mode = Mode::kRecord) : mode_(mode) {}
  GradientTape(const GradientTape&) = delete;
  GradientTape& operator=(const GradientTape&) = delete;

  bool recording() const noexcept { return mode_ == Mode::kRecord; }
  std::size_t size() const noexcept { return entries_.size(); }

  // True when an op with these inputs must be recorded.
  bool should_record(std::initializer_list<const Tensor*> inputs) const;
  bool should_record(std::span<const Tensor> inputs) const;

  void record(std::string_view op, std::vector<Tensor> inputs, Tensor output,
              BackwardFn backward);

  // Seeds d(loss)/d(loss) = 1 and replays entries in reverse order.
  void backward(Tensor& loss);

  // Zeroes the gradient of every tensor the tape has seen, then forgets
  // all entries.
  void clear();

  // Test hook: scale the output gradient that reaches the backward rule
  // of every `op` entry. Used as a negative control for gradient checks.
  void inject_fault(std::string op, real scale) {
    faults_[std::move(op)] = scale;
  }

  // Branch fingerprint. When enabled, piecewise ops (ReLU sign, max-pool
  // winner) fold the branch they took into one hash, so two evaluations
  // with equal fingerprints lie on the same smooth piece.
  void track_branches(bool on) {
    track_branches_ = on;
    branches_ = kFnvOffset;
  }
  bool tracking_branches() const noexcept { return track_branches_; }
  void mix_branch(std::uint64_t v) noexcept {
    branches_ = (branches_ ^ v) * 0x100000001b3ULL;
  }
  std::uint64_t branch_fingerprint() const noexcept { return branches_; }

 private:
  struct Entry {
    std::string op;
    std::vector<Tensor> inputs;
    Tensor output;
    BackwardFn backward;
  };

  Mode mode_;
  std::vector<Entry> entries_;
  std::map<std::string, real, std::less<>> faults_;
  static constexpr std::uint64_t kFnvOffset = 0xcbf29ce484222325ULL;
  bool track_branches_ = false;
  std::uint64_t branches_ = kFnvOffset;
};

inline void backward(Tensor& loss, GradientTape& tape) { tape.backward(loss); }

}  // namespace gsa
