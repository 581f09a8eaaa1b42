#pragma once

#include <cstddef>
#include <cstdint>
#include <new>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "ddamaze/maze.hpp"

namespace ddamaze {

class NetworkError : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

/// Layer sizes. Both convolutions are 3x3, stride 1, zero "same" padding.
struct NetworkShape {
  int height = 16;
  int width = 16;
  int rooms = 8;
  int conv1_filters = 8;
  int conv2_filters = 16;
  int hidden = 128;

  int actions() const { return rooms + 1; }
  int cells() const { return height * width; }
  /// difficulty, crossings/10, occupied flags
  int extras() const { return 2 + rooms; }
  int dense_inputs() const { return conv2_filters * cells() + extras(); }

  bool operator==(const NetworkShape&) const = default;
};

NetworkShape shape_for(const RoomGrid& grid);

/// 64-byte aligned storage. Vectorized Eigen reductions peel an unaligned
/// head whose length depends on the address, which would make sums differ
/// between otherwise identical runs.
template <class T>
struct AlignedAllocator {
  using value_type = T;
  static constexpr std::align_val_t kAlign{64};

  AlignedAllocator() = default;
  template <class U>
  AlignedAllocator(const AlignedAllocator<U>&) noexcept {}

  T* allocate(std::size_t n) { return static_cast<T*>(::operator new(n * sizeof(T), kAlign)); }
  void deallocate(T* p, std::size_t) noexcept { ::operator delete(p, kAlign); }

  template <class U>
  bool operator==(const AlignedAllocator<U>&) const noexcept { return true; }
};

using AlignedDoubles = std::vector<double, AlignedAllocator<double>>;

struct Tensor {
  std::string name;
  std::vector<int> dims;
  AlignedDoubles data;

  bool operator==(const Tensor&) const = default;
};

/// Parameters (or gradients, or optimizer moments) in a fixed tensor order.
class ParameterSet {
 public:
  enum Slot { kConv1W, kConv1B, kConv2W, kConv2B, kFc1W, kFc1B, kFc2W, kFc2B, kSlotCount };

  ParameterSet() = default;
  explicit ParameterSet(const NetworkShape& shape);

  Tensor& operator[](Slot s) { return tensors_[s]; }
  const Tensor& operator[](Slot s) const { return tensors_[s]; }
  std::vector<Tensor>& tensors() { return tensors_; }
  const std::vector<Tensor>& tensors() const { return tensors_; }

  std::size_t parameter_count() const;
  /// Flat view by global index across all tensors.
  double& at(std::size_t index);
  double at(std::size_t index) const;
  bool all_finite() const;
  bool same_shape(const ParameterSet& other) const;
  void set_zero();

  bool operator==(const ParameterSet&) const = default;

 private:
  std::vector<Tensor> tensors_;
};

using GradientSet = ParameterSet;

/// conv(8) -> ReLU -> conv(16) -> ReLU -> flatten ++ extras -> dense(128)
/// -> ReLU -> dense(n+1).
class QNetwork {
 public:
  QNetwork() = default;
  /// All-zero parameters.
  explicit QNetwork(const NetworkShape& shape);
  /// He-normal weights, zero biases.
  static QNetwork initialized(const NetworkShape& shape, std::uint64_t seed);

  const NetworkShape& shape() const { return shape_; }
  ParameterSet& params() { return params_; }
  const ParameterSet& params() const { return params_; }

  std::vector<double> forward(const StateEncoding& state) const;
  /// Row b holds the Q-values of states[b].
  std::vector<std::vector<double>> forward_batch(std::span<const StateEncoding* const> states) const;

  bool operator==(const QNetwork&) const = default;

 private:
  NetworkShape shape_;
  ParameterSet params_;
};

struct Sample {
  const StateEncoding* state = nullptr;
  int action = 0;
  double target = 0.0;
};

struct LossAndGradients {
  double loss = 0.0;
  GradientSet gradients;
};

/// Mean squared TD error on the taken actions and its gradient.
LossAndGradients loss_and_gradients(const QNetwork& net, std::span<const Sample> batch);
/// Same, writing into a caller-owned gradient set (reshaped if needed).
double loss_and_gradients(const QNetwork& net, std::span<const Sample> batch, GradientSet& gradients);

struct AdamState {
  long t = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double epsilon = 1e-8;
  ParameterSet m;
  ParameterSet v;

  bool operator==(const AdamState&) const = default;
};

AdamState make_adam_state(const NetworkShape& shape);

/// One Adam update; increments state.t before applying bias correction.
void adam_step(ParameterSet& params, const GradientSet& grads, AdamState& state, double lr);

/// Worst relative error between backprop and central differences of the
/// single-sample loss (Q(s)[a] - 0)^2. Gradient pairs whose magnitudes are
/// both below `floor` are compared against `floor` instead. With
/// sample_fraction < 1, a seeded random subset of parameters is checked.
double grad_check(const QNetwork& net, const StateEncoding& state, int action,
                  double step = 1e-5, double sample_fraction = 1.0, std::uint64_t seed = 0,
                  double floor = 1e-6);

inline constexpr int kNetworkSchemaVersion = 1;

nlohmann::ordered_json parameters_to_json(const ParameterSet& params);
ParameterSet parameters_from_json(const nlohmann::json& doc, const NetworkShape& shape);
nlohmann::ordered_json shape_to_json(const NetworkShape& shape);
NetworkShape shape_from_json(const nlohmann::json& doc);
nlohmann::ordered_json network_to_json(const QNetwork& net);
QNetwork network_from_json(const nlohmann::json& doc);

}  // namespace ddamaze
