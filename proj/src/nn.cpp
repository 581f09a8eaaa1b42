#include "ddamaze/nn.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>

namespace ddamaze {

NetworkShape shape_for(const RoomGrid& grid) {
  NetworkShape s;
  s.height = grid.height;
  s.width = grid.width;
  s.rooms = grid.room_count();
  return s;
}

ParameterSet::ParameterSet(const NetworkShape& s) {
  auto make = [](std::string name, std::vector<int> dims) {
    const auto n = std::accumulate(dims.begin(), dims.end(), std::size_t{1},
                                   [](std::size_t a, int b) { return a * static_cast<std::size_t>(b); });
    return Tensor{std::move(name), std::move(dims), AlignedDoubles(n, 0.0)};
  };
  tensors_.reserve(kSlotCount);
  tensors_.push_back(make("conv1.weight", {s.conv1_filters, 1, 3, 3}));
  tensors_.push_back(make("conv1.bias", {s.conv1_filters}));
  tensors_.push_back(make("conv2.weight", {s.conv2_filters, s.conv1_filters, 3, 3}));
  tensors_.push_back(make("conv2.bias", {s.conv2_filters}));
  tensors_.push_back(make("fc1.weight", {s.hidden, s.dense_inputs()}));
  tensors_.push_back(make("fc1.bias", {s.hidden}));
  tensors_.push_back(make("fc2.weight", {s.actions(), s.hidden}));
  tensors_.push_back(make("fc2.bias", {s.actions()}));
}

std::size_t ParameterSet::parameter_count() const {
  std::size_t n = 0;
  for (const auto& t : tensors_) n += t.data.size();
  return n;
}

double& ParameterSet::at(std::size_t index) {
  for (auto& t : tensors_) {
    if (index < t.data.size()) return t.data[index];
    index -= t.data.size();
  }
  throw NetworkError("parameter index out of range");
}

double ParameterSet::at(std::size_t index) const {
  return const_cast<ParameterSet*>(this)->at(index);
}

bool ParameterSet::all_finite() const {
  for (const auto& t : tensors_) {
    for (double v : t.data) {
      if (!std::isfinite(v)) return false;
    }
  }
  return true;
}

bool ParameterSet::same_shape(const ParameterSet& other) const {
  if (tensors_.size() != other.tensors_.size()) return false;
  for (std::size_t i = 0; i < tensors_.size(); ++i) {
    if (tensors_[i].dims != other.tensors_[i].dims) return false;
  }
  return true;
}

void ParameterSet::set_zero() {
  for (auto& t : tensors_) std::fill(t.data.begin(), t.data.end(), 0.0);
}

QNetwork::QNetwork(const NetworkShape& shape) : shape_(shape), params_(shape) {
  if (shape.height <= 0 || shape.width <= 0 || shape.rooms < 0 || shape.conv1_filters <= 0 ||
      shape.conv2_filters <= 0 || shape.hidden <= 0) {
    throw NetworkError("network dimensions must be positive");
  }
}

QNetwork QNetwork::initialized(const NetworkShape& shape, std::uint64_t seed) {
  QNetwork net(shape);
  std::mt19937_64 rng(seed);
  auto fill = [&](ParameterSet::Slot slot, int fan_in) {
    std::normal_distribution<double> normal(0.0, std::sqrt(2.0 / fan_in));
    for (double& v : net.params_[slot].data) v = normal(rng);
  };
  fill(ParameterSet::kConv1W, 9);
  fill(ParameterSet::kConv2W, 9 * shape.conv1_filters);
  fill(ParameterSet::kFc1W, shape.dense_inputs());
  fill(ParameterSet::kFc2W, shape.hidden);
  return net;
}

namespace {

using Mat = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
using ConstMap = Eigen::Map<const Mat>;
using ConstRowMap = Eigen::Map<const Eigen::RowVectorXd>;

ConstMap weight_map(const Tensor& t) {
  const int rows = t.dims[0];
  const int cols = static_cast<int>(t.data.size()) / rows;
  return ConstMap(t.data.data(), rows, cols);
}

ConstRowMap bias_map(const Tensor& t) {
  return ConstRowMap(t.data.data(), static_cast<Eigen::Index>(t.data.size()));
}

void accumulate_weight(Tensor& t, const Mat& g) {
  Eigen::Map<Mat>(t.data.data(), g.rows(), g.cols()) += g;
}

void accumulate_bias(Tensor& t, const Mat& dz) {
  Eigen::Map<Eigen::RowVectorXd>(t.data.data(), dz.cols()) += dz.colwise().sum();
}

// Patch matrix: rows are (sample, y, x); columns are (ky, kx, channel), so
// each kernel position copies a contiguous run of channels.
void im2col(const Mat& in, int batch, int h, int w, Mat& out) {
  const int channels = static_cast<int>(in.cols());
  const int hw = h * w;
  out.resize(static_cast<Eigen::Index>(batch) * hw, channels * 9);
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const Eigen::Index row = static_cast<Eigen::Index>(b) * hw + y * w + x;
        double* dst = out.row(row).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int yy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx, dst += channels) {
            const int xx = x + kx - 1;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) {
              std::fill(dst, dst + channels, 0.0);
            } else {
              const double* src = in.row(static_cast<Eigen::Index>(b) * hw + yy * w + xx).data();
              std::copy(src, src + channels, dst);
            }
          }
        }
      }
    }
  }
}

void col2im(const Mat& cols, int batch, int h, int w, int channels, Mat& out) {
  const int hw = h * w;
  out.setZero(static_cast<Eigen::Index>(batch) * hw, channels);
  for (int b = 0; b < batch; ++b) {
    for (int y = 0; y < h; ++y) {
      for (int x = 0; x < w; ++x) {
        const double* src = cols.row(static_cast<Eigen::Index>(b) * hw + y * w + x).data();
        for (int ky = 0; ky < 3; ++ky) {
          const int yy = y + ky - 1;
          for (int kx = 0; kx < 3; ++kx, src += channels) {
            const int xx = x + kx - 1;
            if (yy < 0 || yy >= h || xx < 0 || xx >= w) continue;
            double* dst = out.row(static_cast<Eigen::Index>(b) * hw + yy * w + xx).data();
            for (int c = 0; c < channels; ++c) dst[c] += src[c];
          }
        }
      }
    }
  }
}

// Conv weights are stored [out][in][ky][kx]; patch columns are (ky, kx, in).
void conv_weight_to_patch_order(const Tensor& t, Mat& out) {
  const int n_out = t.dims[0], n_in = t.dims[1];
  out.resize(n_out, n_in * 9);
  for (int o = 0; o < n_out; ++o)
    for (int i = 0; i < n_in; ++i)
      for (int k = 0; k < 9; ++k) out(o, k * n_in + i) = t.data[(o * n_in + i) * 9 + k];
}

void accumulate_conv_weight(Tensor& t, const Mat& g) {
  const int n_out = t.dims[0], n_in = t.dims[1];
  for (int o = 0; o < n_out; ++o)
    for (int i = 0; i < n_in; ++i)
      for (int k = 0; k < 9; ++k) t.data[(o * n_in + i) * 9 + k] += g(o, k * n_in + i);
}

struct Activations {
  int batch = 0;
  Mat input, w1, w2, p1, z1, a1, p2, z2t, x, z3, a3, q;
};

// Scratch matrices reused across calls; sized on first use.
struct Workspace {
  Activations act;
  Mat dq, dz3, dx, dz2t, dp2, da1, g;
};

Workspace& workspace() {
  thread_local Workspace ws;
  return ws;
}

void check_state(const NetworkShape& s, const StateEncoding& st) {
  if (st.height != s.height || st.width != s.width ||
      st.codes.size() != static_cast<std::size_t>(s.cells()) ||
      st.occupied.size() != static_cast<std::size_t>(s.rooms)) {
    throw NetworkError("state encoding does not match network shape");
  }
}

void run_forward(const NetworkShape& s, const ParameterSet& p,
                 std::span<const StateEncoding* const> states, Activations& act) {
  const int batch = static_cast<int>(states.size());
  const int hw = s.cells();
  act.batch = batch;

  act.input.resize(static_cast<Eigen::Index>(batch) * hw, 1);
  for (int b = 0; b < batch; ++b) {
    check_state(s, *states[b]);
    for (int i = 0; i < hw; ++i) {
      act.input(static_cast<Eigen::Index>(b) * hw + i, 0) = states[b]->map_value(i);
    }
  }

  conv_weight_to_patch_order(p[ParameterSet::kConv1W], act.w1);
  im2col(act.input, batch, s.height, s.width, act.p1);
  act.z1.noalias() = act.p1 * act.w1.transpose();
  act.z1.rowwise() += bias_map(p[ParameterSet::kConv1B]);
  act.a1 = act.z1.cwiseMax(0.0);

  // Second convolution is computed transposed (channel x position) so each
  // channel's feature map is contiguous when flattened.
  conv_weight_to_patch_order(p[ParameterSet::kConv2W], act.w2);
  im2col(act.a1, batch, s.height, s.width, act.p2);
  act.z2t.noalias() = act.w2 * act.p2.transpose();
  act.z2t.colwise() += Eigen::Map<const Eigen::VectorXd>(p[ParameterSet::kConv2B].data.data(),
                                                         s.conv2_filters);

  // Flatten channel-major: feature index = channel * hw + cell.
  const int c2 = s.conv2_filters;
  act.x.resize(batch, s.dense_inputs());
  for (int b = 0; b < batch; ++b) {
    double* row = act.x.row(b).data();
    for (int c = 0; c < c2; ++c) {
      const double* src = act.z2t.row(c).data() + static_cast<std::ptrdiff_t>(b) * hw;
      double* dst = row + c * hw;
      for (int i = 0; i < hw; ++i) dst[i] = std::max(0.0, src[i]);
    }
    const int base = c2 * hw;
    row[base] = states[b]->difficulty;
    row[base + 1] = states[b]->crossings / 10.0;
    for (int r = 0; r < s.rooms; ++r) row[base + 2 + r] = states[b]->occupied[r];
  }

  act.z3.noalias() = act.x * weight_map(p[ParameterSet::kFc1W]).transpose();
  act.z3.rowwise() += bias_map(p[ParameterSet::kFc1B]);
  act.a3 = act.z3.cwiseMax(0.0);
  act.q.noalias() = act.a3 * weight_map(p[ParameterSet::kFc2W]).transpose();
  act.q.rowwise() += bias_map(p[ParameterSet::kFc2B]);
}

void mask_by_relu(Mat& grad, const Mat& z) {
  grad = (z.array() > 0.0).select(grad, 0.0);
}

}  // namespace

std::vector<double> QNetwork::forward(const StateEncoding& state) const {
  const StateEncoding* ptr = &state;
  return forward_batch(std::span<const StateEncoding* const>(&ptr, 1)).front();
}

std::vector<std::vector<double>> QNetwork::forward_batch(
    std::span<const StateEncoding* const> states) const {
  auto& act = workspace().act;
  run_forward(shape_, params_, states, act);
  std::vector<std::vector<double>> out(states.size());
  for (std::size_t b = 0; b < states.size(); ++b) {
    out[b].assign(act.q.row(static_cast<Eigen::Index>(b)).begin(),
                  act.q.row(static_cast<Eigen::Index>(b)).end());
  }
  return out;
}

LossAndGradients loss_and_gradients(const QNetwork& net, std::span<const Sample> batch) {
  LossAndGradients out;
  out.loss = loss_and_gradients(net, batch, out.gradients);
  return out;
}

double loss_and_gradients(const QNetwork& net, std::span<const Sample> batch, GradientSet& g) {
  if (batch.empty()) throw NetworkError("empty batch");
  const auto& s = net.shape();
  const auto& p = net.params();
  std::vector<const StateEncoding*> states;
  states.reserve(batch.size());
  for (const auto& item : batch) {
    if (!std::isfinite(item.target)) throw NetworkError("non-finite target");
    if (item.action < 0 || item.action >= s.actions()) throw NetworkError("action out of range");
    states.push_back(item.state);
  }

  auto& ws = workspace();
  auto& act = ws.act;
  run_forward(s, p, states, act);
  const int n = static_cast<int>(batch.size());
  const int hw = s.cells();

  if (g.same_shape(p)) {
    g.set_zero();
  } else {
    g = GradientSet(s);
  }

  double loss = 0.0;
  ws.dq.setZero(n, s.actions());
  for (int b = 0; b < n; ++b) {
    const double diff = act.q(b, batch[b].action) - batch[b].target;
    loss += diff * diff;
    ws.dq(b, batch[b].action) = 2.0 * diff / n;
  }
  loss /= n;

  ws.g.noalias() = ws.dq.transpose() * act.a3;
  accumulate_weight(g[ParameterSet::kFc2W], ws.g);
  accumulate_bias(g[ParameterSet::kFc2B], ws.dq);

  ws.dz3.noalias() = ws.dq * weight_map(p[ParameterSet::kFc2W]);
  mask_by_relu(ws.dz3, act.z3);
  ws.g.noalias() = ws.dz3.transpose() * act.x;
  accumulate_weight(g[ParameterSet::kFc1W], ws.g);
  accumulate_bias(g[ParameterSet::kFc1B], ws.dz3);

  ws.dx.noalias() = ws.dz3 * weight_map(p[ParameterSet::kFc1W]);
  const int c2 = s.conv2_filters;
  ws.dz2t.resize(c2, static_cast<Eigen::Index>(n) * hw);
  for (int c = 0; c < c2; ++c) {
    double* dst = ws.dz2t.row(c).data();
    const double* z = act.z2t.row(c).data();
    for (int b = 0; b < n; ++b) {
      const double* src = ws.dx.row(b).data() + c * hw;
      const std::ptrdiff_t off = static_cast<std::ptrdiff_t>(b) * hw;
      for (int i = 0; i < hw; ++i) dst[off + i] = z[off + i] > 0.0 ? src[i] : 0.0;
    }
  }
  ws.g.noalias() = ws.dz2t * act.p2;
  accumulate_conv_weight(g[ParameterSet::kConv2W], ws.g);
  Eigen::Map<Eigen::VectorXd>(g[ParameterSet::kConv2B].data.data(), c2) += ws.dz2t.rowwise().sum();

  ws.dp2.noalias() = ws.dz2t.transpose() * act.w2;
  col2im(ws.dp2, n, s.height, s.width, s.conv1_filters, ws.da1);
  mask_by_relu(ws.da1, act.z1);
  ws.g.noalias() = ws.da1.transpose() * act.p1;
  accumulate_conv_weight(g[ParameterSet::kConv1W], ws.g);
  accumulate_bias(g[ParameterSet::kConv1B], ws.da1);
  return loss;
}

AdamState make_adam_state(const NetworkShape& shape) {
  AdamState st;
  st.m = ParameterSet(shape);
  st.v = ParameterSet(shape);
  return st;
}

void adam_step(ParameterSet& params, const GradientSet& grads, AdamState& state, double lr) {
  if (!params.same_shape(grads) || !params.same_shape(state.m) || !params.same_shape(state.v)) {
    throw NetworkError("adam: parameter, gradient and moment shapes differ");
  }
  if (!grads.all_finite()) throw NetworkError("adam: non-finite gradient");
  state.t += 1;
  const double c1 = 1.0 - std::pow(state.beta1, static_cast<double>(state.t));
  const double c2 = 1.0 - std::pow(state.beta2, static_cast<double>(state.t));
  using Arr = Eigen::Map<Eigen::ArrayXd>;
  using ConstArr = Eigen::Map<const Eigen::ArrayXd>;
  auto& pt = params.tensors();
  for (std::size_t k = 0; k < pt.size(); ++k) {
    const auto n = static_cast<Eigen::Index>(pt[k].data.size());
    Arr w(pt[k].data.data(), n);
    ConstArr gk(grads.tensors()[k].data.data(), n);
    Arr mk(state.m.tensors()[k].data.data(), n);
    Arr vk(state.v.tensors()[k].data.data(), n);
    mk = state.beta1 * mk + (1.0 - state.beta1) * gk;
    vk = state.beta2 * vk + (1.0 - state.beta2) * gk.square();
    w -= lr * (mk / c1) / ((vk / c2).sqrt() + state.epsilon);
  }
}

double grad_check(const QNetwork& net, const StateEncoding& state, int action, double step,
                  double sample_fraction, std::uint64_t seed, double floor) {
  const Sample sample{&state, action, 0.0};
  const auto analytic = loss_and_gradients(net, std::span<const Sample>(&sample, 1)).gradients;

  const std::size_t total = net.params().parameter_count();
  std::vector<std::size_t> indices(total);
  std::iota(indices.begin(), indices.end(), std::size_t{0});
  if (sample_fraction < 1.0) {
    std::mt19937_64 rng(seed);
    std::shuffle(indices.begin(), indices.end(), rng);
    const auto keep = std::max<std::size_t>(
        1, static_cast<std::size_t>(std::ceil(sample_fraction * static_cast<double>(total))));
    indices.resize(std::min(keep, total));
  }

  QNetwork probe = net;
  auto loss_at = [&] {
    const double q = probe.forward(state)[static_cast<std::size_t>(action)];
    return q * q;
  };
  double worst = 0.0;
  for (std::size_t idx : indices) {
    double& w = probe.params().at(idx);
    const double original = w;
    w = original + step;
    const double up = loss_at();
    w = original - step;
    const double down = loss_at();
    w = original;
    const double numeric = (up - down) / (2.0 * step);
    const double a = analytic.at(idx);
    const double denom = std::max({std::abs(a), std::abs(numeric), floor});
    worst = std::max(worst, std::abs(a - numeric) / denom);
  }
  return worst;
}

nlohmann::ordered_json shape_to_json(const NetworkShape& s) {
  nlohmann::ordered_json doc;
  doc["height"] = s.height;
  doc["width"] = s.width;
  doc["rooms"] = s.rooms;
  doc["conv1_filters"] = s.conv1_filters;
  doc["conv2_filters"] = s.conv2_filters;
  doc["hidden"] = s.hidden;
  return doc;
}

NetworkShape shape_from_json(const nlohmann::json& doc) {
  NetworkShape s;
  s.height = doc.at("height").get<int>();
  s.width = doc.at("width").get<int>();
  s.rooms = doc.at("rooms").get<int>();
  s.conv1_filters = doc.at("conv1_filters").get<int>();
  s.conv2_filters = doc.at("conv2_filters").get<int>();
  s.hidden = doc.at("hidden").get<int>();
  return s;
}

nlohmann::ordered_json parameters_to_json(const ParameterSet& params) {
  auto tensors = nlohmann::ordered_json::array();
  for (const auto& t : params.tensors()) {
    nlohmann::ordered_json j;
    j["name"] = t.name;
    j["dims"] = t.dims;
    j["data"] = t.data;
    tensors.push_back(std::move(j));
  }
  return tensors;
}

ParameterSet parameters_from_json(const nlohmann::json& doc, const NetworkShape& shape) {
  ParameterSet params(shape);
  if (!doc.is_array() || doc.size() != params.tensors().size()) {
    throw NetworkError("parameter document has the wrong number of tensors");
  }
  for (std::size_t k = 0; k < doc.size(); ++k) {
    auto& t = params.tensors()[k];
    if (doc[k].at("name").get<std::string>() != t.name ||
        doc[k].at("dims").get<std::vector<int>>() != t.dims) {
      throw NetworkError("tensor '" + t.name + "' missing or misshapen");
    }
    auto data = doc[k].at("data").get<std::vector<double>>();
    if (data.size() != t.data.size()) throw NetworkError("tensor '" + t.name + "' has wrong size");
    t.data.assign(data.begin(), data.end());
  }
  return params;
}

nlohmann::ordered_json network_to_json(const QNetwork& net) {
  nlohmann::ordered_json doc;
  doc["v"] = kNetworkSchemaVersion;
  doc["shape"] = shape_to_json(net.shape());
  doc["tensors"] = parameters_to_json(net.params());
  return doc;
}

QNetwork network_from_json(const nlohmann::json& doc) {
  try {
    if (doc.at("v").get<int>() != kNetworkSchemaVersion) {
      throw NetworkError("unsupported network schema version");
    }
    QNetwork net(shape_from_json(doc.at("shape")));
    net.params() = parameters_from_json(doc.at("tensors"), net.shape());
    return net;
  } catch (const nlohmann::json::exception& e) {
    throw NetworkError(std::string("malformed network document: ") + e.what());
  }
}

}  // namespace ddamaze
