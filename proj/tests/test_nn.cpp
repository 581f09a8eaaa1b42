#include <doctest.h>

#include <cmath>
#include <limits>
#include <random>

#include "ddamaze/nn.hpp"
#include "support/oracles.hpp"

using namespace ddamaze;

namespace {

NetworkShape tiny_shape(int h = 4, int w = 5, int rooms = 3) {
  NetworkShape s;
  s.height = h;
  s.width = w;
  s.rooms = rooms;
  s.conv1_filters = 2;
  s.conv2_filters = 3;
  s.hidden = 6;
  return s;
}

StateEncoding random_state(const NetworkShape& s, std::uint64_t seed) {
  std::mt19937_64 rng(seed);
  StateEncoding e;
  e.height = s.height;
  e.width = s.width;
  std::uniform_int_distribution<int> code(0, 4 + s.rooms);
  for (int i = 0; i < s.cells(); ++i) e.codes.push_back(static_cast<std::uint8_t>(code(rng)));
  e.difficulty = std::uniform_real_distribution<double>(0.0, 1.0)(rng);
  e.crossings = static_cast<int>(rng() % 7);
  for (int r = 0; r < s.rooms; ++r) e.occupied.push_back(static_cast<std::uint8_t>(rng() % 2));
  return e;
}

// Small random biases too, so ReLU kinks are not hit exactly at zero.
QNetwork random_net(const NetworkShape& s, std::uint64_t seed) {
  QNetwork net = QNetwork::initialized(s, seed);
  std::mt19937_64 rng(seed ^ 0xB1A5);
  std::normal_distribution<double> n(0.0, 0.1);
  for (auto slot : {ParameterSet::kConv1B, ParameterSet::kConv2B, ParameterSet::kFc1B, ParameterSet::kFc2B}) {
    for (double& b : net.params()[slot].data) b = n(rng);
  }
  return net;
}

double max_abs_diff(const std::vector<double>& a, const std::vector<double>& b) {
  REQUIRE(a.size() == b.size());
  double worst = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) worst = std::max(worst, std::abs(a[i] - b[i]));
  return worst;
}

double loss_of(const QNetwork& net, std::span<const Sample> batch) {
  double sum = 0.0;
  for (const auto& s : batch) {
    const double d = net.forward(*s.state)[static_cast<std::size_t>(s.action)] - s.target;
    sum += d * d;
  }
  return sum / static_cast<double>(batch.size());
}

}  // namespace

TEST_CASE("shape of the default network") {
  const NetworkShape s = shape_for(default_grid());
  CHECK(s.height == 16);
  CHECK(s.width == 16);
  CHECK(s.actions() == 9);
  CHECK(s.extras() == 10);
  CHECK(s.dense_inputs() == 16 * 256 + 10);

  const ParameterSet p(s);
  const std::size_t expected = 8 * 1 * 9 + 8 + 16 * 8 * 9 + 16 + 128 * (16 * 256 + 10) + 128 + 9 * 128 + 9;
  CHECK(p.parameter_count() == expected);

  NetworkShape bad = s;
  bad.hidden = 0;
  CHECK_THROWS_AS(QNetwork{bad}, NetworkError);
}

TEST_CASE("zero parameters give zero output") {
  const NetworkShape s = tiny_shape();
  const QNetwork net(s);
  for (std::uint64_t seed = 0; seed < 5; ++seed) {
    for (double q : net.forward(random_state(s, seed))) CHECK(q == 0.0);
  }
}

TEST_CASE("forward agrees with a loop implementation") {
  for (std::uint64_t seed = 1; seed <= 6; ++seed) {
    const NetworkShape s = tiny_shape(3 + static_cast<int>(seed % 3), 4 + static_cast<int>(seed % 2), 2 + static_cast<int>(seed % 3));
    const QNetwork net = random_net(s, seed);
    const auto state = random_state(s, seed * 7);
    const auto got = net.forward(state);
    CHECK(got.size() == static_cast<std::size_t>(s.actions()));
    CHECK(max_abs_diff(got, oracle::naive_forward(net, state)) < 1e-12);
  }

  SUBCASE("full size") {
    const NetworkShape s = shape_for(default_grid());
    const QNetwork net = random_net(s, 99);
    const auto state = random_state(s, 3);
    CHECK(max_abs_diff(net.forward(state), oracle::naive_forward(net, state)) < 1e-10);
  }
}

TEST_CASE("forward is pure and batch forward matches") {
  const NetworkShape s = tiny_shape();
  const QNetwork net = random_net(s, 4);
  const QNetwork copy = net;
  std::vector<StateEncoding> states;
  for (std::uint64_t i = 0; i < 5; ++i) states.push_back(random_state(s, 100 + i));
  std::vector<const StateEncoding*> ptrs;
  for (const auto& st : states) ptrs.push_back(&st);

  const auto first = net.forward(states[0]);
  CHECK(net.forward(states[0]) == first);
  const auto rows = net.forward_batch(ptrs);
  REQUIRE(rows.size() == states.size());
  for (std::size_t i = 0; i < states.size(); ++i) CHECK(max_abs_diff(rows[i], net.forward(states[i])) < 1e-13);
  CHECK(net == copy);
}

TEST_CASE("loss and gradient basics") {
  const NetworkShape s = tiny_shape();
  const QNetwork net = random_net(s, 11);
  const auto state = random_state(s, 12);
  const auto q = net.forward(state);

  SUBCASE("target equal to Q gives zero loss and zero gradient") {
    const Sample sample{&state, 1, q[1]};
    const auto lg = loss_and_gradients(net, std::span<const Sample>(&sample, 1));
    CHECK(lg.loss < 1e-28);
    for (std::size_t i = 0; i < lg.gradients.parameter_count(); ++i) CHECK(std::abs(lg.gradients.at(i)) < 1e-14);
  }

  SUBCASE("output bias gradient is 2 (Q - y) on the taken action only") {
    const Sample sample{&state, 2, q[2] - 0.75};
    const auto lg = loss_and_gradients(net, std::span<const Sample>(&sample, 1));
    CHECK(lg.loss == doctest::Approx(0.75 * 0.75));
    const auto& bias = lg.gradients[ParameterSet::kFc2B].data;
    for (int a = 0; a < s.actions(); ++a) {
      if (a == 2) {
        CHECK(bias[2] == doctest::Approx(1.5));
      } else {
        CHECK(bias[static_cast<std::size_t>(a)] == 0.0);
      }
    }
    const auto& w = lg.gradients[ParameterSet::kFc2W].data;
    for (int a = 0; a < s.actions(); ++a) {
      if (a == 2) continue;
      for (int h = 0; h < s.hidden; ++h) CHECK(w[static_cast<std::size_t>(a * s.hidden + h)] == 0.0);
    }
  }

  SUBCASE("loss matches a direct evaluation") {
    std::vector<StateEncoding> states;
    for (std::uint64_t i = 0; i < 4; ++i) states.push_back(random_state(s, 40 + i));
    std::vector<Sample> batch;
    for (std::size_t i = 0; i < states.size(); ++i) {
      batch.push_back({&states[i], static_cast<int>(i) % s.actions(), 0.3 * static_cast<double>(i) - 0.5});
    }
    CHECK(loss_and_gradients(net, batch).loss == doctest::Approx(loss_of(net, batch)).epsilon(1e-12));
  }
}

TEST_CASE("batch gradients match central differences") {
  const NetworkShape s = tiny_shape(3, 4, 2);
  const QNetwork net = random_net(s, 21);
  std::vector<StateEncoding> states;
  for (std::uint64_t i = 0; i < 3; ++i) states.push_back(random_state(s, 50 + i));
  std::vector<Sample> batch;
  for (std::size_t i = 0; i < states.size(); ++i) batch.push_back({&states[i], static_cast<int>(i), 0.2 - 0.4 * static_cast<double>(i)});

  const auto lg = loss_and_gradients(net, batch);
  QNetwork probe = net;
  const double h = 1e-6;
  double worst = 0.0;
  for (std::size_t i = 0; i < probe.params().parameter_count(); ++i) {
    double& w = probe.params().at(i);
    const double orig = w;
    w = orig + h;
    const double up = loss_of(probe, batch);
    w = orig - h;
    const double down = loss_of(probe, batch);
    w = orig;
    const double numeric = (up - down) / (2 * h);
    const double analytic = lg.gradients.at(i);
    const double scale = std::max({std::abs(numeric), std::abs(analytic), 1e-6});
    worst = std::max(worst, std::abs(numeric - analytic) / scale);
  }
  CHECK(worst < 1e-4);
}

TEST_CASE("grad_check") {
  for (std::uint64_t seed = 1; seed <= 5; ++seed) {
    const NetworkShape s = tiny_shape();
    const QNetwork net = random_net(s, seed);
    CHECK(grad_check(net, random_state(s, seed + 30), static_cast<int>(seed) % s.actions()) < 1e-4);
  }

  SUBCASE("purely linear positive network") {
    const NetworkShape s = tiny_shape();
    QNetwork net(s);
    for (std::size_t i = 0; i < net.params().parameter_count(); ++i) net.params().at(i) = 0.05;
    const double err = grad_check(net, random_state(s, 1), 0);
    INFO("worst relative error ", err);
    CHECK(err < 1e-6);
  }

  SUBCASE("zero network has nothing to disagree on") {
    const NetworkShape s = tiny_shape();
    CHECK(grad_check(QNetwork(s), random_state(s, 1), 0) < 1e-9);
  }
}

TEST_CASE("adam") {
  SUBCASE("zero gradients leave parameters unchanged") {
    const NetworkShape s = tiny_shape();
    QNetwork net = random_net(s, 3);
    const ParameterSet before = net.params();
    AdamState st = make_adam_state(s);
    GradientSet g(s);
    for (int i = 0; i < 5; ++i) adam_step(net.params(), g, st, 1e-2);
    CHECK(net.params() == before);
    CHECK(st.t == 5);
  }

  SUBCASE("first step moves a scalar by the learning rate") {
    ParameterSet p(tiny_shape());
    GradientSet g(tiny_shape());
    AdamState st = make_adam_state(tiny_shape());
    g.at(0) = 1.0;
    g.at(1) = -3.0;
    adam_step(p, g, st, 0.1);
    CHECK(p.at(0) == doctest::Approx(-0.1).epsilon(1e-6));
    CHECK(p.at(1) == doctest::Approx(0.1).epsilon(1e-6));
    CHECK(p.at(2) == 0.0);
    CHECK(st.m.at(0) == doctest::Approx(0.1));
    CHECK(st.v.at(0) == doctest::Approx(0.001));
  }

  SUBCASE("rejects bad input") {
    ParameterSet p(tiny_shape());
    GradientSet g(tiny_shape(4, 6, 3));
    AdamState st = make_adam_state(tiny_shape());
    CHECK_THROWS_AS(adam_step(p, g, st, 0.1), NetworkError);
    GradientSet nan(tiny_shape());
    nan.at(3) = std::numeric_limits<double>::quiet_NaN();
    CHECK_THROWS_AS(adam_step(p, nan, st, 0.1), NetworkError);
  }

  SUBCASE("fitting a fixed batch drives the loss down") {
    const NetworkShape s = tiny_shape();
    QNetwork net = random_net(s, 8);
    AdamState st = make_adam_state(s);
    std::vector<StateEncoding> states;
    for (std::uint64_t i = 0; i < 6; ++i) states.push_back(random_state(s, 70 + i));
    std::vector<Sample> batch;
    for (std::size_t i = 0; i < states.size(); ++i) {
      batch.push_back({&states[i], static_cast<int>(i % 4), -1.0 + 0.4 * static_cast<double>(i)});
    }
    const double initial = loss_of(net, batch);
    GradientSet g;
    for (int k = 0; k < 100; ++k) {
      loss_and_gradients(net, batch, g);
      adam_step(net.params(), g, st, 1e-2);
    }
    CHECK(loss_of(net, batch) < 0.1 * initial);
  }

  SUBCASE("deterministic") {
    const NetworkShape s = tiny_shape();
    const auto state = random_state(s, 5);
    const Sample sample{&state, 1, 0.5};
    auto run = [&] {
      QNetwork net = random_net(s, 9);
      AdamState st = make_adam_state(s);
      for (int k = 0; k < 20; ++k) {
        adam_step(net.params(), loss_and_gradients(net, std::span<const Sample>(&sample, 1)).gradients, st, 1e-3);
      }
      return net;
    };
    CHECK(run() == run());
  }
}

TEST_CASE("loss input validation") {
  const NetworkShape s = tiny_shape();
  const QNetwork net = random_net(s, 1);
  const auto state = random_state(s, 1);
  const auto wrong = random_state(tiny_shape(5, 5, 3), 1);

  CHECK_THROWS_AS(loss_and_gradients(net, std::span<const Sample>{}), NetworkError);
  const Sample nan{&state, 0, std::numeric_limits<double>::infinity()};
  CHECK_THROWS_AS(loss_and_gradients(net, std::span<const Sample>(&nan, 1)), NetworkError);
  const Sample out{&state, s.actions(), 0.0};
  CHECK_THROWS_AS(loss_and_gradients(net, std::span<const Sample>(&out, 1)), NetworkError);
  CHECK_THROWS_AS(net.forward(wrong), NetworkError);
}

TEST_CASE("network serialization") {
  const NetworkShape s = tiny_shape();
  const QNetwork net = random_net(s, 17);
  const auto doc = network_to_json(net);
  const QNetwork back = network_from_json(nlohmann::json::parse(doc.dump()));
  CHECK(back == net);
  CHECK(network_to_json(back).dump() == doc.dump());

  auto bad = nlohmann::json::parse(doc.dump());
  bad["v"] = 42;
  CHECK_THROWS_AS(network_from_json(bad), NetworkError);

  CHECK(parameters_from_json(parameters_to_json(net.params()), s) == net.params());
  CHECK_THROWS(parameters_from_json(parameters_to_json(net.params()), tiny_shape(4, 6, 3)));
  CHECK(shape_from_json(shape_to_json(s)) == s);
}
