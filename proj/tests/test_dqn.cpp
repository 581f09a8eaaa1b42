#include <doctest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "ddamaze/dqn.hpp"
#include "support/grids.hpp"

using namespace ddamaze;
using fixture::small_grid;

namespace {

TrainConfig small_config(const RoomGrid& g) {
  TrainConfig c;
  c.network = shape_for(g);
  c.network.hidden = 16;
  c.batch_size = 8;
  c.difficulty_runs = 20;
  c.epsilon_decay_episodes = 50;
  c.sync_interval = 10;
  c.online_steps = 5;
  c.replay_capacity = 500;
  return c;
}

StateEncoding dummy_state(const NetworkShape& s, std::uint8_t fill) {
  StateEncoding e;
  e.height = s.height;
  e.width = s.width;
  e.codes.assign(static_cast<std::size_t>(s.cells()), fill);
  e.occupied.assign(static_cast<std::size_t>(s.rooms), 0);
  return e;
}

// Network whose output bias alone sets Q, so Q(s) = bias for every state.
QNetwork bias_only(const NetworkShape& s, const std::vector<double>& q) {
  QNetwork net(s);
  net.params()[ParameterSet::kFc2B].data.assign(q.begin(), q.end());
  return net;
}

std::string slurp(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

}  // namespace

TEST_CASE("reward law") {
  const double expected[] = {-2.0, -1.0, 0.0, -1.0, -2.0};
  for (int r = 1; r <= 5; ++r) CHECK(terminal_reward(r, 3.0) == expected[r - 1]);
  CHECK(terminal_reward(5, 5.0) == 0.0);
  CHECK(terminal_reward(1, 2.5) == -1.5);
}

TEST_CASE("epsilon schedule and config validation") {
  TrainConfig c;
  CHECK(c.epsilon_at(0) == 1.0);
  CHECK(c.epsilon_at(5000) == doctest::Approx(0.525));
  CHECK(c.epsilon_at(10000) == 0.05);
  CHECK(c.epsilon_at(30000) == 0.05);
  CHECK(config_from_json(config_to_json(c)).seed == c.seed);

  TrainConfig bad = c;
  bad.gamma = 1.5;
  CHECK_THROWS_AS(bad.validate(), AgentError);
  bad = c;
  bad.batch_size = 0;
  CHECK_THROWS_AS(bad.validate(), AgentError);
  bad = c;
  bad.target_rating = 6.0;
  CHECK_THROWS_AS(bad.validate(), AgentError);
}

TEST_CASE("masked action selection") {
  const NetworkShape s = shape_for(*small_grid());
  const auto state = dummy_state(s, 0);
  const QNetwork net = bias_only(s, {0.5, 2.0, -1.0, 1.0});
  Rng rng(1);

  CHECK(select_action(net, state, {true, true, true, true}, 0.0, rng) == 1);
  CHECK(select_action(net, state, {true, false, true, true}, 0.0, rng) == 3);
  CHECK(select_action(net, state, {false, false, true, false}, 0.0, rng) == 2);

  const std::vector<double> tied = {1.0, 3.0, 3.0, 0.0};
  CHECK(masked_argmax(tied, {true, true, true, true}) == 1);
  CHECK(masked_argmax(tied, {true, false, true, true}) == 2);
  CHECK_THROWS(masked_argmax(tied, {false, false, false, false}));

  SUBCASE("exploration never picks a masked action") {
    const std::vector<bool> mask = {true, false, true, false};
    for (int i = 0; i < 100000; ++i) {
      const int a = select_action(net, state, mask, 1.0, rng);
      REQUIRE(mask[static_cast<std::size_t>(a)]);
    }
  }

  SUBCASE("full exploration is uniform over legal actions") {
    const std::vector<bool> mask = {true, true, false, true};
    const int draws = 90000;
    int counts[4] = {0, 0, 0, 0};
    for (int i = 0; i < draws; ++i) ++counts[select_action(net, state, mask, 1.0, rng)];
    CHECK(counts[2] == 0);
    const double p = 1.0 / 3.0;
    const double sigma = std::sqrt(draws * p * (1 - p));
    for (int a : {0, 1, 3}) CHECK(std::abs(counts[a] - draws * p) < 3 * sigma);
  }
}

TEST_CASE("q targets") {
  const NetworkShape s = shape_for(*small_grid());
  const QNetwork target = bias_only(s, {0.5, 2.0, -1.0, 1.0});

  Transition terminal;
  terminal.reward = -2.0;
  terminal.terminal = true;
  terminal.legal_mask_next = {false, false, false, false};

  Transition open;
  open.reward = 0.0;
  open.next_state = dummy_state(s, 1);
  open.legal_mask_next = {true, false, true, true};

  Transition all;
  all.reward = 0.5;
  all.next_state = dummy_state(s, 2);
  all.legal_mask_next = {true, true, true, true};

  const std::vector<const Transition*> batch = {&terminal, &open, &all};
  const auto y = q_targets(target, batch, 0.9);
  REQUIRE(y.size() == 3);
  CHECK(y[0] == -2.0);
  CHECK(y[1] == doctest::Approx(0.9 * 1.0));
  CHECK(y[2] == doctest::Approx(0.5 + 0.9 * 2.0));
}

TEST_CASE("replay buffer") {
  ReplayBuffer buf(3);
  for (int i = 0; i < 5; ++i) {
    Transition t;
    t.action = i;
    buf.push(t);
  }
  CHECK(buf.size() == 3);
  CHECK(buf.at(0).action == 2);
  CHECK(buf.at(2).action == 4);

  Rng rng(3);
  const auto sample = buf.sample(10, rng);
  CHECK(sample.size() == 10);
  for (const auto* t : sample) CHECK((t->action >= 2 && t->action <= 4));

  const auto back = ReplayBuffer::restore(buf.capacity(), buf.head(), buf.slots());
  CHECK(back == buf);
  CHECK_THROWS(ReplayBuffer::restore(2, 0, buf.slots()));
}

TEST_CASE("episodes") {
  const auto grid = small_grid();
  const TrainConfig config = small_config(*grid);
  Agent agent(grid, average_profile(), config);
  const int n = grid->room_count();

  for (int k = 0; k < 20; ++k) {
    Episode e = agent.generate_episode(average_profile(), 1.0);
    const auto& ts = e.transitions;
    REQUIRE(ts.size() >= 1);
    CHECK(ts.size() <= static_cast<std::size_t>(n + 1));
    CHECK(ts.back().action == n);
    CHECK(ts.back().terminal);
    CHECK(e.maze.terminal());
    for (std::size_t i = 0; i + 1 < ts.size(); ++i) {
      CHECK_FALSE(ts[i].terminal);
      CHECK(ts[i].reward == 0.0);
      CHECK(ts[i + 1].state == ts[i].next_state);
      CHECK(ts[i].prefix.size() == i);
    }
    const double r = ts.back().reward;
    CHECK((r == 0.0 || r == -1.0 || r == -2.0));
  }
}

TEST_CASE("difficulty model is a cached pure function of the maze") {
  const auto grid = small_grid();
  DifficultyModel a(average_profile(), 30, 5);
  DifficultyModel b(average_profile(), 30, 5);
  const Maze m = replay(grid, std::vector<int>{0, 2});
  const double first = a(m);
  CHECK(a.cache_size() == 1);
  CHECK(a(m) == first);
  CHECK(a.cache_size() == 1);
  CHECK(b(m) == first);
  CHECK(first == doctest::Approx(a.estimate(m).mean_rating / 5.0));
  CHECK(first >= 0.2);
  CHECK(first <= 1.0);
}

TEST_CASE("training on a fixed batch drives the loss to zero") {
  const auto grid = small_grid();
  TrainConfig config = small_config(*grid);
  config.sync_interval = 1000000;
  Agent agent(grid, average_profile(), config);
  std::vector<Episode> episodes;
  for (int k = 0; k < 4; ++k) episodes.push_back(agent.generate_episode(average_profile(), 1.0));
  // Distinct (state, action) pairs only; repeats with different ratings cannot both be fitted.
  std::vector<const Transition*> batch;
  for (const auto& e : episodes) {
    for (const auto& t : e.transitions) {
      const bool seen = std::any_of(batch.begin(), batch.end(), [&](const Transition* o) {
        return o->action == t.action && o->state == t.state;
      });
      if (!seen) batch.push_back(&t);
    }
  }
  double first = agent.train_on(batch);
  double last = first;
  for (int k = 0; k < 500; ++k) last = agent.train_on(batch);
  CHECK(agent.gradient_steps() == 501);
  CHECK(last < 1e-3);
  CHECK(last < first);
}

TEST_CASE("target network syncs on the interval") {
  const auto grid = small_grid();
  TrainConfig config = small_config(*grid);
  config.sync_interval = 3;
  Agent agent(grid, average_profile(), config);
  for (int k = 0; k < 4; ++k) {
    auto e = agent.generate_episode(average_profile(), 1.0);
    for (auto& t : e.transitions) agent.buffer().push(t);
  }
  REQUIRE(agent.buffer().size() >= static_cast<std::size_t>(config.batch_size));
  const QNetwork initial = agent.target_net();
  agent.train_step();
  agent.train_step();
  CHECK(agent.target_net() == initial);
  CHECK_FALSE(agent.net() == initial);
  agent.train_step();
  CHECK(agent.target_net() == agent.net());
}

TEST_CASE("train_step needs a full batch") {
  const auto grid = small_grid();
  Agent agent(grid, average_profile(), small_config(*grid));
  CHECK_THROWS_AS(agent.train_step(), AgentError);
}

TEST_CASE("pretraining") {
  const auto grid = small_grid();
  TrainConfig config = small_config(*grid);

  SUBCASE("zero episodes leaves the initial network") {
    config.pretrain_episodes = 0;
    auto result = pretrain(grid, average_profile(), config);
    CHECK(result.metrics.empty());
    CHECK(result.agent.net() == Agent(grid, average_profile(), config).net());
    CHECK(result.agent.gradient_steps() == 0);
  }

  SUBCASE("same seed, same run") {
    config.pretrain_episodes = 30;
    auto a = pretrain(grid, average_profile(), config);
    auto b = pretrain(grid, average_profile(), config);
    REQUIRE(a.metrics.size() == 30);
    std::string csv_a, csv_b;
    for (const auto& m : a.metrics) csv_a += metrics_csv_row(m) + "\n";
    for (const auto& m : b.metrics) csv_b += metrics_csv_row(m) + "\n";
    CHECK(csv_a == csv_b);
    CHECK(a.agent.net() == b.agent.net());
    CHECK(a.agent.gradient_steps() > 0);
    for (const auto& m : a.metrics) {
      CHECK(m.abs_error == std::abs(m.rating - config.target_rating));
    }

    config.seed = 2;
    auto c = pretrain(grid, average_profile(), config);
    CHECK_FALSE(c.agent.net() == a.agent.net());
  }

  SUBCASE("metrics file") {
    config.pretrain_episodes = 10;
    auto r = pretrain(grid, average_profile(), config);
    const auto path = (std::filesystem::temp_directory_path() / "ddamaze_test_metrics.csv").string();
    write_metrics_csv(path, r.metrics);
    const auto text = slurp(path);
    CHECK(text.rfind(metrics_csv_header() + "\n", 0) == 0);
    CHECK(std::count(text.begin(), text.end(), '\n') == 11);
    std::filesystem::remove(path);
  }
}

TEST_CASE("online update") {
  const auto grid = small_grid();
  TrainConfig config = small_config(*grid);
  Agent agent(grid, average_profile(), config);
  Episode e = agent.build_maze(0.0);
  const std::size_t len = e.transitions.size();
  const long steps = agent.gradient_steps();

  const double loss = agent.online_update(e, 5);
  CHECK(std::isfinite(loss));
  CHECK(e.transitions.back().reward == -2.0);
  CHECK(agent.buffer().size() == len);
  CHECK(agent.gradient_steps() == steps + config.online_steps);
  CHECK(agent.buffer().at(len - 1).reward == -2.0);

  Episode again = agent.build_maze(0.0);
  agent.online_update(again, 3);
  CHECK(again.transitions.back().reward == 0.0);
}

TEST_CASE("evaluate does not train") {
  const auto grid = small_grid();
  Agent agent(grid, average_profile(), small_config(*grid));
  const QNetwork before = agent.net();
  const auto a = evaluate(agent, average_profile(), 10, 0.0, 7);
  const auto b = evaluate(agent, average_profile(), 10, 0.0, 7);
  CHECK(agent.net() == before);
  CHECK(a.ratings == b.ratings);
  CHECK(a.ratings.size() == 10);
  CHECK(a.mean_abs_error >= 0.0);
  CHECK_THROWS_AS(evaluate(agent, average_profile(), 0, 0.0, 7), AgentError);
}
