#include <catch_amalgamated.hpp>

#include <cmath>
#include <cstdio>
#include <set>
#include <vector>

#include "hopsched/instance_gen.hpp"
#include "hopsched/neural.hpp"
#include "hopsched/policy_io.hpp"
#include "hopsched/rng.hpp"

using hopsched::ActionMask;
using hopsched::Arch;
using hopsched::ConfigError;
using hopsched::ContractViolation;
using hopsched::EnvConfig;
using hopsched::FatTree;
using hopsched::IdleSequence;
using hopsched::InstanceSpec;
using hopsched::IntegrityError;
using hopsched::Job;
using hopsched::load_policy;
using hopsched::NodeId;
using hopsched::PolicyMetadata;
using hopsched::PolicyNetwork;
using hopsched::PpoConfig;
using hopsched::PpoSample;
using hopsched::RepairEnv;
using hopsched::RepairState;
using hopsched::Rng;
using hopsched::save_policy;
using hopsched::ScasModel;

namespace {

Job sized_job(int id, int nodes) {
  Job j;
  j.job_id = id;
  j.requested_nodes = nodes;
  j.processing_time = 100.0;
  j.estimated_time = 100.0;
  return j;
}

const hopsched::nn::Conv1d* as_conv(const hopsched::nn::Layer& layer) {
  return dynamic_cast<const hopsched::nn::Conv1d*>(&layer);
}

}  // namespace

TEST_CASE("architecture names round trip") {
  for (Arch a : {Arch::kFcn1, Arch::kFcn2, Arch::kFcn3, Arch::kCnn1, Arch::kCnn2, Arch::kCnn3}) {
    CHECK(hopsched::parse_arch(hopsched::arch_name(a)) == a);
  }
  CHECK_THROWS_AS(hopsched::parse_arch("mlp"), ConfigError);
  CHECK(hopsched::is_conv(Arch::kCnn2));
  CHECK_FALSE(hopsched::is_conv(Arch::kFcn3));
}

TEST_CASE("every architecture maps 100x4 observations to 100 logits and 1 value") {
  for (Arch a : {Arch::kFcn1, Arch::kFcn2, Arch::kFcn3, Arch::kCnn1, Arch::kCnn2, Arch::kCnn3}) {
    const auto net = make_policy_network(a);
    CHECK(net.actor.input_size() == 400u);
    CHECK(net.actor.output_size() == 100u);
    CHECK(net.critic.input_size() == 400u);
    CHECK(net.critic.output_size() == 1u);
  }
}

TEST_CASE("dense stack sizes match their direct parameter recount") {
  const auto fcn1 = make_policy_network(Arch::kFcn1);
  CHECK(fcn1.actor.param_count() == 36324u);
  CHECK(fcn1.critic.param_count() ==
        400u * 64u + 64u + 64u * 64u + 64u + 64u * 1u + 1u);
  const auto fcn3 = make_policy_network(Arch::kFcn3);
  CHECK(fcn3.actor.param_count() ==
        400u * 96u + 96u + 96u * 64u + 64u + 64u * 100u + 100u);
}

TEST_CASE("convolutional stacks shrink 100 positions to 91 and then 44") {
  for (Arch a : {Arch::kCnn1, Arch::kCnn2, Arch::kCnn3}) {
    const auto net = make_policy_network(a);
    const auto* conv1 = as_conv(net.actor.layer(0));
    REQUIRE(conv1 != nullptr);
    CHECK(conv1->in_length() == 100u);
    CHECK(conv1->out_length() == 91u);
    const auto* conv2 = as_conv(net.actor.layer(2));
    REQUIRE(conv2 != nullptr);
    CHECK(conv2->out_length() == 44u);
    const std::size_t flat = net.actor.layer(3).output_size();
    if (a == Arch::kCnn3) {
      CHECK(conv2->out_channels() == 8u);
      CHECK(flat == 352u);
    } else {
      CHECK(conv2->out_channels() == 4u);
      CHECK(flat == 176u);
    }
    CHECK(net.actor.layer(4).output_size() == 256u);
  }
}

TEST_CASE("observation encoding fills real rows and zeroes the padding") {
  const FatTree tree(8, 8);
  std::vector<NodeId> ids;
  for (NodeId i = 0; i < 60; ++i) ids.push_back(i);
  const IdleSequence q(ids);
  const std::vector<Job> pending{sized_job(1, 4), sized_job(2, 12)};
  auto [st, mask] = encode_state(tree, q, sized_job(0, 8), pending, 100, 40);

  REQUIRE(st.m.size() == 400u);
  CHECK(mask.legal_count == 60);
  for (int i = 0; i < 60; ++i) CHECK(mask.legal[static_cast<std::size_t>(i)] == 1);
  for (int i = 60; i < 100; ++i) {
    CHECK(mask.legal[static_cast<std::size_t>(i)] == 0);
    for (int a = 0; a < 4; ++a) CHECK(st.at(i, a) == 0.0);
  }
  for (int i = 0; i < 60; ++i) {
    CHECK(st.at(i, 0) == static_cast<double>(tree.switch_of(i)) / 31.0);
    CHECK(st.at(i, 1) == static_cast<double>(tree.pod_of(i)) / 7.0);
    CHECK(st.at(i, 2) == 8.0 / 40.0);
    CHECK(st.at(i, 3) == 16.0 / (2.0 * 40.0));
  }
}

TEST_CASE("observation encoding edge cases") {
  const FatTree tree(8, 8);
  const auto q = IdleSequence::all_nodes(tree);  // 128 nodes, longer than q=100

  auto [st, mask] = encode_state(tree, q, sized_job(0, 8), {}, 100, 40);
  CHECK(mask.legal_count == 100);
  CHECK(st.at(99, 0) > 0.0);
  CHECK(st.at(0, 3) == 0.0);  // no pending jobs

  auto [st2, mask2] = encode_state(tree, q, sized_job(0, 40), {}, 100, 40);
  CHECK(st2.at(0, 2) == 1.0);

  auto [st3, mask3] = encode_state(tree, q, sized_job(0, 60), {}, 100, 40);
  CHECK(st3.at(0, 2) == 1.0);  // oversize requests clamp

  const std::vector<Job> heavy{sized_job(1, 40), sized_job(2, 40)};
  auto [st4, mask4] = encode_state(tree, q, sized_job(0, 8), heavy, 100, 40);
  CHECK(st4.at(0, 3) == 1.0);

  CHECK_THROWS_AS(encode_state(tree, IdleSequence({0, 1}), sized_job(0, 4), {}, 100, 40),
                  ContractViolation);

  const FatTree lone(2, 1);
  Job tiny;
  tiny.requested_nodes = 1;
  auto [st5, mask5] = encode_state(lone, IdleSequence({0}), tiny, {}, 10, 40);
  CHECK(st5.at(0, 0) == 0.0);
  CHECK(st5.at(0, 1) == 0.0);
}

TEST_CASE("masked softmax puts exactly zero mass on illegal actions") {
  ActionMask mask;
  mask.legal = {1, 0, 1, 0};
  mask.legal_count = 2;
  const std::vector<double> logits{0.3, 100.0, 0.3, -5.0};
  const auto p = hopsched::masked_softmax(logits, mask);
  CHECK(p[1] == 0.0);
  CHECK(p[3] == 0.0);
  CHECK(p[0] == Catch::Approx(0.5).margin(1e-12));
  CHECK(p[2] == Catch::Approx(0.5).margin(1e-12));
  CHECK(p[0] + p[1] + p[2] + p[3] == Catch::Approx(1.0).margin(1e-12));

  ActionMask one;
  one.legal = {0, 0, 1};
  one.legal_count = 1;
  const auto single = hopsched::masked_softmax(std::vector<double>{9.0, 2.0, -3.0}, one);
  CHECK(single[2] == 1.0);
  CHECK(single[0] == 0.0);

  ActionMask none;
  none.legal = {0, 0};
  none.legal_count = 0;
  CHECK_THROWS_AS(hopsched::masked_softmax(std::vector<double>{1.0, 2.0}, none),
                  ContractViolation);

  ActionMask wide;
  wide.legal = {1, 1};
  wide.legal_count = 2;
  const auto extreme = hopsched::masked_softmax(std::vector<double>{1000.0, 0.0}, wide);
  CHECK(extreme[0] == Catch::Approx(1.0).margin(1e-12));
  CHECK(extreme[0] + extreme[1] == Catch::Approx(1.0).margin(1e-12));
}

TEST_CASE("a freshly initialized policy is uniform over the legal actions") {
  auto net = make_policy_network(Arch::kFcn1, 24, 4);
  init_params(net, 7);
  RepairState st;
  st.q = 24;
  st.beta = 4;
  st.m.assign(96, 0.25);
  ActionMask mask;
  mask.legal.assign(24, 0);
  for (int i = 0; i < 10; ++i) mask.legal[static_cast<std::size_t>(i)] = 1;
  mask.legal_count = 10;
  const auto probs = policy_forward(net, st, mask);
  for (int i = 0; i < 10; ++i)
    CHECK(probs[static_cast<std::size_t>(i)] == Catch::Approx(0.1).margin(1e-12));
  for (int i = 10; i < 24; ++i) CHECK(probs[static_cast<std::size_t>(i)] == 0.0);
  CHECK(critic_value(net, st) == 0.0);
}

TEST_CASE("action sampling follows the cumulative distribution") {
  const std::vector<double> p{0.0, 0.25, 0.75};
  int counts[3] = {0, 0, 0};
  Rng rng(1);
  for (int i = 0; i < 4000; ++i) counts[hopsched::sample_action(p, rng)] += 1;
  CHECK(counts[0] == 0);
  CHECK(counts[1] > 800);
  CHECK(counts[1] < 1200);
  CHECK(counts[2] > 2800);

  const std::vector<double> sure{0.0, 1.0};
  for (int i = 0; i < 20; ++i) CHECK(hopsched::sample_action(sure, rng) == 1u);
  CHECK_THROWS_AS(hopsched::sample_action(std::vector<double>{0.0, 0.0}, rng),
                  ContractViolation);

  CHECK(hopsched::argmax_action(std::vector<double>{0.1, 0.7, 0.2}) == 1u);
  CHECK(hopsched::argmax_action(std::vector<double>{0.4, 0.4, 0.2}) == 0u);
}

TEST_CASE("neural repair on a snug sequence hands over the whole sequence") {
  const FatTree tree(8, 8);
  ScasModel model{{sized_job(0, 4)}, IdleSequence({0, 1, 2, 3}), tree, 1000.0};
  auto net = make_policy_network(Arch::kFcn1, 16, 4);
  init_params(net, 3);
  hopsched::PartialSolution partial;
  partial.idle = model.idle;
  Rng rng(5);
  const auto sol = repair_neural(model, partial, {sized_job(0, 4)}, net, 40, rng);
  const auto& nodes = sol.plan.assignments.at(0);
  CHECK(std::set<NodeId>(nodes.begin(), nodes.end()) == std::set<NodeId>{0, 1, 2, 3});
  hopsched::NeuralRepair op(net, 40);
  CHECK(op.name() == "neural-fcn-1");
}

TEST_CASE("repair environment pays once, at the end, the scaled episode cost") {
  EnvConfig cfg;
  cfg.instance.radix = 4;
  cfg.instance.pod_count = 4;
  cfg.instance.occupancy_lo = 0.2;
  cfg.instance.occupancy_hi = 0.5;
  cfg.instance.max_nodes = 4;
  cfg.q = 20;
  cfg.n_max = 4;
  RepairEnv env(cfg);
  CHECK(env.reward_scale() == 1000.0 * 6.0 * 4.0);

  Rng rng(11);
  for (int episode = 0; episode < 20; ++episode) {
    env.reset(rng);
    double last_reward = 0.0;
    int steps = 0;
    while (!env.done()) {
      const auto& mask = env.mask();
      std::size_t action = 0;
      while (!mask.legal[action]) ++action;
      last_reward = env.step(action);
      ++steps;
      if (!env.done()) CHECK(last_reward == 0.0);
    }
    CHECK(steps >= 1);
    CHECK(env.episode_cost() > 0.0);
    CHECK(last_reward == -env.episode_cost() / env.reward_scale());
    CHECK_THROWS_AS(env.step(0), ContractViolation);
  }
}

TEST_CASE("repair environment rejects masked actions and bad configs") {
  EnvConfig cfg;
  cfg.instance.radix = 4;
  cfg.instance.pod_count = 4;
  cfg.instance.max_nodes = 4;
  cfg.q = 20;
  cfg.n_max = 4;
  RepairEnv env(cfg);
  Rng rng(3);
  env.reset(rng);
  CHECK_THROWS_AS(env.step(19), ContractViolation);  // idle is at most 13 long

  EnvConfig bad = cfg;
  bad.n_max = 3;
  CHECK_THROWS_AS(RepairEnv(bad), ConfigError);
  EnvConfig bad2 = cfg;
  bad2.max_remove = 0;
  CHECK_THROWS_AS(RepairEnv(bad2), ConfigError);
}

TEST_CASE("instance generation respects its spec and orders jobs by priority") {
  InstanceSpec spec;
  spec.radix = 4;
  spec.pod_count = 4;
  spec.max_nodes = 4;
  Rng rng(21);
  for (int i = 0; i < 30; ++i) {
    const auto model = draw_instance(spec, rng);
    CHECK_FALSE(model.jobs.empty());
    std::size_t total = 0;
    for (const Job& j : model.jobs) {
      CHECK(j.requested_nodes >= 2);
      CHECK(j.requested_nodes <= 4);
      total += static_cast<std::size_t>(j.requested_nodes);
    }
    CHECK(total <= model.idle.size());
    for (std::size_t j = 1; j < model.jobs.size(); ++j)
      CHECK_FALSE(higher_priority(model.jobs[j], model.jobs[j - 1]));
    CHECK_NOTHROW(initial_solution(model));
  }

  InstanceSpec fixed = spec;
  fixed.job_count_min = 2;
  fixed.job_count_max = 3;
  for (int i = 0; i < 20; ++i) {
    const auto model = draw_instance(fixed, rng);
    CHECK(model.jobs.size() >= 2u);
    CHECK(model.jobs.size() <= 3u);
  }

  InstanceSpec bad = spec;
  bad.occupancy_lo = 0.7;
  bad.occupancy_hi = 0.3;
  CHECK_THROWS_AS(draw_instance(bad, rng), ConfigError);
}

TEST_CASE("surrogate loss at unit ratio reduces to the advantage") {
  auto net = make_policy_network(Arch::kFcn1, 8, 4);
  init_params(net, 5);
  PpoConfig cfg;

  PpoSample s;
  s.input.assign(32, 0.1);
  s.legal.assign(8, 0);
  for (int i = 0; i < 4; ++i) s.legal[static_cast<std::size_t>(i)] = 1;
  s.action = 2;
  s.logp_old = std::log(0.25);  // uniform over 4 legal actions
  s.advantage = 0.7;
  s.ret = 0.3;

  const double loss =
      ppo_loss_and_grad(net, std::vector<PpoSample>{s}, cfg, nullptr, nullptr);
  const double expected = -0.7 + cfg.value_coef * 0.09 - cfg.entropy_coef * std::log(4.0);
  CHECK(loss == Catch::Approx(expected).margin(1e-9));
}

TEST_CASE("the actor gradient vanishes when the clip branch is active") {
  auto net = make_policy_network(Arch::kFcn1, 8, 4);
  init_params(net, 6);
  PpoConfig cfg;
  cfg.entropy_coef = 0.0;

  PpoSample s;
  s.input.assign(32, 0.2);
  s.legal.assign(8, 1);
  s.action = 3;
  s.logp_old = std::log(1.0 / 8.0) - std::log(1.5);  // ratio = 1.5, beyond 1.2
  s.advantage = 1.0;
  s.ret = 0.0;

  std::vector<double> actor_grad, critic_grad;
  ppo_loss_and_grad(net, std::vector<PpoSample>{s}, cfg, &actor_grad, &critic_grad);
  for (double g : actor_grad) REQUIRE(g == 0.0);

  s.advantage = -1.0;  // clip no longer binds on this side
  ppo_loss_and_grad(net, std::vector<PpoSample>{s}, cfg, &actor_grad, &critic_grad);
  double norm = 0.0;
  for (double g : actor_grad) norm += g * g;
  CHECK(norm > 0.0);
}

TEST_CASE("analytic optimization gradients pass a finite-difference audit") {
  auto fcn = make_policy_network(Arch::kFcn1, 20, 4);
  init_params(fcn, 9);
  CHECK(gradient_check(fcn, 31, 60) < 1e-4);

  auto cnn = make_policy_network(Arch::kCnn1);
  init_params(cnn, 10);
  CHECK(gradient_check(cnn, 32, 40) < 1e-4);
}

TEST_CASE("short training runs are finite and deterministic") {
  EnvConfig env_cfg;
  env_cfg.instance.radix = 4;
  env_cfg.instance.pod_count = 4;
  env_cfg.instance.max_nodes = 4;
  env_cfg.q = 16;
  env_cfg.n_max = 4;

  PpoConfig cfg;
  cfg.rollout_steps = 48;
  cfg.minibatch_size = 16;
  cfg.updates = 3;

  auto run = [&] {
    RepairEnv env(env_cfg);
    auto net = make_policy_network(Arch::kFcn1, 16, 4);
    init_params(net, 40);
    Rng rng(41);
    return train_ppo(env, net, cfg, rng);
  };
  const auto curve_a = run();
  const auto curve_b = run();
  REQUIRE(curve_a.size() == 3u);
  for (std::size_t i = 0; i < curve_a.size(); ++i) {
    CHECK(std::isfinite(curve_a[i].mean_reward));
    CHECK(curve_a[i].mean_cost > 0.0);
    CHECK(curve_a[i].update == static_cast<int>(i) + 1);
    CHECK(curve_a[i].mean_reward == curve_b[i].mean_reward);
    CHECK(curve_a[i].mean_cost == curve_b[i].mean_cost);
  }

  PpoConfig bad;
  bad.clip_epsilon = 0.0;
  CHECK_THROWS_AS(bad.validate(), ConfigError);
}

TEST_CASE("policy files round trip through disk") {
  auto net = make_policy_network(Arch::kCnn1);
  init_params(net, 14);
  PolicyMetadata meta;
  meta.n_max = 40;
  meta.radix = 8;
  meta.pod_count = 8;
  const std::string path = "policy_roundtrip_test.bin";
  save_policy(path, net, meta);

  auto [loaded, meta2] = load_policy(path);
  CHECK(loaded.arch == Arch::kCnn1);
  CHECK(loaded.q == 100);
  CHECK(loaded.beta == 4);
  CHECK(meta2.n_max == 40);
  CHECK(meta2.radix == 8);
  CHECK(meta2.pod_count == 8);
  REQUIRE(loaded.actor_params.size() == net.actor_params.size());
  for (std::size_t i = 0; i < net.actor_params.size(); ++i)
    REQUIRE(loaded.actor_params[i] == static_cast<double>(static_cast<float>(net.actor_params[i])));

  // a float-quantized policy saves to the identical byte stream
  const std::string path2 = "policy_roundtrip_test2.bin";
  save_policy(path2, loaded, meta2);
  CHECK(hopsched::read_file(path) == hopsched::read_file(path2));

  std::remove(path.c_str());
  std::remove(path2.c_str());
}

TEST_CASE("corrupted policy files are rejected") {
  auto net = make_policy_network(Arch::kFcn1, 12, 4);
  init_params(net, 15);
  const std::string path = "policy_corrupt_test.bin";
  save_policy(path, net, PolicyMetadata{});

  auto data = hopsched::read_file(path);
  auto flipped = data;
  flipped[20] = static_cast<char>(flipped[20] ^ 0x5a);
  hopsched::write_file(path, flipped);
  CHECK_THROWS_AS(load_policy(path), IntegrityError);

  hopsched::write_file(path, data.substr(0, data.size() / 2));
  CHECK_THROWS_AS(load_policy(path), IntegrityError);

  hopsched::write_file(path, "HS");
  CHECK_THROWS_AS(load_policy(path), IntegrityError);

  std::remove(path.c_str());
  CHECK_THROWS_AS(load_policy(path), std::exception);
}
