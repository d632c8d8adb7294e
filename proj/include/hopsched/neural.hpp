#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <memory>
#include <span>
#include <string>
#include <vector>

#include "hopsched/annealing.hpp"
#include "hopsched/errors.hpp"
#include "hopsched/instance_gen.hpp"
#include "hopsched/nn.hpp"
#include "hopsched/rng.hpp"
#include "hopsched/topology.hpp"
#include "hopsched/workload.hpp"

namespace hopsched {

enum class Arch { kFcn1, kFcn2, kFcn3, kCnn1, kCnn2, kCnn3 };

inline const char* arch_name(Arch a) {
    switch (a) {
        case Arch::kFcn1: return "fcn-1";
        case Arch::kFcn2: return "fcn-2";
        case Arch::kFcn3: return "fcn-3";
        case Arch::kCnn1: return "cnn-1";
        case Arch::kCnn2: return "cnn-2";
        case Arch::kCnn3: return "cnn-3";
    }
    throw ContractViolation("unknown architecture tag");
}

inline Arch parse_arch(const std::string& s) {
    for (Arch a : {Arch::kFcn1, Arch::kFcn2, Arch::kFcn3, Arch::kCnn1, Arch::kCnn2, Arch::kCnn3})
        if (s == arch_name(a)) return a;
    throw ConfigError("unknown architecture '" + s + "'");
}

inline bool is_conv(Arch a) {
    return a == Arch::kCnn1 || a == Arch::kCnn2 || a == Arch::kCnn3;
}

/// Observation fed to the policy: q rows of beta attributes. Rows beyond
/// the idle-sequence length are zero. Stored node-major.
struct RepairState {
    int q = 0;
    int beta = 4;
    std::vector<double> m;  // q * beta entries in [0, 1]

    double at(int row, int attr) const { return m[static_cast<std::size_t>(row * beta + attr)]; }
};

/// Start positions the policy may pick right now.
struct ActionMask {
    std::vector<char> legal;
    int legal_count = 0;
};

/// Build the observation and mask for placing `current` on `q_seq` while
/// `pending` jobs still wait behind it. n_max bounds a single request and
/// normalizes the job attributes.
inline std::pair<RepairState, ActionMask> encode_state(const FatTree& tree,
                                                       const IdleSequence& q_seq,
                                                       const Job& current,
                                                       std::span<const Job> pending, int q,
                                                       int n_max) {
    if (static_cast<std::size_t>(current.requested_nodes) > q_seq.size())
        throw ContractViolation("encoding a state the current job cannot fit");
    RepairState st;
    st.q = q;
    st.beta = 4;
    st.m.assign(static_cast<std::size_t>(q) * 4, 0.0);
    ActionMask mask;
    mask.legal.assign(static_cast<std::size_t>(q), 0);

    const double switch_denom = static_cast<double>(tree.switch_count() - 1);
    const double pod_denom = static_cast<double>(tree.pod_count() - 1);
    const double size_attr =
        std::min(1.0, static_cast<double>(current.requested_nodes) / static_cast<double>(n_max));
    double backlog_attr = 0.0;
    if (!pending.empty()) {
        double total = 0.0;
        for (const Job& j : pending) total += static_cast<double>(j.requested_nodes);
        backlog_attr =
            std::min(1.0, total / (static_cast<double>(pending.size()) *
                                   static_cast<double>(n_max)));
    }

    const int rows = std::min<int>(q, static_cast<int>(q_seq.size()));
    for (int i = 0; i < rows; ++i) {
        const NodeId node = q_seq.at(static_cast<std::size_t>(i));
        const auto base = static_cast<std::size_t>(i) * 4;
        st.m[base + 0] =
            switch_denom > 0.0 ? static_cast<double>(tree.switch_of(node)) / switch_denom : 0.0;
        st.m[base + 1] =
            pod_denom > 0.0 ? static_cast<double>(tree.pod_of(node)) / pod_denom : 0.0;
        st.m[base + 2] = size_attr;
        st.m[base + 3] = backlog_attr;
        mask.legal[static_cast<std::size_t>(i)] = 1;
    }
    mask.legal_count = rows;
    return {std::move(st), std::move(mask)};
}

/// Actor-critic pair over the repair observation. The two nets share the
/// published trunk; only the final layer differs (q logits vs one value).
struct PolicyNetwork {
    Arch arch = Arch::kCnn3;
    int q = 100;
    int beta = 4;
    nn::Net actor;
    nn::Net critic;
    std::vector<double> actor_params;
    std::vector<double> critic_params;
};

namespace detail {

inline nn::Net build_net(Arch arch, int q, int beta, int out_dim) {
    using nn::Conv1d;
    using nn::Flatten;
    using nn::Linear;
    using nn::Tanh;
    nn::Net net;
    const auto in = static_cast<std::size_t>(q) * static_cast<std::size_t>(beta);
    const auto qe = static_cast<std::size_t>(q);
    const auto be = static_cast<std::size_t>(beta);
    const auto out = static_cast<std::size_t>(out_dim);
    switch (arch) {
        case Arch::kFcn1:
            net.add(std::make_unique<Linear>(in, 64));
            net.add(std::make_unique<Tanh>(64));
            net.add(std::make_unique<Linear>(64, 64));
            net.add(std::make_unique<Tanh>(64));
            net.add(std::make_unique<Linear>(64, out));
            break;
        case Arch::kFcn2:
            net.add(std::make_unique<Linear>(in, 64));
            net.add(std::make_unique<Tanh>(64));
            net.add(std::make_unique<Linear>(64, 64));
            net.add(std::make_unique<Tanh>(64));
            net.add(std::make_unique<Linear>(64, 64));
            net.add(std::make_unique<Tanh>(64));
            net.add(std::make_unique<Linear>(64, out));
            break;
        case Arch::kFcn3:
            net.add(std::make_unique<Linear>(in, 96));
            net.add(std::make_unique<Tanh>(96));
            net.add(std::make_unique<Linear>(96, 64));
            net.add(std::make_unique<Tanh>(64));
            net.add(std::make_unique<Linear>(64, out));
            break;
        case Arch::kCnn1:
        case Arch::kCnn2:
        case Arch::kCnn3: {
            const std::size_t mid = arch == Arch::kCnn1 ? 4 : arch == Arch::kCnn2 ? 8 : 16;
            const std::size_t last = arch == Arch::kCnn3 ? 8 : 4;
            auto conv1 = std::make_unique<Conv1d>(be, mid, 10, 1, qe);
            const std::size_t len1 = conv1->out_length();
            net.add(std::move(conv1));
            net.add(std::make_unique<Tanh>(mid * len1));
            auto conv2 = std::make_unique<Conv1d>(mid, last, 5, 2, len1);
            const std::size_t len2 = conv2->out_length();
            net.add(std::move(conv2));
            net.add(std::make_unique<Flatten>(last * len2));
            net.add(std::make_unique<Linear>(last * len2, 256));
            net.add(std::make_unique<Linear>(256, out));
            break;
        }
    }
    return net;
}

}  // namespace detail

inline PolicyNetwork make_policy_network(Arch arch, int q = 100, int beta = 4) {
    PolicyNetwork net;
    net.arch = arch;
    net.q = q;
    net.beta = beta;
    net.actor = detail::build_net(arch, q, beta, q);
    net.critic = detail::build_net(arch, q, beta, 1);
    return net;
}

/// Draw fresh parameters. The final layers start at zero so the untrained
/// actor is uniform over legal actions and the critic predicts zero.
inline void init_params(PolicyNetwork& net, std::uint64_t seed) {
    Rng actor_rng(mix_seed(seed, 1));
    Rng critic_rng(mix_seed(seed, 2));
    net.actor_params = net.actor.make_params(actor_rng, true);
    net.critic_params = net.critic.make_params(critic_rng, true);
}

/// Node-major observation to network input: flat copy for dense stacks,
/// attribute-major channels for convolutional ones.
inline void fill_input(const PolicyNetwork& net, const RepairState& st,
                       std::vector<double>& input) {
    const auto q = static_cast<std::size_t>(st.q);
    const auto beta = static_cast<std::size_t>(st.beta);
    input.resize(q * beta);
    if (is_conv(net.arch)) {
        for (std::size_t c = 0; c < beta; ++c)
            for (std::size_t x = 0; x < q; ++x) input[c * q + x] = st.m[x * beta + c];
    } else {
        std::copy(st.m.begin(), st.m.end(), input.begin());
    }
}

/// Softmax with illegal logits forced to the lowest representable value,
/// which underflows to an exact zero probability.
inline std::vector<double> masked_softmax(std::span<const double> logits, const ActionMask& mask) {
    if (mask.legal_count == 0) throw ContractViolation("no legal action to normalize over");
    const double lowest = std::numeric_limits<double>::lowest();
    std::vector<double> z(logits.begin(), logits.end());
    for (std::size_t i = 0; i < z.size(); ++i)
        if (!mask.legal[i]) z[i] = lowest;
    const double zmax = *std::max_element(z.begin(), z.end());
    std::vector<double> p(z.size());
    double total = 0.0;
    for (std::size_t i = 0; i < z.size(); ++i) {
        p[i] = std::exp(z[i] - zmax);
        total += p[i];
    }
    for (double& v : p) v /= total;
    return p;
}

/// Action distribution for one observation.
inline std::vector<double> policy_forward(const PolicyNetwork& net, const RepairState& st,
                                          const ActionMask& mask) {
    nn::Workspace ws;
    net.actor.prepare(ws);
    fill_input(net, st, ws.acts[0]);
    const auto& logits = net.actor.forward(net.actor_params, ws);
    return masked_softmax(logits, mask);
}

inline double critic_value(const PolicyNetwork& net, const RepairState& st) {
    nn::Workspace ws;
    net.critic.prepare(ws);
    fill_input(net, st, ws.acts[0]);
    return net.critic.forward(net.critic_params, ws)[0];
}

inline std::size_t sample_action(std::span<const double> probs, Rng& rng) {
    const double u = rng.uniform();
    double cum = 0.0;
    std::size_t last_positive = 0;
    bool seen = false;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        if (probs[i] <= 0.0) continue;
        last_positive = i;
        seen = true;
        cum += probs[i];
        if (u < cum) return i;
    }
    if (!seen) throw ContractViolation("sampling from an all-zero distribution");
    return last_positive;  // u landed in the rounding tail
}

inline std::size_t argmax_action(std::span<const double> probs) {
    std::size_t best = 0;
    for (std::size_t i = 1; i < probs.size(); ++i)
        if (probs[i] > probs[best]) best = i;
    return best;
}

/// Learned start-position policy plugged into the annealer. Greedy by
/// default; sampling mode follows the action distribution.
class NeuralRepair final : public RepairOperator {
public:
    NeuralRepair(const PolicyNetwork& net, int n_max, bool sample = false)
        : net_(&net), n_max_(n_max), sample_(sample) {}

    std::size_t choose_start(const ScasModel& model, const IdleSequence& idle, const Job& job,
                             std::span<const Job> pending, Rng& rng) override {
        auto [st, mask] = encode_state(model.tree, idle, job, pending, net_->q, n_max_);
        auto probs = policy_forward(*net_, st, mask);
        return sample_ ? sample_action(probs, rng) : argmax_action(probs);
    }

    std::string name() const override {
        return std::string("neural-") + arch_name(net_->arch);
    }

private:
    const PolicyNetwork* net_;
    int n_max_;
    bool sample_;
};

inline SaSolution repair_neural(const ScasModel& model, PartialSolution partial,
                                std::vector<Job> removed, const PolicyNetwork& net, int n_max,
                                Rng& rng, bool sample = false) {
    NeuralRepair op(net, n_max, sample);
    return repair(model, std::move(partial), std::move(removed), op, rng);
}

/// Training environment: each episode draws a fresh instance, builds the
/// greedy solution, knocks out up to max_remove jobs, and asks the agent
/// to reinsert them largest first. Reward is zero until the last insertion,
/// which pays the negated total CH cost of the reinserted jobs, scaled to
/// keep magnitudes near [-1, 0].
struct EnvConfig {
    InstanceSpec instance;
    int max_remove = 2;
    int q = 100;
    int n_max = 40;
};

class RepairEnv {
public:
    explicit RepairEnv(EnvConfig cfg) : cfg_(std::move(cfg)) {
        cfg_.instance.validate();
        if (cfg_.max_remove < 1) throw ConfigError("max_remove must be at least 1");
        if (cfg_.n_max < cfg_.instance.max_nodes)
            throw ConfigError("n_max must cover the largest request");
    }

    double reward_scale() const { return cfg_.instance.hop_cost * 6.0 * cfg_.n_max; }

    void reset(Rng& rng) {
        model_ = draw_instance(cfg_.instance, rng);
        SaSolution sol = initial_solution(model_);
        SaParams params;
        params.max_remove = cfg_.max_remove;
        DestroyResult d = destroy(model_, sol, params, rng);
        partial_ = std::move(d.partial);
        queue_ = std::move(d.removed);
        std::stable_sort(queue_.begin(), queue_.end(), [](const Job& a, const Job& b) {
            return a.requested_nodes > b.requested_nodes;
        });
        next_ = 0;
        episode_cost_ = 0.0;
        encode_current();
    }

    bool done() const { return next_ >= queue_.size(); }
    const RepairState& state() const { return state_; }
    const ActionMask& mask() const { return mask_; }
    const ScasModel& model() const { return model_; }
    double episode_cost() const { return episode_cost_; }

    double step(std::size_t action) {
        if (done()) throw ContractViolation("step on a finished episode");
        if (action >= mask_.legal.size() || !mask_.legal[action])
            throw ContractViolation("policy chose a masked action");
        const Job& j = queue_[next_];
        const auto n = static_cast<std::size_t>(j.requested_nodes);
        episode_cost_ += window_cost(model_.tree, partial_.idle, action, n, model_.hop_cost);
        auto [nodes, rest] = dcas_allocate(partial_.idle, action, n);
        partial_.sol.plan.assignments[j.job_id] = std::move(nodes);
        partial_.idle = std::move(rest);
        ++next_;
        if (done()) return -episode_cost_ / reward_scale();
        encode_current();
        return 0.0;
    }

private:
    void encode_current() {
        if (done()) return;
        std::span<const Job> pending(queue_.data() + next_ + 1, queue_.size() - next_ - 1);
        auto [st, mask] =
            encode_state(model_.tree, partial_.idle, queue_[next_], pending, cfg_.q, cfg_.n_max);
        state_ = std::move(st);
        mask_ = std::move(mask);
    }

    EnvConfig cfg_;
    ScasModel model_;
    PartialSolution partial_;
    std::vector<Job> queue_;
    std::size_t next_ = 0;
    double episode_cost_ = 0.0;
    RepairState state_;
    ActionMask mask_;
};

struct PpoConfig {
    double clip_epsilon = 0.2;
    double discount = 0.99;
    double gae_lambda = 0.95;
    double learning_rate = 3e-4;
    int update_epochs = 4;
    int rollout_steps = 2048;
    int minibatch_size = 256;
    double entropy_coef = 0.01;
    double value_coef = 0.5;
    int updates = 200;

    void validate() const {
        if (!(clip_epsilon > 0.0 && clip_epsilon < 1.0))
            throw ConfigError("clip_epsilon must lie in (0, 1)");
        if (!(discount > 0.0 && discount <= 1.0)) throw ConfigError("discount must lie in (0, 1]");
        if (!(gae_lambda >= 0.0 && gae_lambda <= 1.0))
            throw ConfigError("gae_lambda must lie in [0, 1]");
        if (learning_rate <= 0.0) throw ConfigError("learning_rate must be positive");
        if (update_epochs < 1 || rollout_steps < 1 || minibatch_size < 1 || updates < 0)
            throw ConfigError("epochs, rollout, minibatch and updates must be positive");
    }
};

/// One rollout step as stored for the update phase.
struct PpoSample {
    std::vector<double> input;
    std::vector<char> legal;
    int action = 0;
    double logp_old = 0.0;
    double value_old = 0.0;
    double reward = 0.0;
    bool terminal = false;
    double advantage = 0.0;
    double ret = 0.0;
};

struct TrainingCurveRow {
    int update = 0;
    double mean_reward = 0.0;
    double mean_cost = 0.0;
};

namespace detail {

/// Log-probabilities and entropy of the masked distribution given logits.
struct MaskedDist {
    std::vector<double> probs;
    double log_norm = 0.0;  // log sum of exp(logit - max) + max over legal
    double entropy = 0.0;
};

inline MaskedDist masked_dist(const std::vector<double>& logits, const std::vector<char>& legal) {
    MaskedDist d;
    double zmax = std::numeric_limits<double>::lowest();
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (legal[i] && logits[i] > zmax) zmax = logits[i];
    if (zmax == std::numeric_limits<double>::lowest())
        throw ContractViolation("no legal action to normalize over");
    double total = 0.0;
    d.probs.assign(logits.size(), 0.0);
    for (std::size_t i = 0; i < logits.size(); ++i) {
        if (!legal[i]) continue;
        d.probs[i] = std::exp(logits[i] - zmax);
        total += d.probs[i];
    }
    for (std::size_t i = 0; i < logits.size(); ++i) d.probs[i] /= total;
    d.log_norm = std::log(total) + zmax;
    for (std::size_t i = 0; i < logits.size(); ++i)
        if (d.probs[i] > 0.0) d.entropy -= d.probs[i] * std::log(d.probs[i]);
    return d;
}

}  // namespace detail

/// Mean loss over the batch and its gradients. The loss per sample is
/// -min(ratio * A, clip(ratio) * A) + value_coef * (V - R)^2
/// - entropy_coef * H, the quantity gradient descent minimizes.
inline double ppo_loss_and_grad(const PolicyNetwork& net, std::span<const PpoSample> batch,
                                const PpoConfig& cfg, std::vector<double>* actor_grad,
                                std::vector<double>* critic_grad) {
    if (batch.empty()) throw ContractViolation("empty optimization batch");
    nn::Workspace actor_ws, critic_ws;
    net.actor.prepare(actor_ws);
    net.critic.prepare(critic_ws);
    if (actor_grad) actor_grad->assign(net.actor_params.size(), 0.0);
    if (critic_grad) critic_grad->assign(net.critic_params.size(), 0.0);
    const double inv_n = 1.0 / static_cast<double>(batch.size());
    double loss = 0.0;
    std::vector<double> dlogits(net.actor.output_size());
    std::vector<double> dvalue(1);
    for (const PpoSample& s : batch) {
        actor_ws.acts[0] = s.input;
        const auto& logits = net.actor.forward(net.actor_params, actor_ws);
        auto dist = detail::masked_dist(logits, s.legal);
        const double logp = logits[static_cast<std::size_t>(s.action)] - dist.log_norm;
        const double ratio = std::exp(logp - s.logp_old);
        const double a = s.advantage;
        const double clipped =
            std::clamp(ratio, 1.0 - cfg.clip_epsilon, 1.0 + cfg.clip_epsilon) * a;
        const double surr = std::min(ratio * a, clipped);

        critic_ws.acts[0] = s.input;
        const double v = net.critic.forward(net.critic_params, critic_ws)[0];
        const double verr = v - s.ret;

        loss += inv_n * (-surr + cfg.value_coef * verr * verr - cfg.entropy_coef * dist.entropy);

        if (actor_grad) {
            // d(-surr)/dlogp: active only while the unclipped branch is the min
            double coef = 0.0;
            if ((a >= 0.0 && ratio <= 1.0 + cfg.clip_epsilon) ||
                (a < 0.0 && ratio >= 1.0 - cfg.clip_epsilon))
                coef = ratio * a;
            for (std::size_t i = 0; i < dlogits.size(); ++i) {
                if (!s.legal[i]) {
                    dlogits[i] = 0.0;
                    continue;
                }
                const double p = dist.probs[i];
                const double indicator = i == static_cast<std::size_t>(s.action) ? 1.0 : 0.0;
                double g = -coef * (indicator - p);
                if (p > 0.0) g += cfg.entropy_coef * p * (std::log(p) + dist.entropy);
                dlogits[i] = inv_n * g;
            }
            net.actor.backward(net.actor_params, actor_ws, dlogits, *actor_grad);
        }
        if (critic_grad) {
            dvalue[0] = inv_n * 2.0 * cfg.value_coef * verr;
            net.critic.backward(net.critic_params, critic_ws, dvalue, *critic_grad);
        }
    }
    return loss;
}

/// Clipped-surrogate policy optimization on the repair environment.
/// Rollouts always end on an episode boundary; advantages come from
/// generalized advantage estimation and are normalized per rollout.
inline std::vector<TrainingCurveRow> train_ppo(RepairEnv& env, PolicyNetwork& net,
                                               const PpoConfig& cfg, Rng& rng) {
    cfg.validate();
    nn::Workspace actor_ws, critic_ws;
    net.actor.prepare(actor_ws);
    net.critic.prepare(critic_ws);
    nn::AdamOptimizer actor_opt(net.actor_params.size(), cfg.learning_rate);
    nn::AdamOptimizer critic_opt(net.critic_params.size(), cfg.learning_rate);
    std::vector<TrainingCurveRow> curve;
    std::vector<PpoSample> rollout;
    std::vector<double> actor_grad, critic_grad;
    bool episode_open = false;

    for (int update = 1; update <= cfg.updates; ++update) {
        rollout.clear();
        std::vector<double> episode_rewards, episode_costs;
        double running_reward = 0.0;
        while (static_cast<int>(rollout.size()) < cfg.rollout_steps || episode_open) {
            if (!episode_open) {
                env.reset(rng);
                running_reward = 0.0;
                episode_open = true;
            }
            PpoSample s;
            fill_input(net, env.state(), s.input);
            s.legal = env.mask().legal;
            actor_ws.acts[0] = s.input;
            const auto& logits = net.actor.forward(net.actor_params, actor_ws);
            auto dist = detail::masked_dist(logits, s.legal);
            const auto action = sample_action(dist.probs, rng);
            s.action = static_cast<int>(action);
            s.logp_old = std::log(dist.probs[action]);
            critic_ws.acts[0] = s.input;
            s.value_old = net.critic.forward(net.critic_params, critic_ws)[0];
            s.reward = env.step(action);
            s.terminal = env.done();
            running_reward += s.reward;
            if (s.terminal) {
                episode_rewards.push_back(running_reward);
                episode_costs.push_back(env.episode_cost());
                episode_open = false;
            }
            rollout.push_back(std::move(s));
        }

        // generalized advantage estimation, episodes are contiguous
        double adv_next = 0.0, value_next = 0.0;
        for (std::size_t i = rollout.size(); i-- > 0;) {
            PpoSample& s = rollout[i];
            const double vnx = s.terminal ? 0.0 : value_next;
            const double anx = s.terminal ? 0.0 : adv_next;
            const double delta = s.reward + cfg.discount * vnx - s.value_old;
            s.advantage = delta + cfg.discount * cfg.gae_lambda * anx;
            s.ret = s.advantage + s.value_old;
            adv_next = s.advantage;
            value_next = s.value_old;
        }
        double mean = 0.0;
        for (const PpoSample& s : rollout) mean += s.advantage;
        mean /= static_cast<double>(rollout.size());
        double var = 0.0;
        for (const PpoSample& s : rollout) var += (s.advantage - mean) * (s.advantage - mean);
        const double stddev = std::sqrt(var / static_cast<double>(rollout.size()));
        for (PpoSample& s : rollout) s.advantage = (s.advantage - mean) / (stddev + 1e-8);

        std::vector<std::size_t> order(rollout.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::vector<PpoSample> batch;
        for (int epoch = 0; epoch < cfg.update_epochs; ++epoch) {
            rng.shuffle(order);
            for (std::size_t lo = 0; lo < order.size();
                 lo += static_cast<std::size_t>(cfg.minibatch_size)) {
                const std::size_t hi =
                    std::min(order.size(), lo + static_cast<std::size_t>(cfg.minibatch_size));
                batch.clear();
                for (std::size_t i = lo; i < hi; ++i) batch.push_back(rollout[order[i]]);
                const double loss =
                    ppo_loss_and_grad(net, batch, cfg, &actor_grad, &critic_grad);
                if (!std::isfinite(loss))
                    throw TrainingDiverged("loss became non-finite at update " +
                                           std::to_string(update));
                actor_opt.step(net.actor_params, actor_grad);
                critic_opt.step(net.critic_params, critic_grad);
            }
        }

        TrainingCurveRow row;
        row.update = update;
        for (double r : episode_rewards) row.mean_reward += r;
        row.mean_reward /= static_cast<double>(episode_rewards.size());
        for (double v : episode_costs) row.mean_cost += v;
        row.mean_cost /= static_cast<double>(episode_costs.size());
        if (!std::isfinite(row.mean_reward))
            throw TrainingDiverged("mean reward became non-finite at update " +
                                   std::to_string(update));
        curve.push_back(row);
    }
    return curve;
}

/// Compare analytic gradients of the optimization loss against central
/// finite differences on a synthetic batch. Returns the worst relative
/// error over a deterministic subsample of parameters of both nets.
inline double gradient_check(PolicyNetwork& net, std::uint64_t seed, int samples_per_net = 150) {
    Rng rng(seed);
    PpoConfig cfg;
    const auto q = static_cast<std::size_t>(net.q);
    const auto beta = static_cast<std::size_t>(net.beta);

    std::vector<PpoSample> batch;
    nn::Workspace actor_ws, critic_ws;
    net.actor.prepare(actor_ws);
    net.critic.prepare(critic_ws);
    for (int b = 0; b < 4; ++b) {
        RepairState st;
        st.q = net.q;
        st.beta = net.beta;
        st.m.resize(q * beta);
        // one all-zero observation keeps the saturation-free case covered
        for (double& v : st.m) v = b == 0 ? 0.0 : rng.uniform();
        PpoSample s;
        s.legal.assign(q, 0);
        std::vector<std::size_t> legal_idx;
        for (std::size_t i = 0; i < q; ++i)
            if (rng.uniform() < 0.5) {
                s.legal[i] = 1;
                legal_idx.push_back(i);
            }
        if (legal_idx.empty()) {
            s.legal[0] = 1;
            legal_idx.push_back(0);
        }
        fill_input(net, st, s.input);
        actor_ws.acts[0] = s.input;
        const auto& logits = net.actor.forward(net.actor_params, actor_ws);
        auto dist = detail::masked_dist(logits, s.legal);
        const std::size_t action = legal_idx[static_cast<std::size_t>(
            rng.uniform_int(0, static_cast<std::int64_t>(legal_idx.size()) - 1))];
        s.action = static_cast<int>(action);
        // perturbed old log-probability keeps ratios off 1 but inside the
        // clip band, away from the kink
        s.logp_old = std::log(dist.probs[action]) + rng.uniform(-0.05, 0.05);
        s.advantage = rng.uniform(-1.0, 1.0);
        s.ret = rng.uniform(-1.0, 1.0);
        batch.push_back(std::move(s));
    }

    std::vector<double> actor_grad, critic_grad;
    ppo_loss_and_grad(net, batch, cfg, &actor_grad, &critic_grad);

    const double h = 1e-5;
    double worst = 0.0;
    auto probe = [&](std::vector<double>& params, const std::vector<double>& grad) {
        const std::size_t n = params.size();
        const std::size_t step = std::max<std::size_t>(1, n / static_cast<std::size_t>(samples_per_net));
        for (std::size_t i = 0; i < n; i += step) {
            const double saved = params[i];
            params[i] = saved + h;
            const double up = ppo_loss_and_grad(net, batch, cfg, nullptr, nullptr);
            params[i] = saved - h;
            const double down = ppo_loss_and_grad(net, batch, cfg, nullptr, nullptr);
            params[i] = saved;
            const double numeric = (up - down) / (2.0 * h);
            const double denom = std::max(1.0, std::abs(grad[i]) + std::abs(numeric));
            worst = std::max(worst, std::abs(grad[i] - numeric) / denom);
        }
    };
    probe(net.actor_params, actor_grad);
    probe(net.critic_params, critic_grad);
    return worst;
}

}  // namespace hopsched
