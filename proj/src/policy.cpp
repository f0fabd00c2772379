#include "trama/policy.hpp"

#include <cmath>

#include "trama/checkpoint.hpp"
#include "trama/errors.hpp"
#include "trama/replay.hpp"

namespace trama {

using nn::Activation;
using nn::Matrix;
using nn::Tape;
using nn::Var;

void PolicyConfig::validate() const {
  if (n_agents < 1 || obs_len < 1 || state_len < 1 || n_actions < 1) throw ConfigError("policy: empty dimensions");
  if (n_cl < 1) throw ConfigError("policy: n_cl must be >= 1");
  if (pred_hidden < 1 || q_hidden < 1 || repr_hidden < 1 || repr_dim < 1 || mixer_embed < 1) {
    throw ConfigError("policy: layer widths must be positive");
  }
  if (!(gamma >= 0.0 && gamma <= 1.0)) throw ConfigError("policy: gamma must be in [0, 1]");
}

template <typename T>
PolicyNets<T> PolicyNets<T>::create(nn::ParamStore<T>& store, const PolicyConfig& cfg, Rng& rng) {
  cfg.validate();
  PolicyNets n;
  n.pred_in = nn::Mlp<T>::create(store, "pred.in", cfg.obs_len, {{cfg.pred_hidden, Activation::kRelu}}, rng);
  n.pred_gru = nn::GruCell<T>::create(store, "pred.gru", cfg.pred_hidden, cfg.pred_hidden, rng);
  // Zero head: an untrained predictor is uniform and its greedy class is 1.
  n.pred_out = nn::Mlp<T>::create(store, "pred.out", cfg.pred_hidden, {{cfg.n_cl, Activation::kIdentity}}, rng,
                                  nn::Init::kZero, nn::Init::kZero);
  if (cfg.repr == ReprMode::kLearned) {
    n.repr = nn::Mlp<T>::create(store, "repr", cfg.n_cl,
                                {{cfg.repr_hidden, Activation::kRelu}, {cfg.repr_dim, Activation::kIdentity}}, rng);
  }
  n.agent_in = nn::Mlp<T>::create(store, "agent.in", cfg.agent_input(), {{cfg.q_hidden, Activation::kRelu}}, rng);
  n.agent_gru = nn::GruCell<T>::create(store, "agent.gru", cfg.q_hidden, cfg.q_hidden, rng);
  n.agent_out = nn::Mlp<T>::create(store, "agent.out", cfg.q_hidden, {{cfg.n_actions, Activation::kIdentity}}, rng);
  if (cfg.mixer == MixerMode::kQmix) {
    const int e = cfg.mixer_embed;
    n.hyper_w1 = nn::Mlp<T>::create(store, "mixer.w1", cfg.state_len, {{e * cfg.n_agents, Activation::kIdentity}}, rng);
    n.hyper_b1 = nn::Mlp<T>::create(store, "mixer.b1", cfg.state_len, {{e, Activation::kIdentity}}, rng);
    n.hyper_wf = nn::Mlp<T>::create(store, "mixer.wf", cfg.state_len, {{e, Activation::kIdentity}}, rng);
    n.hyper_v = nn::Mlp<T>::create(store, "mixer.v", cfg.state_len, {{e, Activation::kRelu}, {1, Activation::kIdentity}}, rng);
  }
  return n;
}

template <typename T>
StepVars<T> predictor_step(Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, Var obs, Var hidden, int step) {
  Var x = nets.pred_in.forward(tape, store, obs);
  Var h = nets.pred_gru.step(tape, store, x, hidden, step);
  return {nets.pred_out.forward(tape, store, h), h};
}

template <typename T>
Var class_table(Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, const PolicyConfig& cfg) {
  switch (cfg.repr) {
    case ReprMode::kLearned:
      return nets.repr.forward(tape, store, tape.constant(Matrix<T>::Identity(cfg.n_cl, cfg.n_cl)));
    case ReprMode::kOneHot:
      return tape.constant(Matrix<T>::Identity(cfg.n_cl, cfg.n_cl));
    case ReprMode::kZeros:
      break;
  }
  return tape.constant(Matrix<T>::Zero(cfg.n_cl, cfg.repr_dim));
}

template <typename T>
Var class_repr(Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, const PolicyConfig& cfg,
               std::span<const int> classes) {
  std::vector<int> idx;
  for (int k : classes) {
    if (k < 1 || k > cfg.n_cl) throw PreconditionError("class_repr: class " + std::to_string(k) + " outside [1, n_cl]");
    idx.push_back(k - 1);
  }
  return nn::gather_rows(tape, class_table(tape, store, nets, cfg), std::move(idx));
}

template <typename T>
StepVars<T> agent_step(Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, Var inputs, Var hidden, int step) {
  Var x = nets.agent_in.forward(tape, store, inputs);
  Var h = nets.agent_gru.step(tape, store, x, hidden, step);
  return {nets.agent_out.forward(tape, store, h), h};
}

template <typename T>
Var mix(Tape<T>& tape, nn::ParamStore<T>& store, const PolicyNets<T>& nets, const PolicyConfig& cfg, Var chosen, Var state) {
  if (tape.value(chosen).cols() != cfg.n_agents) throw PreconditionError("mix: need one chosen Q per agent");
  if (cfg.mixer == MixerMode::kVdn) return nn::row_sum(tape, chosen);
  Var w1 = nn::abs(tape, nets.hyper_w1.forward(tape, store, state));
  Var b1 = nets.hyper_b1.forward(tape, store, state);
  Var hidden = nn::elu(tape, nn::add(tape, nn::rowwise_bilinear(tape, chosen, w1), b1));
  Var wf = nn::abs(tape, nets.hyper_wf.forward(tape, store, state));
  Var v = nets.hyper_v.forward(tape, store, state);
  return nn::add(tape, nn::row_sum(tape, nn::mul(tape, hidden, wf)), v);
}

std::vector<int> greedy_actions(const Matrix<float>& q, const Matrix<float>& avail) {
  for (Eigen::Index r = 0; r < avail.rows(); ++r) {
    if ((avail.row(r).array() > 0.0f).count() == 0) {
      throw PreconditionError("q_values: agent " + std::to_string(r) + " has no available action");
    }
  }
  return nn::masked_argmax_rows<float>(q, &avail);
}

template <typename T>
EpisodeBatch<T> EpisodeBatch<T>::build(std::span<const Trajectory* const> trajs, const PolicyConfig& cfg) {
  EpisodeBatch b;
  b.B = static_cast<int>(trajs.size());
  b.n = cfg.n_agents;
  if (b.B == 0) throw PreconditionError("policy batch: no trajectories");
  for (const auto* t : trajs) {
    if (!t->label) throw PreconditionError("policy batch: trajectory " + std::to_string(t->id) + " has no label");
    if (*t->label < 1 || *t->label > cfg.n_cl) throw PreconditionError("policy batch: label outside [1, n_cl]");
    if (t->n_agents != cfg.n_agents) throw PreconditionError("policy batch: agent count mismatch");
    b.lengths.push_back(t->length);
    b.labels.push_back(*t->label);
    b.L = std::max(b.L, t->length);
  }
  const int rows = b.B * b.n;
  const int A = cfg.n_actions;
  b.rewards = Matrix<T>::Zero(b.B, b.L);
  b.mask = Matrix<T>::Zero(b.B, b.L);
  b.terminal = Matrix<T>::Zero(b.B, b.L);
  for (int t = 0; t <= b.L; ++t) {
    Matrix<T> obs = Matrix<T>::Zero(rows, cfg.obs_len);
    Matrix<T> avail = Matrix<T>::Zero(rows, A);
    Matrix<T> last = Matrix<T>::Zero(rows, A);
    Matrix<T> state = Matrix<T>::Zero(b.B, cfg.state_len);
    std::vector<int> acts(static_cast<std::size_t>(rows), 0);
    std::vector<int> classes(static_cast<std::size_t>(rows), 0);
    std::vector<T> alive(static_cast<std::size_t>(rows), T(0));
    for (int e = 0; e < b.B; ++e) {
      const auto& tr = *trajs[static_cast<std::size_t>(e)];
      const int len = tr.length;
      if (t <= len) state.row(e) = tr.states.row(t).template cast<T>();
      for (int i = 0; i < b.n; ++i) {
        const int r = e * b.n + i;
        const auto src = static_cast<Eigen::Index>(t * b.n + i);
        classes[static_cast<std::size_t>(r)] = b.labels[static_cast<std::size_t>(e)] - 1;
        if (t <= len) {
          obs.row(r) = tr.obs.row(src).template cast<T>();
          avail.row(r) = tr.avail.row(src).template cast<T>();
        } else {
          avail(r, 0) = T(1);
        }
        if (t >= 1 && t - 1 < len) last(r, tr.actions[static_cast<std::size_t>((t - 1) * b.n + i)]) = T(1);
        if (t < len) {
          acts[static_cast<std::size_t>(r)] = tr.actions[static_cast<std::size_t>(t * b.n + i)];
          if (cfg.include_dead || tr.alive[static_cast<std::size_t>(src)]) alive[static_cast<std::size_t>(r)] = T(1);
        }
      }
      if (t < len) {
        b.rewards(e, t) = static_cast<T>(tr.rewards[static_cast<std::size_t>(t)]);
        b.mask(e, t) = T(1);
        if (t == len - 1 && tr.terminated) b.terminal(e, t) = T(1);
      }
    }
    b.obs.push_back(std::move(obs));
    b.avail.push_back(std::move(avail));
    b.last_act.push_back(std::move(last));
    b.state.push_back(std::move(state));
    b.classes.push_back(std::move(classes));
    if (t < b.L) {
      b.actions.push_back(std::move(acts));
      b.alive.push_back(std::move(alive));
    }
  }
  return b;
}

template <typename T>
PolicyLosses<T> policy_losses(Tape<T>& tape, nn::ParamStore<T>& online, nn::ParamStore<T>& target, const PolicyNets<T>& nets,
                              const PolicyConfig& cfg, const EpisodeBatch<T>& batch, double lambda_zeta) {
  const int rows = batch.B * batch.n;
  const int L = batch.L;
  Matrix<T> ids(rows, batch.n);
  ids.setZero();
  for (int r = 0; r < rows; ++r) ids(r, r % batch.n) = T(1);
  Var id_var = tape.constant(ids);
  Var table_on = class_table(tape, online, nets, cfg);
  Var table_tg = class_table(tape, target, nets, cfg);

  Var h_pred = tape.constant(Matrix<T>::Zero(rows, cfg.pred_hidden));
  Var h_q = tape.constant(Matrix<T>::Zero(rows, cfg.q_hidden));
  Var h_tq = tape.constant(Matrix<T>::Zero(rows, cfg.q_hidden));
  std::vector<Var> q_on;
  std::vector<Matrix<T>> q_tg;
  Var pred = tape.constant(Matrix<T>::Zero(1, 1));
  double correct = 0.0, counted = 0.0;
  const T inv_b = T(1) / static_cast<T>(batch.B);

  for (int t = 0; t <= L; ++t) {
    Var obs = tape.constant(batch.obs[static_cast<std::size_t>(t)]);
    auto p = predictor_step(tape, online, nets, obs, h_pred, t);
    h_pred = p.hidden;
    auto khat = tape.discrete(nn::masked_argmax_rows<T>(tape.value(p.out), nullptr));
    const auto& labels = batch.classes[static_cast<std::size_t>(t)];
    if (t < L) {
      const auto& alive = batch.alive[static_cast<std::size_t>(t)];
      std::vector<T> w(alive.size());
      for (std::size_t r = 0; r < alive.size(); ++r) {
        w[r] = alive[r] * inv_b;
        if (alive[r] > T(0)) {
          counted += 1.0;
          correct += khat[r] == labels[r];
        }
      }
      pred = nn::add(tape, pred, nn::softmax_cross_entropy(tape, p.out, labels, std::move(w)));
    }
    const auto& cond = cfg.teacher_forcing ? labels : khat;
    Var last = tape.constant(batch.last_act[static_cast<std::size_t>(t)]);
    Var in_on[4] = {obs, nn::gather_rows(tape, table_on, cond), last, id_var};
    auto a = agent_step(tape, online, nets, nn::concat_cols(tape, std::span<const Var>(in_on, 4)), h_q, t);
    h_q = a.hidden;
    q_on.push_back(a.out);
    Var in_tg[4] = {obs, nn::gather_rows(tape, table_tg, cond), last, id_var};
    auto b = agent_step(tape, target, nets, nn::concat_cols(tape, std::span<const Var>(in_tg, 4)), h_tq, t);
    h_tq = b.hidden;
    q_tg.push_back(tape.value(b.out));
  }

  const T valid = batch.mask.sum();
  Matrix<double> q_tot = Matrix<double>::Zero(batch.B, L);
  Var td = tape.constant(Matrix<T>::Zero(1, 1));
  for (int t = 0; t < L; ++t) {
    Var chosen = nn::reshape(tape, nn::gather_cols(tape, q_on[static_cast<std::size_t>(t)], batch.actions[static_cast<std::size_t>(t)]),
                             batch.B, batch.n);
    Var qtot = mix(tape, online, nets, cfg, chosen, tape.constant(batch.state[static_cast<std::size_t>(t)]));
    q_tot.col(t) = tape.value(qtot).col(0).template cast<double>();

    // Double Q: the online network picks a', the target network scores it.
    const auto next = static_cast<std::size_t>(t + 1);
    auto best = tape.discrete(nn::masked_argmax_rows<T>(tape.value(q_on[next]), &batch.avail[next]));
    Matrix<T> tchosen(batch.B, batch.n);
    for (int r = 0; r < rows; ++r) tchosen(r / batch.n, r % batch.n) = q_tg[next](r, best[static_cast<std::size_t>(r)]);
    Var tq = mix(tape, target, nets, cfg, tape.constant(tchosen), tape.constant(batch.state[next]));
    Matrix<T> y(batch.B, 1);
    std::vector<T> w(static_cast<std::size_t>(batch.B));
    for (int e = 0; e < batch.B; ++e) {
      y(e, 0) = batch.rewards(e, t) + static_cast<T>(cfg.gamma) * (T(1) - batch.terminal(e, t)) * tape.value(tq)(e, 0);
      w[static_cast<std::size_t>(e)] = valid > T(0) ? batch.mask(e, t) / valid : T(0);
    }
    td = nn::add(tape, td, nn::weighted_sum_sq(tape, nn::sub(tape, qtot, tape.constant(std::move(y))), std::move(w)));
  }

  PolicyLosses<T> out;
  out.td = td;
  out.pred = pred;
  out.total = nn::add(tape, td, nn::scale(tape, pred, static_cast<T>(lambda_zeta)));
  out.pred_accuracy = counted > 0 ? correct / counted : 0.0;
  out.q_tot = std::move(q_tot);
  return out;
}

PolicyModel::PolicyModel(PolicyConfig cfg, Rng& rng) : cfg_(cfg) {
  nets_ = PolicyNets<float>::create(online_, cfg_, rng);
  target_ = online_.cast<float>();
  target_.set_frozen(true);
}

void PolicyModel::refresh_target() { target_.copy_values_from(online_, {"agent.", "repr.", "mixer."}); }

UpdateStats PolicyModel::update(std::span<const Trajectory* const> batch, double lambda_zeta, const nn::AdamConfig& adam,
                                double clip_norm) {
  auto eb = EpisodeBatch<float>::build(batch, cfg_);
  Tape<float> tape;
  auto losses = policy_losses<float>(tape, online_, target_, nets_, cfg_, eb, lambda_zeta);
  UpdateStats s;
  s.td = tape.value(losses.td)(0, 0);
  s.pred = tape.value(losses.pred)(0, 0);
  s.pred_accuracy = losses.pred_accuracy;
  if (!std::isfinite(s.td) || !std::isfinite(s.pred)) throw NumericError("policy update: non-finite loss");
  tape.backward(losses.total);
  s.grad_norm_theta = nn::clip_grad_norm(online_, clip_norm, {"agent.", "repr.", "mixer."});
  s.grad_norm_zeta = nn::clip_grad_norm(online_, clip_norm, {"pred."});
  nn::adam_step(online_, adam);
  return s;
}

void PolicyModel::save(Archive& ar, const std::string& prefix) const {
  put_params(ar, prefix + "/online", online_);
  put_params(ar, prefix + "/target", target_);
}

void PolicyModel::load(const Archive& ar, const std::string& prefix) {
  get_params(ar, prefix + "/online", online_);
  get_params(ar, prefix + "/target", target_);
}

PolicyRunner::PolicyRunner(const PolicyModel& model) : model_(model) { reset(); }

void PolicyRunner::reset() {
  const auto& c = model_.config();
  h_pred_ = Matrix<float>::Zero(c.n_agents, c.pred_hidden);
  h_q_ = Matrix<float>::Zero(c.n_agents, c.q_hidden);
  last_actions_.assign(static_cast<std::size_t>(c.n_agents), -1);
  t_ = 0;
}

ActOutput PolicyRunner::act(const Matrix<float>& obs, const Matrix<float>& avail, double epsilon, Rng& rng, bool sample_class,
                            const std::vector<int>* forced_classes) {
  const auto& c = model_.config();
  auto& store = const_cast<nn::ParamStore<float>&>(const_cast<PolicyModel&>(model_).online());
  const auto& nets = model_.nets();
  Tape<float> tape;
  Var o = tape.constant(obs);
  auto p = predictor_step(tape, store, nets, o, tape.constant(h_pred_), t_);
  h_pred_ = tape.value(p.hidden);
  ActOutput out;
  out.class_probs = nn::softmax_rows<float>(tape.value(p.out));
  for (int i = 0; i < c.n_agents; ++i) {
    int k = 0;
    if (forced_classes) {
      k = forced_classes->at(static_cast<std::size_t>(i));
    } else if (sample_class) {
      std::vector<double> w(static_cast<std::size_t>(c.n_cl));
      for (int j = 0; j < c.n_cl; ++j) w[static_cast<std::size_t>(j)] = out.class_probs(i, j);
      k = static_cast<int>(rng.categorical(w)) + 1;
    } else {
      Matrix<float> row = tape.value(p.out).row(i);
      k = nn::masked_argmax_rows<float>(row, nullptr)[0] + 1;
    }
    out.classes.push_back(k);
  }
  Matrix<float> last = Matrix<float>::Zero(c.n_agents, c.n_actions);
  for (int i = 0; i < c.n_agents; ++i) {
    if (last_actions_[static_cast<std::size_t>(i)] >= 0) last(i, last_actions_[static_cast<std::size_t>(i)]) = 1.0f;
  }
  Var in[4] = {o, class_repr(tape, store, nets, c, out.classes), tape.constant(last),
               tape.constant(Matrix<float>::Identity(c.n_agents, c.n_agents))};
  auto a = agent_step(tape, store, nets, nn::concat_cols(tape, std::span<const Var>(in, 4)), tape.constant(h_q_), t_);
  h_q_ = tape.value(a.hidden);
  out.q = tape.value(a.out);
  out.actions = greedy_actions(out.q, avail);
  for (int i = 0; i < c.n_agents; ++i) {
    if (epsilon > 0.0 && rng.uniform() < epsilon) {
      std::vector<double> w(static_cast<std::size_t>(c.n_actions));
      for (int k = 0; k < c.n_actions; ++k) w[static_cast<std::size_t>(k)] = avail(i, k) > 0.0f ? 1.0 : 0.0;
      out.actions[static_cast<std::size_t>(i)] = static_cast<int>(rng.categorical(w));
    }
  }
  last_actions_ = out.actions;
  ++t_;
  return out;
}

#define TRAMA_POLICY_INSTANTIATE(T)                                                                                    \
  template struct PolicyNets<T>;                                                                                      \
  template struct EpisodeBatch<T>;                                                                                     \
  template StepVars<T> predictor_step(Tape<T>&, nn::ParamStore<T>&, const PolicyNets<T>&, Var, Var, int);              \
  template Var class_table(Tape<T>&, nn::ParamStore<T>&, const PolicyNets<T>&, const PolicyConfig&);                   \
  template Var class_repr(Tape<T>&, nn::ParamStore<T>&, const PolicyNets<T>&, const PolicyConfig&, std::span<const int>); \
  template StepVars<T> agent_step(Tape<T>&, nn::ParamStore<T>&, const PolicyNets<T>&, Var, Var, int);                  \
  template Var mix(Tape<T>&, nn::ParamStore<T>&, const PolicyNets<T>&, const PolicyConfig&, Var, Var);                 \
  template PolicyLosses<T> policy_losses(Tape<T>&, nn::ParamStore<T>&, nn::ParamStore<T>&, const PolicyNets<T>&,        \
                                         const PolicyConfig&, const EpisodeBatch<T>&, double);

TRAMA_POLICY_INSTANTIATE(float)
TRAMA_POLICY_INSTANTIATE(double)

}  // namespace trama
