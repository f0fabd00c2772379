#include "trama/trainer.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <set>

#include "trama/checkpoint.hpp"
#include "trama/errors.hpp"

namespace trama {

namespace fs = std::filesystem;
using nn::Matrix;

namespace {

constexpr double kNaN = std::numeric_limits<double>::quiet_NaN();

enum LogSlot { kReturn, kWon, kLength, kEpsilon, kTd, kPred, kPredAcc };

std::vector<std::int64_t> rng_state(const Rng& r) {
  return {std::bit_cast<std::int64_t>(r.key()), std::bit_cast<std::int64_t>(r.counter())};
}

Rng rng_from(const std::vector<std::int64_t>& v) {
  return Rng(std::bit_cast<std::uint64_t>(v.at(0)), std::bit_cast<std::uint64_t>(v.at(1)));
}

}  // namespace

Trainer::Trainer(TrainConfig cfg, std::string out_dir)
    : cfg_((cfg.validate(), std::move(cfg))),
      out_dir_(std::move(out_dir)),
      env_(cfg_.env),
      pcfg_(cfg_.effective_policy()),
      vcfg_(cfg_.effective_vq()),
      root_(cfg_.seed),
      act_rng_(root_.split(2)),
      sample_rng_(root_.split(3)),
      cluster_rng_(root_.split(4)),
      buffer_(static_cast<std::size_t>(cfg_.buffer_capacity)) {
  Rng init = root_.split(1);
  vq_ = std::make_unique<VqVae>(env_.spec().state_len, vcfg_, init);
  policy_ = std::make_unique<PolicyModel>(pcfg_, init);
  n_cl_ = cfg_.n_cl;
  classifier_ = std::make_unique<TrajectoryClassifier>(vcfg_.d, n_cl_, cfg_.classifier, init);
  adam_.lr = cfg_.lr;
  next_checkpoint_ = cfg_.checkpoint_every;
  if (!out_dir_.empty()) open_outputs();
}

void Trainer::open_outputs() {
  fs::create_directories(out_dir_);
  std::ofstream echo(out_dir_ + "/config_echo.json");
  echo << to_json(cfg_).dump(2) << '\n';
  metrics_.attach(out_dir_ + "/metrics.csv");
  if (cfg_.write_predictions) std::ofstream(out_dir_ + "/predictions.csv") << "episode,t,agent,k_hat,k_bar\n";
  if (cfg_.write_embeddings) {
    std::ofstream emb(out_dir_ + "/embeddings.csv");
    write_embeddings_csv(emb, "", 0, Matrix<float>(0, vcfg_.d), {}, true);
  }
}

void Trainer::set_tasks(std::vector<TaskSpec> tasks) {
  EnvConfig e = cfg_.env;
  e.tasks = std::move(tasks);
  HuntGrid next(e);
  const auto& a = next.spec();
  const auto& b = env_.spec();
  if (a.obs_len != b.obs_len || a.state_len != b.state_len || a.n_actions != b.n_actions) {
    throw ConfigError("tasks: override changes observation, state or action dimensions");
  }
  cfg_.env = e;
  env_ = std::move(next);
}

double Trainer::epsilon() const {
  if (cfg_.epsilon_anneal <= 0) return cfg_.epsilon_finish;
  const double frac = static_cast<double>(env_steps_) / static_cast<double>(cfg_.epsilon_anneal);
  if (frac >= 1.0) return cfg_.epsilon_finish;
  return cfg_.epsilon_start + frac * (cfg_.epsilon_finish - cfg_.epsilon_start);
}

Eigen::RowVectorXd Trainer::embedding(Trajectory& traj) const {
  if (cfg_.refresh_indices == RefreshIndices::kOnCodebookUpdate && traj.code_version != vq_->version()) {
    traj.codes = vq_->encode(traj.states);
    traj.code_version = vq_->version();
  }
  return embed_trajectory(vq_->codebook(), traj.codes, cfg_.mean_embedding);
}

int Trainer::label_for(Trajectory& traj) const {
  if (!classifier_->trained()) return 1;
  return classifier_->classify(embedding(traj));
}

Trajectory Trainer::run_episode(double epsilon, bool eval_mode, Rng& rng, EpisodeLog* log) {
  const auto& spec = env_.spec();
  const int n = spec.n_agents;
  env_.reset(rng);
  PolicyRunner runner(*policy_);

  std::vector<std::vector<float>> states;
  std::vector<Matrix<float>> obs, avail;
  Trajectory traj;
  traj.n_agents = n;
  auto record = [&] {
    states.push_back(env_.global_state());
    obs.push_back(env_.observations());
    avail.push_back(env_.avail_actions());
    for (const auto& a : env_.state().agents) traj.alive.push_back(a.alive ? 1 : 0);
  };
  record();
  bool done = false;
  while (!done) {
    auto out = runner.act(obs.back(), avail.back(), epsilon, rng, cfg_.sample_class);
    if (log) log->k_hat.push_back(out.classes);
    auto r = env_.step(out.actions);
    traj.actions.insert(traj.actions.end(), out.actions.begin(), out.actions.end());
    traj.rewards.push_back(static_cast<float>(r.reward));
    traj.episode_return += r.reward;
    done = r.done;
    record();
  }
  traj.length = static_cast<int>(traj.rewards.size());
  const auto T1 = static_cast<Eigen::Index>(states.size());
  traj.states.resize(T1, spec.state_len);
  traj.obs.resize(T1 * n, spec.obs_len);
  traj.avail.resize(T1 * n, spec.n_actions);
  for (Eigen::Index t = 0; t < T1; ++t) {
    const auto& s = states[static_cast<std::size_t>(t)];
    traj.states.row(t) = Eigen::Map<const Eigen::RowVectorXf>(s.data(), static_cast<Eigen::Index>(s.size()));
    traj.obs.middleRows(t * n, n) = obs[static_cast<std::size_t>(t)];
    traj.avail.middleRows(t * n, n) = avail[static_cast<std::size_t>(t)];
  }
  const auto& st = env_.state();
  const bool wiped = std::none_of(st.agents.begin(), st.agents.end(), [](const Entity& a) { return a.alive; });
  traj.terminated = st.won || wiped;
  traj.won = st.won;
  traj.task_index = st.task_index;
  traj.codes = vq_->encode(traj.states);
  traj.code_version = vq_->version();
  traj.label = label_for(traj);
  traj.check();

  if (!eval_mode) {
    env_steps_ += traj.length;
    ++episodes_;
    Trajectory copy = traj;
    traj.id = buffer_.append(std::move(copy));
  }
  return traj;
}

void Trainer::train_iteration() {
  const double eps = epsilon();
  auto traj = run_episode(eps, false, act_rng_);
  log_sums_[kReturn] += traj.episode_return;
  log_sums_[kWon] += traj.won ? 1.0 : 0.0;
  log_sums_[kLength] += traj.length;
  log_sums_[kEpsilon] += eps;

  const auto B = static_cast<std::size_t>(cfg_.batch_size);
  std::optional<UpdateStats> stats;
  if (buffer_.size() >= B) {
    if (episodes_ % cfg_.vq_interval == 0) {
      auto batch = buffer_.sample_batch(static_cast<std::size_t>(cfg_.vq_batch), sample_rng_);
      const double loss = vq_->update(batch, n_cl_, adam_);
      metrics_.append(env_steps_, episodes_, "vq/loss", loss);
    }
    auto batch = buffer_.sample_batch(B, sample_rng_);
    stats = policy_->update(batch, cfg_.lambda_zeta, adam_, cfg_.clip_norm);
    ++updates_;
    if (updates_ % cfg_.target_interval == 0) policy_->refresh_target();
  }
  log_training(traj, stats ? &*stats : nullptr);

  if (episodes_ % cfg_.cluster_interval == 0) clustering_round();
  maybe_evaluate();
  if (cfg_.checkpoint_every > 0 && !out_dir_.empty() && env_steps_ >= next_checkpoint_) {
    metrics_.flush();
    save_checkpoint(out_dir_ + "/checkpoint.bin");
    while (next_checkpoint_ <= env_steps_) next_checkpoint_ += cfg_.checkpoint_every;
  }
}

void Trainer::log_training(const Trajectory&, const UpdateStats* stats) {
  ++log_count_;
  if (stats) {
    ++log_updates_;
    log_sums_[kTd] += stats->td;
    log_sums_[kPred] += stats->pred;
    log_sums_[kPredAcc] += stats->pred_accuracy;
  }
  if (log_count_ < cfg_.log_interval) return;
  const double c = log_count_;
  metrics_.append(env_steps_, episodes_, "train/return", log_sums_[kReturn] / c);
  metrics_.append(env_steps_, episodes_, "train/win_rate", log_sums_[kWon] / c);
  metrics_.append(env_steps_, episodes_, "train/episode_length", log_sums_[kLength] / c);
  metrics_.append(env_steps_, episodes_, "train/epsilon", log_sums_[kEpsilon] / c);
  if (log_updates_ > 0) {
    const double u = log_updates_;
    metrics_.append(env_steps_, episodes_, "train/td_loss", log_sums_[kTd] / u);
    metrics_.append(env_steps_, episodes_, "train/pred_loss", log_sums_[kPred] / u);
    metrics_.append(env_steps_, episodes_, "train/pred_accuracy", log_sums_[kPredAcc] / u);
  }
  log_sums_.fill(0.0);
  log_count_ = 0;
  log_updates_ = 0;
}

ClusterRoundStats Trainer::clustering_round() {
  ClusterRoundStats s;
  s.round = ++rounds_;
  const std::size_t M = std::min(buffer_.size(), static_cast<std::size_t>(cfg_.cluster_samples));
  if (M == 0) throw PreconditionError("clustering_round: empty buffer");
  auto positions = buffer_.sample_positions(M, cluster_rng_);
  std::sort(positions.begin(), positions.end());
  positions.erase(std::unique(positions.begin(), positions.end()), positions.end());
  s.samples = static_cast<int>(positions.size());
  Points x(static_cast<Eigen::Index>(positions.size()), vcfg_.d);
  for (std::size_t r = 0; r < positions.size(); ++r) x.row(static_cast<Eigen::Index>(r)) = embedding(buffer_.at(positions[r]));

  KmeansOptions opts;
  opts.restarts = cfg_.kmeans_restarts;
  int n_cl = cfg_.n_cl;
  if (cfg_.has_flag("adaptive_ncl")) {
    std::vector<int> cands;
    for (int k : cfg_.ncl_candidates) {
      if (k < x.rows()) cands.push_back(k);
    }
    if (!cands.empty()) n_cl = adapt_ncl(x, cands, cluster_rng_, opts);
  }
  n_cl = std::min<int>(n_cl, static_cast<int>(x.rows()));
  const ClusterModel* prev = (cfg_.has_flag("no_init") || !cluster_) ? nullptr : &*cluster_;
  auto fit = kmeans_fit(x, n_cl, prev, cluster_rng_, opts);

  std::map<std::int64_t, int> old_labels, new_labels;
  for (std::size_t r = 0; r < positions.size(); ++r) {
    const auto& t = buffer_.at(positions[r]);
    old_labels[t.id] = t.label.value_or(1);
    new_labels[t.id] = fit.labels[r];
  }
  s.preserved_ratio = preserved_ratio(old_labels, new_labels);
  if (n_cl != n_cl_ || classifier_->n_cl() != n_cl) {
    classifier_->reset(n_cl, cluster_rng_);
    n_cl_ = n_cl;
  }
  for (std::size_t r = 0; r < positions.size(); ++r) buffer_.set_label(positions[r], fit.labels[r], n_cl_);
  s.classifier_loss_final = classifier_->train(x, fit.labels, cluster_rng_);
  s.classifier_loss_first = classifier_->last_stats().first_epoch;
  s.classifier_loss = classifier_->last_stats().mean;

  // The fresh clustering is authoritative for the sampled trajectories; the classifier labels the rest.
  std::vector<std::size_t> rest;
  for (std::size_t p = 0, k = 0; p < buffer_.size(); ++p) {
    if (k < positions.size() && positions[k] == p) {
      ++k;
      continue;
    }
    rest.push_back(p);
  }
  if (!rest.empty()) {
    Points y(static_cast<Eigen::Index>(rest.size()), vcfg_.d);
    for (std::size_t r = 0; r < rest.size(); ++r) y.row(static_cast<Eigen::Index>(r)) = embedding(buffer_.at(rest[r]));
    const auto labels = classifier_->classify(y);
    for (std::size_t r = 0; r < rest.size(); ++r) {
      auto& t = buffer_.at(rest[r]);
      if (t.label != labels[r]) ++s.relabeled;
      buffer_.set_label(rest[r], labels[r], n_cl_);
    }
  }

  s.n_cl = n_cl_;
  s.inertia = fit.inertia;
  s.silhouette = kNaN;
  if (n_cl_ >= 2) {
    try {
      s.silhouette = silhouette(x, fit.labels);
    } catch (const PreconditionError&) {
    }
  }
  cluster_ = fit.model;
  cluster_->round = rounds_;
  round_log_.push_back(s);

  std::vector<int> codes;
  for (auto p : positions) {
    const auto& c = buffer_.at(p).codes;
    codes.insert(codes.end(), c.begin(), c.end());
  }
  metrics_.append(env_steps_, episodes_, "cluster/preserved_ratio", s.preserved_ratio);
  if (!std::isnan(s.silhouette)) metrics_.append(env_steps_, episodes_, "cluster/silhouette", s.silhouette);
  metrics_.append(env_steps_, episodes_, "cluster/inertia", s.inertia);
  metrics_.append(env_steps_, episodes_, "cluster/classifier_loss", s.classifier_loss);
  metrics_.append(env_steps_, episodes_, "cluster/classifier_loss_final", s.classifier_loss_final);
  metrics_.append(env_steps_, episodes_, "cluster/n_cl", s.n_cl);
  metrics_.append(env_steps_, episodes_, "cluster/relabeled", static_cast<double>(s.relabeled));
  metrics_.append(env_steps_, episodes_, "vq/utilization", codebook_utilization(codes, vcfg_.n_c));
  if (!out_dir_.empty() && cfg_.write_embeddings) write_embeddings();
  return s;
}

void Trainer::write_embeddings() {
  std::vector<int> codes, classes;
  for (std::size_t p = 0; p < buffer_.size(); ++p) {
    const auto& t = buffer_.at(p);
    codes.insert(codes.end(), t.codes.begin(), t.codes.end());
    classes.insert(classes.end(), t.codes.size(), t.label.value_or(1));
  }
  const auto cls = entry_classes(codes, classes, vcfg_.n_c, n_cl_);
  std::ofstream out(out_dir_ + "/embeddings.csv", std::ios::app);
  write_embeddings_csv(out, "seed" + std::to_string(cfg_.seed), env_steps_, vq_->codebook(), cls, false);
}

EvalResult Trainer::evaluate(int episodes, std::uint64_t stream) {
  if (episodes < 0) throw PreconditionError("evaluate: negative episode count");
  EvalResult r;
  r.episodes = episodes;
  Rng rng = root_.split(0x5EED0000ULL + stream);
  std::array<double, 4> hits{};
  for (int e = 0; e < episodes; ++e) {
    EpisodeLog log;
    auto traj = run_episode(0.0, true, rng, &log);
    const int k_bar = *traj.label;
    r.mean_return += traj.episode_return;
    r.win_rate += traj.won ? 1.0 : 0.0;
    r.task_index.push_back(traj.task_index);
    r.k_bar.push_back(k_bar);
    const std::int64_t ep = eval_episode_counter_++;
    for (int t = 0; t < traj.length; ++t) {
      const auto& kh = log.k_hat[static_cast<std::size_t>(t)];
      for (int i = 0; i < traj.n_agents; ++i) {
        const int k = kh[static_cast<std::size_t>(i)];
        r.predictions.push_back(PredictionRecord{ep, t, i, k, k_bar});
        if (!traj.alive[static_cast<std::size_t>(t * traj.n_agents + i)]) continue;
        for (std::size_t row = 0; row < kAccuracySteps.size(); ++row) {
          if (kAccuracySteps[row] != t) continue;
          ++r.counts[row];
          hits[row] += k == k_bar ? 1.0 : 0.0;
        }
      }
    }
  }
  if (episodes > 0) {
    r.mean_return /= episodes;
    r.win_rate /= episodes;
  }
  for (std::size_t row = 0; row < hits.size(); ++row) r.accuracy[row] = r.counts[row] > 0 ? hits[row] / r.counts[row] : kNaN;
  return r;
}

void Trainer::maybe_evaluate() {
  if (cfg_.eval_every <= 0 || env_steps_ < next_eval_) return;
  auto r = evaluate(cfg_.eval_episodes, static_cast<std::uint64_t>(evals_));
  ++evals_;
  while (next_eval_ <= env_steps_) next_eval_ += cfg_.eval_every;
  metrics_.append(env_steps_, episodes_, "eval/return", r.mean_return);
  metrics_.append(env_steps_, episodes_, "eval/win_rate", r.win_rate);
  for (std::size_t row = 0; row < kAccuracySteps.size(); ++row) {
    if (r.counts[row] > 0) {
      metrics_.append(env_steps_, episodes_, "eval/accuracy_t" + std::to_string(kAccuracySteps[row]), r.accuracy[row]);
    }
  }
  metrics_.flush();
  if (!out_dir_.empty() && cfg_.write_predictions) {
    std::ofstream out(out_dir_ + "/predictions.csv", std::ios::app);
    for (const auto& p : r.predictions) out << p.episode << ',' << p.t << ',' << p.agent << ',' << p.k_hat << ',' << p.k_bar << '\n';
  }
}

void Trainer::run(std::optional<std::int64_t> max_steps) {
  const std::int64_t stop = max_steps ? env_steps_ + *max_steps : cfg_.t_env;
  if (env_steps_ == 0 && episodes_ == 0) maybe_evaluate();
  while (env_steps_ < stop) train_iteration();
  // Close the return curve at the final step.
  if (cfg_.eval_every > 0 && evals_ > 0 && env_steps_ >= cfg_.t_env) {
    const auto last = metrics_.series("eval/return");
    if (last.empty() || last.back().first != env_steps_) {
      next_eval_ = env_steps_;
      maybe_evaluate();
    }
  }
  metrics_.flush();
  if (!out_dir_.empty()) save_checkpoint(out_dir_ + "/checkpoint.bin");
}

void Trainer::save_checkpoint(const std::string& path) const {
  Archive ar;
  ar.put_string("config", to_json(cfg_).dump());
  ar.put_i64("trainer/counters", {10},
             {env_steps_, episodes_, updates_, rounds_, evals_, next_eval_, next_checkpoint_, eval_episode_counter_, n_cl_,
              static_cast<std::int64_t>(metrics_.rows().size())});
  ar.put_i64("trainer/log_counts", {2}, {log_count_, log_updates_});
  ar.put_f64("trainer/log_sums", {static_cast<std::int64_t>(log_sums_.size())},
             std::vector<double>(log_sums_.begin(), log_sums_.end()));
  ar.put_i64("rng/act", {2}, rng_state(act_rng_));
  ar.put_i64("rng/sample", {2}, rng_state(sample_rng_));
  ar.put_i64("rng/cluster", {2}, rng_state(cluster_rng_));
  policy_->save(ar, "policy");
  vq_->save(ar, "vq");
  classifier_->save(ar, "classifier");
  if (cluster_) {
    const auto& c = cluster_->centroids;
    ar.put_f64("cluster/centroids", {c.rows(), c.cols()}, std::vector<double>(c.data(), c.data() + c.size()));
    ar.put_scalar("cluster/round", cluster_->round);
  }
  ar.put_scalar("buffer/stored", cfg_.checkpoint_buffer ? 1 : 0);
  if (cfg_.checkpoint_buffer) buffer_.save(ar, "buffer");
  ar.save(path);
}

void Trainer::load_state(const Archive& ar) {
  const auto& c = ar.i64("trainer/counters");
  env_steps_ = c.at(0);
  episodes_ = c.at(1);
  updates_ = c.at(2);
  rounds_ = static_cast<int>(c.at(3));
  evals_ = c.at(4);
  next_eval_ = c.at(5);
  next_checkpoint_ = c.at(6);
  eval_episode_counter_ = c.at(7);
  n_cl_ = static_cast<int>(c.at(8));
  const auto metric_rows = c.at(9);
  const auto& lc = ar.i64("trainer/log_counts");
  log_count_ = static_cast<int>(lc.at(0));
  log_updates_ = static_cast<int>(lc.at(1));
  const auto& ls = ar.f64("trainer/log_sums");
  std::copy(ls.begin(), ls.end(), log_sums_.begin());
  act_rng_ = rng_from(ar.i64("rng/act"));
  sample_rng_ = rng_from(ar.i64("rng/sample"));
  cluster_rng_ = rng_from(ar.i64("rng/cluster"));
  policy_->load(ar, "policy");
  vq_->load(ar, "vq");
  classifier_->load(ar, "classifier");
  if (ar.has("cluster/centroids")) {
    const auto& rec = ar.get("cluster/centroids");
    ClusterModel m;
    m.centroids = Points(rec.shape.at(0), rec.shape.at(1));
    const auto& v = ar.f64("cluster/centroids");
    std::copy(v.begin(), v.end(), m.centroids.data());
    m.round = static_cast<int>(ar.scalar("cluster/round"));
    cluster_ = m;
  }
  if (ar.scalar("buffer/stored") != 0) buffer_.load(ar, "buffer");
  // Metric rows recorded before the checkpoint; later rows in the file are discarded on resume.
  resume_rows_ = metric_rows;
}

std::unique_ptr<Trainer> Trainer::from_checkpoint(const std::string& checkpoint) {
  const auto ar = Archive::load(checkpoint);
  auto cfg = parse_config_text(ar.string("config"));
  auto t = std::make_unique<Trainer>(cfg);
  t->load_state(ar);
  return t;
}

std::unique_ptr<Trainer> Trainer::resume(const std::string& checkpoint, std::string out_dir) {
  auto t = from_checkpoint(checkpoint);
  t->out_dir_ = std::move(out_dir);
  if (!t->out_dir_.empty()) {
    fs::create_directories(t->out_dir_);
    t->metrics_.attach(t->out_dir_ + "/metrics.csv", t->resume_rows_);
  }
  return t;
}

void Trainer::write_eval_report(const EvalResult& r, std::ostream& out) const {
  nlohmann::json j;
  j["episodes"] = r.episodes;
  if (r.episodes > 0) {
    j["mean_return"] = r.mean_return;
    j["win_rate"] = r.win_rate;
    nlohmann::json rows = nlohmann::json::array();
    for (std::size_t row = 0; row < kAccuracySteps.size(); ++row) {
      nlohmann::json a{{"t", kAccuracySteps[row]}, {"count", r.counts[row]}};
      a["accuracy"] = r.counts[row] > 0 ? nlohmann::json(r.accuracy[row]) : nlohmann::json(nullptr);
      rows.push_back(a);
    }
    j["accuracy"] = rows;
  }
  out << j.dump(2) << '\n';
}

}  // namespace trama
