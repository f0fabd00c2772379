#include "trama/replay.hpp"

#include <algorithm>

#include "trama/checkpoint.hpp"
#include "trama/errors.hpp"

namespace trama {

void Trajectory::check() const {
  const auto T = static_cast<Eigen::Index>(length);
  const auto n = static_cast<Eigen::Index>(n_agents);
  auto fail = [](const std::string& what) { throw InvariantError("trajectory: " + what); };
  if (length < 1 || n_agents < 1) fail("empty episode");
  if (static_cast<int>(codes.size()) != length + 1) {
    fail("code sequence has " + std::to_string(codes.size()) + " entries, expected T_e + 1 = " + std::to_string(length + 1));
  }
  if (states.rows() != T + 1) fail("state rows != T_e + 1");
  if (obs.rows() != (T + 1) * n || avail.rows() != (T + 1) * n) fail("observation rows != (T_e + 1) * n");
  if (static_cast<Eigen::Index>(actions.size()) != T * n) fail("action count != T_e * n");
  if (static_cast<Eigen::Index>(rewards.size()) != T) fail("reward count != T_e");
  if (static_cast<Eigen::Index>(alive.size()) != (T + 1) * n) fail("alive flags != (T_e + 1) * n");
}

ReplayBuffer::ReplayBuffer(std::size_t capacity) : capacity_(capacity) {
  if (capacity == 0) throw ConfigError("replay capacity must be positive");
}

std::int64_t ReplayBuffer::append(Trajectory traj) {
  traj.check();
  traj.id = next_id_++;
  if (items_.size() == capacity_) items_.pop_front();
  items_.push_back(std::move(traj));
  return items_.back().id;
}

const Trajectory* ReplayBuffer::find(std::int64_t id) const {
  if (items_.empty() || id < items_.front().id || id > items_.back().id) return nullptr;
  // Ids are consecutive, so the position is an offset from the oldest.
  return &items_[static_cast<std::size_t>(id - items_.front().id)];
}

std::vector<std::size_t> ReplayBuffer::sample_positions(std::size_t n, Rng& rng) const {
  if (n == 0) return {};
  if (items_.empty()) throw PreconditionError("sample_batch: buffer is empty");
  std::vector<std::size_t> out;
  out.reserve(n);
  const auto size = items_.size();
  if (size < n) {
    for (std::size_t i = 0; i < n; ++i) out.push_back(static_cast<std::size_t>(rng.uniform_int(size)));
    return out;
  }
  // Floyd's algorithm: n distinct positions in O(n) draws.
  std::vector<std::uint8_t> taken(size, 0);
  for (std::size_t j = size - n; j < size; ++j) {
    auto t = static_cast<std::size_t>(rng.uniform_int(j + 1));
    if (taken[t]) t = j;
    taken[t] = 1;
    out.push_back(t);
  }
  return out;
}

std::vector<const Trajectory*> ReplayBuffer::sample_batch(std::size_t n, Rng& rng) const {
  std::vector<const Trajectory*> out;
  for (auto p : sample_positions(n, rng)) out.push_back(&items_[p]);
  return out;
}

namespace {
int checked(int label, int n_cl) {
  if (label < 1 || label > n_cl) {
    throw InvariantError("label " + std::to_string(label) + " outside [1, " + std::to_string(n_cl) + "]");
  }
  return label;
}
}  // namespace

std::size_t ReplayBuffer::assign_labels(const std::function<int(const Trajectory&)>& labeler, int n_cl) {
  std::size_t count = 0;
  for (auto& t : items_) {
    if (t.label) continue;
    t.label = checked(labeler(t), n_cl);
    ++count;
  }
  return count;
}

void ReplayBuffer::relabel_all(const std::function<int(const Trajectory&)>& labeler, int n_cl) {
  for (auto& t : items_) t.label = checked(labeler(t), n_cl);
}

void ReplayBuffer::set_label(std::size_t pos, int label, int n_cl) { items_.at(pos).label = checked(label, n_cl); }

std::size_t ReplayBuffer::labeled_count() const {
  return static_cast<std::size_t>(std::count_if(items_.begin(), items_.end(), [](const Trajectory& t) { return t.label.has_value(); }));
}

void ReplayBuffer::ensure_codes(std::size_t pos, std::int64_t version,
                                const std::function<std::vector<int>(const nn::Matrix<float>&)>& encode) {
  auto& t = items_.at(pos);
  if (t.code_version == version) return;
  t.codes = encode(t.states);
  t.code_version = version;
}

namespace {

template <typename M>
std::vector<float> flat(const M& m) {
  return std::vector<float>(m.data(), m.data() + m.size());
}

nn::Matrix<float> unflat(const Archive& ar, const std::string& name) {
  const auto& rec = ar.get(name);
  nn::Matrix<float> m(rec.shape.at(0), rec.shape.at(1));
  std::copy(rec.f32.begin(), rec.f32.end(), m.data());
  return m;
}

}  // namespace

void ReplayBuffer::save(Archive& ar, const std::string& prefix) const {
  ar.put_i64(prefix + "/meta", {3}, {static_cast<std::int64_t>(capacity_), next_id_, static_cast<std::int64_t>(items_.size())});
  for (std::size_t k = 0; k < items_.size(); ++k) {
    const auto& t = items_[k];
    const auto p = prefix + "/" + std::to_string(k) + "/";
    ar.put_i64(p + "meta", {9},
               {t.id, t.length, t.n_agents, t.terminated, t.code_version, t.label.value_or(0), t.task_index, t.won,
                static_cast<std::int64_t>(t.states.cols())});
    ar.put_f64(p + "return", {1}, {t.episode_return});
    ar.put_f32(p + "states", {t.states.rows(), t.states.cols()}, flat(t.states));
    ar.put_f32(p + "obs", {t.obs.rows(), t.obs.cols()}, flat(t.obs));
    ar.put_f32(p + "avail", {t.avail.rows(), t.avail.cols()}, flat(t.avail));
    ar.put_f32(p + "rewards", {static_cast<std::int64_t>(t.rewards.size())}, t.rewards);
    ar.put_i64(p + "actions", {static_cast<std::int64_t>(t.actions.size())}, std::vector<std::int64_t>(t.actions.begin(), t.actions.end()));
    ar.put_i64(p + "alive", {static_cast<std::int64_t>(t.alive.size())}, std::vector<std::int64_t>(t.alive.begin(), t.alive.end()));
    ar.put_i64(p + "codes", {static_cast<std::int64_t>(t.codes.size())}, std::vector<std::int64_t>(t.codes.begin(), t.codes.end()));
  }
}

void ReplayBuffer::load(const Archive& ar, const std::string& prefix) {
  const auto& meta = ar.i64(prefix + "/meta");
  capacity_ = static_cast<std::size_t>(meta.at(0));
  next_id_ = meta.at(1);
  items_.clear();
  for (std::int64_t k = 0; k < meta.at(2); ++k) {
    const auto p = prefix + "/" + std::to_string(k) + "/";
    const auto& m = ar.i64(p + "meta");
    Trajectory t;
    t.id = m.at(0);
    t.length = static_cast<int>(m.at(1));
    t.n_agents = static_cast<int>(m.at(2));
    t.terminated = m.at(3) != 0;
    t.code_version = m.at(4);
    if (m.at(5) != 0) t.label = static_cast<int>(m.at(5));
    t.task_index = static_cast<int>(m.at(6));
    t.won = m.at(7) != 0;
    t.episode_return = ar.scalar_f64(p + "return");
    t.states = unflat(ar, p + "states");
    t.obs = unflat(ar, p + "obs");
    t.avail = unflat(ar, p + "avail");
    t.rewards = ar.f32(p + "rewards");
    for (auto v : ar.i64(p + "actions")) t.actions.push_back(static_cast<int>(v));
    for (auto v : ar.i64(p + "alive")) t.alive.push_back(static_cast<std::uint8_t>(v));
    for (auto v : ar.i64(p + "codes")) t.codes.push_back(static_cast<int>(v));
    t.check();
    items_.push_back(std::move(t));
  }
}

}  // namespace trama
