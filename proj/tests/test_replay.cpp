#include <gtest/gtest.h>

#include <sstream>

#include "fixtures.hpp"
#include "trama/checkpoint.hpp"
#include "trama/errors.hpp"

using namespace trama;
using trama::testing::make_trajectory;

TEST(Replay, AppendAndFifoEviction) {
  ReplayBuffer buf(3);
  Rng rng(1);
  EXPECT_EQ(buf.append(make_trajectory(2, 2, rng)), 0);
  EXPECT_EQ(buf.size(), 1u);
  for (int i = 0; i < 3; ++i) buf.append(make_trajectory(2, 2, rng));
  EXPECT_EQ(buf.size(), 3u);
  EXPECT_EQ(buf.find(0), nullptr);
  EXPECT_EQ(buf.at(0).id, 1);
  EXPECT_EQ(buf.inserted(), 4);
}

TEST(Replay, RoundTripById) {
  ReplayBuffer buf(10);
  Rng rng(2);
  auto t = make_trajectory(4, 3, rng);
  t.codes = {1, 5, 5, 2, 0};
  const auto id = buf.append(t);
  const auto* got = buf.find(id);
  ASSERT_NE(got, nullptr);
  EXPECT_EQ(got->states, t.states);
  EXPECT_EQ(got->obs, t.obs);
  EXPECT_EQ(got->actions, t.actions);
  EXPECT_EQ(got->rewards, t.rewards);
  EXPECT_EQ(got->codes, t.codes);
}

TEST(Replay, CodeLengthInvariant) {
  ReplayBuffer buf(10);
  Rng rng(3);
  auto t = make_trajectory(4, 2, rng);
  t.codes.pop_back();
  EXPECT_THROW(buf.append(t), InvariantError);
}

TEST(Replay, SamplingEdgeCases) {
  ReplayBuffer buf(10);
  Rng rng(4);
  EXPECT_THROW(buf.sample_batch(2, rng), PreconditionError);
  EXPECT_TRUE(buf.sample_batch(0, rng).empty());
  buf.append(make_trajectory(1, 1, rng));
  auto b = buf.sample_batch(4, rng);
  ASSERT_EQ(b.size(), 4u);
  for (auto* p : b) EXPECT_EQ(p, &buf.at(0));
  for (int i = 0; i < 9; ++i) buf.append(make_trajectory(1, 1, rng));
  auto pos = buf.sample_positions(10, rng);
  std::sort(pos.begin(), pos.end());
  for (std::size_t i = 0; i < 10; ++i) EXPECT_EQ(pos[i], i);
}

TEST(Replay, SamplingIsUniformChiSquare) {
  ReplayBuffer buf(10);
  Rng rng(5);
  for (int i = 0; i < 10; ++i) buf.append(make_trajectory(1, 1, rng));
  std::vector<int> counts(10, 0);
  const int draws = 100000;
  for (int i = 0; i < draws / 4; ++i) {
    for (auto p : buf.sample_positions(4, rng)) counts[p]++;
  }
  double chi2 = 0;
  const double expected = draws / 10.0;
  for (int c : counts) chi2 += (c - expected) * (c - expected) / expected;
  EXPECT_LT(chi2, 21.666);  // 99th percentile of chi-square with 9 dof
}

TEST(Replay, AssignLabelsOnlyFillsMissing) {
  ReplayBuffer buf(20);
  Rng rng(6);
  for (int i = 0; i < 10; ++i) {
    auto t = make_trajectory(1, 1, rng);
    if (i >= 3) t.label = 2;
    buf.append(std::move(t));
  }
  EXPECT_EQ(buf.assign_labels([](const Trajectory&) { return 1; }, 2), 3u);
  EXPECT_EQ(buf.assign_labels([](const Trajectory&) { return 1; }, 2), 0u);
  EXPECT_EQ(buf.labeled_count(), 10u);
  buf.relabel_all([](const Trajectory&) { return 2; }, 2);
  for (std::size_t i = 0; i < buf.size(); ++i) EXPECT_EQ(buf.at(i).label, 2);
}

TEST(Replay, LabelerOutOfRangeIsRejected) {
  ReplayBuffer buf(5);
  Rng rng(7);
  buf.append(make_trajectory(1, 1, rng));
  EXPECT_THROW(buf.assign_labels([](const Trajectory&) { return 3; }, 2), InvariantError);
  EXPECT_THROW(buf.assign_labels([](const Trajectory&) { return 0; }, 2), InvariantError);
}

TEST(Replay, LazyCodeRefresh) {
  ReplayBuffer buf(5);
  Rng rng(8);
  buf.append(make_trajectory(3, 1, rng));
  int calls = 0;
  auto enc = [&](const nn::Matrix<float>& s) {
    ++calls;
    return std::vector<int>(static_cast<std::size_t>(s.rows()), 7);
  };
  buf.ensure_codes(0, 1, enc);
  buf.ensure_codes(0, 1, enc);
  EXPECT_EQ(calls, 1);
  EXPECT_EQ(buf.at(0).codes, std::vector<int>(4, 7));
  buf.ensure_codes(0, 2, enc);
  EXPECT_EQ(calls, 2);
}

TEST(Replay, SnapshotRoundTrip) {
  ReplayBuffer buf(4);
  Rng rng(9);
  for (int i = 0; i < 6; ++i) {
    auto t = make_trajectory(2 + i, 2, rng);
    t.label = 1 + i % 2;
    t.episode_return = 0.5 * i;
    t.terminated = i % 3 == 0;
    buf.append(std::move(t));
  }
  Archive ar;
  buf.save(ar, "buffer");
  std::stringstream ss;
  ar.write(ss);
  ReplayBuffer back(1);
  back.load(Archive::read(ss), "buffer");
  ASSERT_EQ(back.size(), buf.size());
  EXPECT_EQ(back.capacity(), 4u);
  EXPECT_EQ(back.inserted(), 6);
  for (std::size_t i = 0; i < buf.size(); ++i) {
    EXPECT_EQ(back.at(i).id, buf.at(i).id);
    EXPECT_EQ(back.at(i).obs, buf.at(i).obs);
    EXPECT_EQ(back.at(i).label, buf.at(i).label);
    EXPECT_EQ(back.at(i).terminated, buf.at(i).terminated);
    EXPECT_EQ(back.at(i).episode_return, buf.at(i).episode_return);
    EXPECT_EQ(back.at(i).alive, buf.at(i).alive);
  }
}
