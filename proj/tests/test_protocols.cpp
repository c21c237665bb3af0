#include <gtest/gtest.h>

#include <set>

#include "dlca/dlca.hpp"

using namespace dlca;

namespace {

BackoffState state(int cw, int counter) {
  BackoffState s;
  s.cw_min = 32;
  s.m = 6;
  s.current_cw = cw;
  s.counter = counter;
  return s;
}

} // namespace

TEST(DcfBasic, SoleTransmitterResetsWindow) {
  RngStream rng(1);
  auto s = state(128, 0);
  auto step = dcf_basic_step(s, SlotView{true, true, Feedback::Ack}, rng);
  EXPECT_EQ(step.state.current_cw, 32);
  EXPECT_TRUE(step.state.valid());
}

TEST(DcfBasic, IdleSlotDecrements) {
  RngStream rng(1);
  auto step = dcf_basic_step(state(32, 3), SlotView{false, false, Feedback::None}, rng);
  EXPECT_EQ(step.state.counter, 2);
  EXPECT_FALSE(step.transmit);
}

TEST(DcfBasic, BusySlotFreezes) {
  RngStream rng(1);
  auto step = dcf_basic_step(state(32, 3), SlotView{false, true, Feedback::None}, rng);
  EXPECT_EQ(step.state.counter, 3);
  EXPECT_TRUE(step.state.frozen);
  step = dcf_basic_step(step.state, SlotView{false, false, Feedback::None}, rng);
  EXPECT_EQ(step.state.counter, 2);
  EXPECT_FALSE(step.state.frozen);
}

TEST(DcfBasic, CollisionDoublesUpToTheCap) {
  RngStream rng(1);
  auto step = dcf_basic_step(state(1024, 0), SlotView{true, true, Feedback::Timeout}, rng);
  EXPECT_EQ(step.state.current_cw, 2048);
  step = dcf_basic_step(state(2048, 0), SlotView{true, true, Feedback::Timeout}, rng);
  EXPECT_EQ(step.state.current_cw, 2048);
  EXPECT_EQ(BackoffState{}.cw_max(), 2048);
}

TEST(RtsCts, CtsIsSuccessTimeoutDoubles) {
  RngStream rng(2);
  auto ok = rts_cts_step(state(64, 0), SlotView{true, true, Feedback::Cts}, rng);
  EXPECT_EQ(ok.state.current_cw, 32);
  auto bad = rts_cts_step(state(64, 0), SlotView{true, true, Feedback::Timeout}, rng);
  EXPECT_EQ(bad.state.current_cw, 128);
}

TEST(Backoff, PropertyCounterAndWindowStayInRange) {
  RngStream rng(5);
  auto s = BackoffState::start(32, 6, rng);
  for (int i = 0; i < 100000; ++i) {
    const bool tx = s.counter == 0;
    const bool busy = tx || rng.bernoulli(0.3);
    const Feedback fb = tx ? (rng.bernoulli(0.5) ? Feedback::Ack : Feedback::Timeout) : Feedback::None;
    s = dcf_basic_step(s, SlotView{tx, busy, fb}, rng).state;
    ASSERT_TRUE(s.valid());
    ASSERT_GE(s.counter, 0);
    ASSERT_LE(s.current_cw, 2048);
  }
}

TEST(Backoff, StartDrawsFromTheInitialWindow) {
  RngStream rng(9);
  std::set<int> seen;
  for (int i = 0; i < 5000; ++i) seen.insert(BackoffState::start(32, 6, rng).counter);
  EXPECT_EQ(*seen.begin(), 0);
  EXPECT_EQ(*seen.rbegin(), 31);
  EXPECT_THROW(BackoffState::start(0, 6, rng), ConfigError);
}

TEST(RtsCts, CollisionShorterThanBasicCollisionForAnyPayload) {
  for (double txop : {1.0, 100.0, 640.0, 8160.0}) {
    TimingParams t;
    t.txop = Micros{txop};
    EXPECT_LT(advance_clock(t, SlotKind::rts_collision), advance_clock(t, SlotKind::basic_collision))
        << txop;
  }
}

TEST(ShTxop, RoundRobinFromTheWinner) {
  auto plan = plan_shtxop(1, 4, 4); // AP 2 in one-based numbering
  EXPECT_EQ(plan.sharing_ap, 1);
  EXPECT_EQ(plan.sub_channel_assignment, (std::vector<int>{1, 2, 3, 0}));
}

TEST(ShTxop, SingleApUsesOnlyTheFirstSubChannel) {
  auto plan = plan_shtxop(0, 1, 4);
  EXPECT_EQ(plan.sub_channel_assignment, (std::vector<int>{0, -1, -1, -1}));
}

TEST(ShTxop, PropertyAssignmentIsABijection) {
  for (int n = 1; n <= 12; ++n)
    for (int f = 1; f <= 8; ++f)
      for (int w = 0; w < n; ++w) {
        auto plan = plan_shtxop(w, n, f);
        std::set<int> aps;
        int used = 0;
        for (int a : plan.sub_channel_assignment)
          if (a >= 0) {
            aps.insert(a);
            ++used;
          }
        EXPECT_EQ(used, std::min(n, f));
        EXPECT_EQ(static_cast<int>(aps.size()), used);
        EXPECT_EQ(plan.sub_channel_assignment[0], w);
      }
}

TEST(ShTxop, SimultaneousWinnersWasteTheTxop) {
  TimingParams t;
  RngStream rng(4);
  ChannelModel c(6, 4, std::vector<double>(24, 2.0));
  std::vector<BackoffState> st(6, state(32, 9));
  st[0].counter = 0;
  st[4].counter = 0;
  auto round = shtxop_round(st, c, t, rng);
  EXPECT_TRUE(round.collided);
  EXPECT_EQ(round.idle_slots, 0);
  for (double b : round.credits) EXPECT_EQ(b, 0.0);
  EXPECT_EQ(round.elapsed, advance_clock(t, SlotKind::shtxop_collision));
  EXPECT_EQ(st[0].current_cw, 64);
  EXPECT_EQ(st[1].counter, 9); // frozen
}

TEST(ShTxop, WinnerSharesTheWideBand) {
  TimingParams t;
  RngStream rng(4);
  ChannelModel c(6, 4, std::vector<double>(24, 2.0));
  std::vector<BackoffState> st(6, state(32, 9));
  st[3].counter = 2;
  auto round = shtxop_round(st, c, t, rng);
  EXPECT_FALSE(round.collided);
  EXPECT_EQ(round.idle_slots, 2);
  EXPECT_EQ(round.plan.sub_channel_assignment, (std::vector<int>{3, 4, 5, 0}));
  EXPECT_NEAR(round.credits[3], 25600.0, 1e-6);
  EXPECT_NEAR(round.credits[0], 25600.0, 1e-6);
  EXPECT_EQ(round.credits[1], 0.0);
  EXPECT_NEAR(round.elapsed.count(), 100.0 + advance_clock(t, SlotKind::shtxop_success).count(), 1e-9);
}

TEST(DlcaSlot, FixedLengthWhateverTheOutcome) {
  const TimingParams t;
  const auto slot = advance_clock(t, SlotKind::dlca_contention_slot);
  const std::vector<int> primary{0, 0};
  for (auto intent : {std::vector<int>{0, kNoIntent}, std::vector<int>{0, 0},
                      std::vector<int>{kNoIntent, kNoIntent}}) {
    resolve_slot(intent, primary, 1, AccessMode::dlca);
    EXPECT_EQ(advance_clock(t, SlotKind::dlca_contention_slot), slot);
  }
}

TEST(DlcaSlot, ExamplesFromTheSlotDriver) {
  const std::vector<int> primary{0, 0};
  auto one = resolve_slot(std::vector<int>{0, kNoIntent}, primary, 1, AccessMode::dlca);
  EXPECT_EQ(one.feedback[0], Feedback::Cts);
  EXPECT_EQ(one.observation[1], 1);
  auto both = resolve_slot(std::vector<int>{0, 0}, primary, 1, AccessMode::dlca);
  EXPECT_EQ(both.feedback[0], Feedback::Timeout);
  EXPECT_EQ(both.feedback[1], Feedback::Timeout);
  auto none = resolve_slot(std::vector<int>{kNoIntent, kNoIntent}, primary, 1, AccessMode::dlca);
  EXPECT_EQ(none.observation[0], 0);
  EXPECT_EQ(none.observation[1], 0);
}
